#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "twoscale/pipeline.hpp"

using namespace twoscale;
namespace fs = std::filesystem;

namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string message_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

Settings small_settings(const fs::path& out) {
  Settings s;
  for (const char* o : {"geometry = two_rects", "cell.h = 0.1", "sweep.n = 9", "sweep.p_min = -2",
                        "sweep.p_max = 2", "macro.n1 = 6", "macro.n2 = 11", "macro.T = 0.4", "macro.dt = 0.1",
                        "macro.f = 20*ball(0.5,0.5,0.25)", "macro.snapshot_every = 2"})
    s.apply_override(o);
  s.set("output", out.string());
  return s;
}

}  // namespace

TEST(Expression, ArithmeticAndPrecedence) {
  EXPECT_DOUBLE_EQ(Expression("1+2*3")(0, 0), 7.0);
  EXPECT_DOUBLE_EQ(Expression("(1+2)*3")(0, 0), 9.0);
  EXPECT_DOUBLE_EQ(Expression("2^3^2")(0, 0), 512.0);
  EXPECT_DOUBLE_EQ(Expression("-2^2")(0, 0), -4.0);
  EXPECT_DOUBLE_EQ(Expression("8/4/2")(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(Expression("1e-3*1000")(0, 0), 1.0);
}

TEST(Expression, VariablesAndFunctions) {
  const Expression e("x + 2*y - t + u^2");
  EXPECT_DOUBLE_EQ(e(1, 2, 3, 4), 1 + 4 - 3 + 16);
  EXPECT_TRUE(e.uses('u'));
  EXPECT_FALSE(Expression("sin(pi*x1)*y2")(0.5, 3.0) != 3.0);
  EXPECT_FALSE(Expression("1-2*x").uses('u'));
  EXPECT_NEAR(Expression("exp(log(3))")(0, 0), 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(Expression("max(abs(-3), min(2, 5))")(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(Expression("pow(2, 10)")(0, 0), 1024.0);
  EXPECT_DOUBLE_EQ(Expression("sign(-0.1)")(0, 0), -1.0);
  EXPECT_DOUBLE_EQ(Expression("1/(0.0001+abs(1-2*u))")(0, 0, 0, 0.5), 1e4);
}

TEST(Expression, IndicatorFunctions) {
  const Expression ball("ball(0.5,0.5,0.25)");
  EXPECT_EQ(ball(0.5, 0.5), 1.0);
  EXPECT_EQ(ball(0.5, 0.76), 0.0);
  const Expression rect("rect(0,1,1,2)");
  EXPECT_EQ(rect(0.5, 1.5), 1.0);
  EXPECT_EQ(rect(0.5, 0.5), 0.0);
}

TEST(Expression, SyntaxErrorsNameTheColumn) {
  for (const char* bad : {"1+", "sin(x", "2*)", "foo(1)", "x y", "1..2", "max(1)"}) {
    EXPECT_EQ(code_of([&] { Expression e(bad); }), ErrorCode::ExpressionSyntax) << bad;
  }
  EXPECT_NE(message_of([] { Expression e("1 + * 2"); }).find("column 5"), std::string::npos);
}

TEST(Settings, ParsesCommentsAndRejectsUnknownKeys) {
  Settings s;
  std::istringstream in("# comment\n  macro.dt = 0.1  # trailing\n\nG1 = 0.5\n");
  s.parse(in);
  EXPECT_EQ(s.get("macro.dt"), "0.1");
  EXPECT_EQ(s.get("G1"), "0.5");
  std::istringstream unknown("macro.dtt = 0.1\n");
  const std::string msg = message_of([&] { s.parse(unknown, "run.txt"); });
  EXPECT_NE(msg.find("run.txt:1"), std::string::npos);
  EXPECT_NE(msg.find("macro.dtt"), std::string::npos);
  std::istringstream no_eq("macro.dt 0.1\n");
  EXPECT_EQ(code_of([&] { s.parse(no_eq); }), ErrorCode::ConfigInvalid);
}

TEST(Scenario, DefaultsDescribeTheReferenceRun) {
  const Scenario sc = Scenario::from(Settings{});
  EXPECT_EQ(sc.geometry.kind, GeometryKind::Disk);
  EXPECT_EQ(sc.n1, 50);
  EXPECT_EQ(sc.sweep_n, 101);
  EXPECT_DOUBLE_EQ(sc.T, 2.0);
  EXPECT_DOUBLE_EQ(sc.iteration.tol, 1e-7);
  EXPECT_DOUBLE_EQ(sc.f(0.5, 0.5), 1000.0);
  EXPECT_DOUBLE_EQ(sc.f(0.9, 1.5), 0.0);
  EXPECT_DOUBLE_EQ(sc.g(0.5, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(sc.nonlinearity(1)(0.25), 0.5);
  EXPECT_TRUE(Scenario::from([] {
                Settings s;
                s.set("G2", "0.3");
                return s;
              }())
                  .nonlinearity(2)
                  .is_constant());
}

TEST(Scenario, InvalidFieldsAreNamed) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"stokes.mu=-1", "stokes.mu"},     {"macro.dt=0.3", "macro.dt"},
      {"sweep.n=1", "sweep.n"},           {"macro.sampling=cubic", "macro.sampling"},
      {"geometry=hexagon", "geometry"},   {"iteration.mode=newton", "iteration.mode"},
      {"cell.h=abc", "cell.h"},           {"geometry=disk(0.5,0.5,0.7)", "geometry"},
      {"macro.subdomain=0 1 1", "macro.subdomain"}};
  for (const auto& [override, key] : cases) {
    Settings s;
    s.apply_override(override);
    const std::string msg = message_of([&] { Scenario::from(s); });
    EXPECT_EQ(code_of([&] { Scenario::from(s); }), ErrorCode::ConfigInvalid) << override;
    EXPECT_NE(msg.find(key + ":"), std::string::npos) << msg;
  }
  Settings s;
  s.apply_override("macro.g=exp(");
  EXPECT_EQ(code_of([&] { Scenario::from(s); }), ErrorCode::ExpressionSyntax);
  EXPECT_NE(message_of([&] { Scenario::from(s); }).find("macro.g:"), std::string::npos);
}

TEST(Scenario, ParsesParametrisedGeometries) {
  const Geometry d = Scenario::parse_geometry("disk(0.5, 0.5, 0.2)");
  EXPECT_EQ(d.kind, GeometryKind::Disk);
  EXPECT_DOUBLE_EQ(d.radius, 0.2);
  const Geometry r = Scenario::parse_geometry("two_rects(0.1,0.1,0.4,0.9, 0.6,0.1,0.9,0.9)");
  EXPECT_EQ(r.kind, GeometryKind::TwoRects);
  EXPECT_EQ(Scenario::parse_geometry("file:cell.mesh").kind, GeometryKind::Custom);
}

TEST(Pipeline, SimulateWritesOutputsAndReusesTable) {
  const fs::path dir = fs::temp_directory_path() / "twoscale_pipeline_test";
  fs::remove_all(dir);
  const Scenario sc = Scenario::from(small_settings(dir));
  const auto first = simulate(sc, dir);
  EXPECT_FALSE(first.table_reused);
  EXPECT_TRUE(first.result.report.converged);
  ASSERT_EQ(first.mass.size(), 5u);
  EXPECT_EQ(first.mass.front(), 0.0);
  EXPECT_GT(first.mass.back(), 0.0);
  for (const char* f : {"mass.csv", "iterations.csv", "metadata.txt", "snapshots/u_0000.txt", "snapshots/u_0002.txt",
                        "snapshots/u_0004.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_FALSE(fs::exists(dir / "snapshots/u_0001.txt"));

  // metadata.txt is itself a scenario reproducing the run.
  const Scenario again = load_scenario((dir / "metadata.txt").string());
  EXPECT_EQ(again.settings.values(), sc.settings.values());
  const auto second = simulate(again, dir);
  EXPECT_TRUE(second.table_reused);
  ASSERT_EQ(second.mass.size(), first.mass.size());
  for (std::size_t k = 0; k < first.mass.size(); ++k) EXPECT_NEAR(second.mass[k], first.mass[k], 1e-12);
  fs::remove_all(dir);
}

TEST(Pipeline, TableKeyChangesWithCellData) {
  const Scenario a = Scenario::from(small_settings("out"));
  Settings s = small_settings("out");
  s.set("stokes.mu", "0.02");
  const Scenario b = Scenario::from(s);
  EXPECT_NE(cell_tag(a), cell_tag(b));
  s.set("stokes.mu", "0.01");
  EXPECT_EQ(cell_tag(a), cell_tag(Scenario::from(s)));
}
