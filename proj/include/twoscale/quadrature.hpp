#pragma once

#include <vector>

#include <Eigen/Dense>

#include "twoscale/error.hpp"

namespace twoscale {

/// Symmetric triangle rule in barycentric coordinates; weights sum to one, so an integral
/// over a triangle is area * sum_q w_q f(x_q).
struct QuadratureRule {
  int degree = 0;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }
};

namespace detail {

inline void add_orbit3(QuadratureRule& rule, double a, double w) {
  const double b = 1.0 - 2.0 * a;
  rule.points.emplace_back(b, a, a);
  rule.points.emplace_back(a, b, a);
  rule.points.emplace_back(a, a, b);
  for (int i = 0; i < 3; ++i) rule.weights.push_back(w);
}

inline QuadratureRule make_rule(int degree) {
  QuadratureRule rule;
  switch (degree) {
    case 1:
      rule.degree = 1;
      rule.points.emplace_back(1.0 / 3, 1.0 / 3, 1.0 / 3);
      rule.weights.push_back(1.0);
      break;
    case 2:
      rule.degree = 2;
      add_orbit3(rule, 1.0 / 6, 1.0 / 3);
      break;
    case 3:
    case 4:
      // Dunavant, 6 points.
      rule.degree = 4;
      add_orbit3(rule, 0.445948490915965, 0.223381589678011);
      add_orbit3(rule, 0.091576213509771, 0.109951743655322);
      break;
    case 5:
      rule.degree = 5;
      rule.points.emplace_back(1.0 / 3, 1.0 / 3, 1.0 / 3);
      rule.weights.push_back(0.225);
      add_orbit3(rule, 0.470142064105115, 0.132394152788506);
      add_orbit3(rule, 0.101286507323456, 0.125939180544827);
      break;
    default:
      throw Error(ErrorCode::Precondition, "quadrature degree must be in 1..5");
  }
  return rule;
}

}  // namespace detail

inline const QuadratureRule& triangle_rule(int degree) {
  static const QuadratureRule rules[] = {detail::make_rule(1), detail::make_rule(2),
                                         detail::make_rule(3), detail::make_rule(4),
                                         detail::make_rule(5)};
  require(degree >= 1 && degree <= 5, ErrorCode::Precondition, "quadrature degree must be in 1..5");
  return rules[degree - 1];
}

}  // namespace twoscale
