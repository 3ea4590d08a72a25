#pragma once

#include "twoscale/error.hpp"
#include "twoscale/mesh.hpp"
#include "twoscale/fe_space.hpp"
#include "twoscale/dofmap.hpp"
#include "twoscale/assembly.hpp"
#include "twoscale/linear_system.hpp"
#include "twoscale/stokes.hpp"
#include "twoscale/cell.hpp"
#include "twoscale/dispersion.hpp"
#include "twoscale/macro.hpp"
#include "twoscale/scheme.hpp"
#include "twoscale/expression.hpp"
#include "twoscale/scenario.hpp"
#include "twoscale/pipeline.hpp"
#include "twoscale/fd_oracle.hpp"
#include "twoscale/verify.hpp"
