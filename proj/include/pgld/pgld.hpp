#ifndef PGLD_PGLD_HPP
#define PGLD_PGLD_HPP

#include "pgld/action.hpp"
#include "pgld/control.hpp"
#include "pgld/grid.hpp"
#include "pgld/harness.hpp"
#include "pgld/montecarlo.hpp"
#include "pgld/noise.hpp"
#include "pgld/operators.hpp"
#include "pgld/rng.hpp"
#include "pgld/skeleton.hpp"
#include "pgld/stepper.hpp"
#include "pgld/velocity.hpp"

#endif
