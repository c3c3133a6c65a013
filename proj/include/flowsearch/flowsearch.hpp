#pragma once

#include "flowsearch/analytic_flow.hpp"
#include "flowsearch/harness.hpp"
#include "flowsearch/interpolants.hpp"
#include "flowsearch/rewards.hpp"
#include "flowsearch/rng.hpp"
#include "flowsearch/samplers.hpp"
#include "flowsearch/sde_engine.hpp"
#include "flowsearch/types.hpp"
