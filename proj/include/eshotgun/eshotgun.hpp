#pragma once

#include "eshotgun/types.hpp"
#include "eshotgun/random.hpp"
#include "eshotgun/gp.hpp"
#include "eshotgun/acquisition.hpp"
#include "eshotgun/design.hpp"
#include "eshotgun/inner_opt.hpp"
#include "eshotgun/fields.hpp"
#include "eshotgun/pareto.hpp"
#include "eshotgun/strategies.hpp"
#include "eshotgun/benchmarks.hpp"
#include "eshotgun/stats.hpp"
#include "eshotgun/harness.hpp"
