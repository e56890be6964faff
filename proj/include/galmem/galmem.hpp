#pragma once

#include "galmem/error.hpp"
#include "galmem/bits.hpp"
#include "galmem/gf2.hpp"
#include "galmem/rng.hpp"
#include "galmem/parallel.hpp"
#include "galmem/rational.hpp"
#include "galmem/qod.hpp"
#include "galmem/memory.hpp"
#include "galmem/hdc.hpp"
#include "galmem/dag.hpp"
#include "galmem/counterfactual.hpp"
