#pragma once

#include "blocksparse/errors.hpp"
#include "blocksparse/numerics.hpp"
#include "blocksparse/rng.hpp"
#include "blocksparse/model.hpp"
#include "blocksparse/shrinkage.hpp"
#include "blocksparse/state_evolution.hpp"
#include "blocksparse/phase_transition.hpp"
#include "blocksparse/amp.hpp"
#include "blocksparse/experiments.hpp"
#include "blocksparse/csv.hpp"
