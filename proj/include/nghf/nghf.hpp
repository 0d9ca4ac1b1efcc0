#pragma once

#include "nghf/curvature.hpp"
#include "nghf/error.hpp"
#include "nghf/harness/config.hpp"
#include "nghf/harness/experiment.hpp"
#include "nghf/harness/run_log.hpp"
#include "nghf/network.hpp"
#include "nghf/optimizers.hpp"
#include "nghf/param_space.hpp"
#include "nghf/sequence/corpus_io.hpp"
#include "nghf/sequence/decode.hpp"
#include "nghf/sequence/lattice.hpp"
#include "nghf/sequence/objective.hpp"
#include "nghf/sequence/posteriors.hpp"
#include "nghf/sequence/world.hpp"
#include "nghf/solver.hpp"
