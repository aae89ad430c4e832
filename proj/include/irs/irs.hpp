#pragma once

#include "irs/baselines.hpp"
#include "irs/combinatorics.hpp"
#include "irs/consensus.hpp"
#include "irs/errors.hpp"
#include "irs/estimator.hpp"
#include "irs/features.hpp"
#include "irs/parallel.hpp"
#include "irs/report.hpp"
#include "irs/retrieval.hpp"
#include "irs/rng.hpp"
#include "irs/simulator.hpp"

namespace irs {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace irs
