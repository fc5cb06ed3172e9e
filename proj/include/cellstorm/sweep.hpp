#pragma once

#include <vector>

#include "cellstorm/config.hpp"
#include "cellstorm/eval.hpp"
#include "cellstorm/nn.hpp"

namespace cellstorm::sweep {

struct SweepPlan {
    std::vector<double> photons{50, 100, 500, 1000};
    std::vector<int> qualities{70, 80, 90, 100};
    /// Adds an "nn" method next to "classic" when set.
    const nn::WeightArchive* weights = nullptr;
};

/// Simulates one stack per (photons, quality) cell from the same seed, runs
/// every method on it and matches against the ground truth.
eval::SweepReport run_sweep(const config::RunConfig& cfg, const SweepPlan& plan, int threads = 1);

} // namespace cellstorm::sweep
