#pragma once

#include <functional>

#include "poselab/params.hpp"
#include "poselab/tape.hpp"
#include "poselab/util/rng.hpp"

namespace poselab {

// Mini-batch Adam driver. Builds one loss graph per sample (parallel across
// the batch), then accumulates gradients in index order so results do not
// depend on the thread count. Returns the mean loss over the epoch.
double run_epoch(ParamSet& params, const std::vector<std::size_t>& order,
                 int batch, double lr,
                 const std::function<NodeId(Tape&, std::size_t,
                                            const std::vector<NodeId>&)>& loss_builder,
                 int threads);

// In-place deterministic Fisher-Yates.
void shuffle_indices(std::vector<std::size_t>& order, Rng& rng);

}  // namespace poselab
