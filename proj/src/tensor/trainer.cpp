#include "poselab/trainer.hpp"

#include <map>

#include "poselab/util/parallel.hpp"

namespace poselab {

double run_epoch(ParamSet& params, const std::vector<std::size_t>& order,
                 int batch, double lr,
                 const std::function<NodeId(Tape&, std::size_t,
                                            const std::vector<NodeId>&)>& loss_builder,
                 int threads) {
    double epoch_loss = 0;
    std::size_t done = 0;
    while (done < order.size()) {
        std::size_t b = std::min<std::size_t>(std::size_t(batch),
                                              order.size() - done);
        std::vector<std::map<NodeId, Tensor>> grads(b);
        std::vector<std::vector<NodeId>> ids(b);
        std::vector<double> losses(b, 0.0);
        parallel_for(
            b,
            [&](std::size_t i) {
                Tape tape;
                ids[i] = params.register_on(tape, true);
                NodeId loss = loss_builder(tape, order[done + i], ids[i]);
                losses[i] = tape.val(loss).data[0];
                grads[i] = tape.backward(loss, ids[i]);
            },
            threads);
        for (std::size_t i = 0; i < b; ++i) {
            params.accumulate(grads[i], ids[i], 1.0 / double(b));
            epoch_loss += losses[i];
        }
        params.step(lr, OptScheme::adam);
        done += b;
    }
    return epoch_loss / double(order.size());
}

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[std::size_t(rng.uniform_int(uint64_t(i)))]);
}

}  // namespace poselab
