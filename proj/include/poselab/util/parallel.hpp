#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace poselab {

int default_thread_count();
void set_default_thread_count(int n);

// Static block partition over [0, n). Each index is processed exactly once
// and results must be written to index-owned slots, so the outcome does not
// depend on the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  int threads = 0);

}  // namespace poselab
