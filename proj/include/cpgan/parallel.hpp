#pragma once

#include <functional>

#include "cpgan/common.hpp"

namespace cpgan {

// Global worker count for op-internal parallelism. Work is always split into
// contiguous chunks processed sequentially within a chunk, so results are
// bitwise identical for any thread count.
int num_threads();
void set_num_threads(int n);

void parallel_for(index_t count,
                  const std::function<void(index_t, index_t)>& body);

}  // namespace cpgan
