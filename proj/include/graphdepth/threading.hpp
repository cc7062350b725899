#pragma once

namespace graphdepth {

// Global worker-thread count for the parallel kernels. Defaults to 1 so
// timings and training runs are deterministic unless explicitly widened.
int num_threads();
void set_num_threads(int n);

}  // namespace graphdepth
