#pragma once

#include <cstddef>
#include <functional>

namespace mgua {

// Worker count: MGUA_THREADS when set (clamped to [1, 64]), otherwise the
// hardware concurrency. Results never depend on it: every parallel loop
// writes to disjoint, index-addressed slots.
int thread_budget();
void set_thread_budget_override(int count);  // 0 clears the override

// Static block partition of [0, n) over the thread budget. The callable must
// only touch state owned by index i.
void parallel_for(size_t n, const std::function<void(size_t)>& body);

}  // namespace mgua
