#pragma once

#include <functional>

#include "sti/volume.hpp"

namespace sti {

// Upper bound on worker threads for internal parallel loops (>= 1).
void set_thread_count(int threads);
int thread_count();

// Runs body(i) for i in [0, count). Work is split into contiguous blocks;
// every index is processed exactly once and bodies must not share writes, so
// results do not depend on the thread count.
void parallel_for(Index count, const std::function<void(Index)>& body);

}  // namespace sti
