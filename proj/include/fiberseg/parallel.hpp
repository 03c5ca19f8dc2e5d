#pragma once

#include <cstddef>
#include <functional>

namespace fiberseg {

/// Worker count used by parallel_for; 1 (the default) runs inline.
void set_thread_count(int n);
int thread_count();

/// Runs fn(i) for i in [0, n). Each index is handled by exactly one worker,
/// so results are deterministic whenever fn(i) writes only to slot i.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace fiberseg
