#pragma once

#include <cstddef>
#include <functional>

namespace radsel {

/// Caps worker threads used by all parallel loops. 0 restores the hardware default.
void set_max_threads(int threads);
int max_threads();

/// Runs body(i) for i in [0, count). Work items must be independent; callers that
/// reduce results do so afterwards in index order, which keeps every result
/// independent of the thread count.
void parallel_for(std::size_t count, const std::function<void(std::size_t)> &body);

} // namespace radsel
