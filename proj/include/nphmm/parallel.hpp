#pragma once

#include <cstddef>
#include <functional>

namespace nphmm {

// Runs body(0..n-1) on up to `threads` workers (0: hardware concurrency).
// Results must be written by index; the first exception (lowest index) is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& body);

}  // namespace nphmm
