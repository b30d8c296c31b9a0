#pragma once

#include <cstddef>
#include <cstdint>

namespace skimread {

/// Worker count for data-parallel loops: the OpenMP default, optionally
/// capped by the SKIMREAD_THREADS environment variable. Returns 1 when the
/// build has no OpenMP support.
int max_workers();

namespace detail {
void parallel_for_impl(std::size_t n, int workers, void* ctx,
                       void (*body)(void*, std::size_t));
}

/// Runs body(i) for i in [0, n). Iterations must be independent: each writes
/// only its own output slot, so serial and parallel execution are bit
/// identical. With workers <= 1 this is a plain loop.
template <typename F>
void parallel_for(std::size_t n, F&& body, int workers = -1) {
  auto thunk = [](void* ctx, std::size_t i) { (*static_cast<F*>(ctx))(i); };
  detail::parallel_for_impl(n, workers, &body, thunk);
}

}  // namespace skimread
