#include "skimread/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace skimread {

int max_workers() {
#ifdef _OPENMP
  int workers = omp_get_max_threads();
#else
  int workers = 1;
#endif
  if (const char* env = std::getenv("SKIMREAD_THREADS")) {
    try {
      const int cap = std::stoi(env);
      if (cap >= 1 && cap < workers) workers = cap;
    } catch (...) {
      // Unparseable value: keep the default.
    }
  }
  return workers;
}

namespace detail {

void parallel_for_impl(std::size_t n, int workers, void* ctx,
                       void (*body)(void*, std::size_t)) {
  if (workers < 0) workers = max_workers();
#ifdef _OPENMP
  if (workers > 1 && n > 1) {
    const std::int64_t count = static_cast<std::int64_t>(n);
#pragma omp parallel for num_threads(workers) schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
      body(ctx, static_cast<std::size_t>(i));
    }
    return;
  }
#endif
  for (std::size_t i = 0; i < n; ++i) body(ctx, i);
}

}  // namespace detail
}  // namespace skimread
