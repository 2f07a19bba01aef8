#pragma once

#include <cstdint>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace echoview {

namespace detail {
// Training churns through multi-megabyte tensors every batch; without this
// glibc serves them via mmap/munmap and every batch pays the page faults
// again. Keeping large blocks on the heap lets the allocator reuse them.
inline const bool malloc_tuned = [] {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  return true;
}();
}  // namespace detail

inline void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

inline int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// Each index writes a disjoint slice of the output, so results do not
// depend on the thread count.
template <typename F>
void parallel_for(int64_t n, F&& f) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace echoview
