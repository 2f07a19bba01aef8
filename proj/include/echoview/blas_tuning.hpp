#pragma once

// OpenBLAS's dynamic dispatch reads CPUID at library-load time; virtualized
// CPUs with masked CPUID vendor strings make it fall back to the SSE2
// "Prescott" kernels, which run the GEMMs here at half speed even though
// the hardware has AVX2+FMA. The selector only honors OPENBLAS_CORETYPE
// when it is set before the library constructor runs, so the fix is to
// re-exec the process once with the variable in place. An explicit user
// setting always wins.

#if defined(ECHOVIEW_USE_BLAS) && defined(__x86_64__) && defined(__GLIBC__)
#include <cpuid.h>
#include <cstdlib>
#include <cstring>
#include <unistd.h>

extern "C" char* openblas_get_corename(void) __attribute__((weak));

namespace echoview {

inline void ensure_fast_blas(char** argv) {
  if (std::getenv("OPENBLAS_CORETYPE")) return;
  if (!&openblas_get_corename) return;
  unsigned a = 0, b = 0, c = 0, d = 0;
  if (!__get_cpuid_count(7, 0, &a, &b, &c, &d) || !(b & (1u << 5))) return;  // needs AVX2
  if (std::strcmp(openblas_get_corename(), "Prescott") != 0) return;
  setenv("OPENBLAS_CORETYPE", "HASWELL", 1);
  execv("/proc/self/exe", argv);
}

}  // namespace echoview

#else

namespace echoview {
inline void ensure_fast_blas(char**) {}
}  // namespace echoview

#endif
