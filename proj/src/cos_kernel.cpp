// Built with -ffast-math so the loop below can call the vector cos from
// libmvec. Inputs are finite by construction; keep anything that touches
// infinities or NaNs out of this file.
#include <cmath>
#include <cstddef>

// One clone per ISA level; the loader picks the best one for the host, so a
// given binary on a given machine always runs the same code path.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__) && !defined(EMBEDLAB_NO_CLONES)
#define EMBEDLAB_COS_CLONES __attribute__((target_clones("avx512f", "avx2", "default")))
#else
#define EMBEDLAB_COS_CLONES
#endif

namespace embedlab::detail {

EMBEDLAB_COS_CLONES
void cos_affine(const double* a, double w, const double* b, double* out, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(w * a[i] + b[i]);
}

}  // namespace embedlab::detail
