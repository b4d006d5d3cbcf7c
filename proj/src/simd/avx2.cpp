#include "kfuse/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define KFUSE_HAVE_AVX2 1
#include <immintrin.h>
#else
#define KFUSE_HAVE_AVX2 0
#endif

namespace kfuse::simd::avx2 {

#if KFUSE_HAVE_AVX2

bool compiled() noexcept { return true; }

namespace {

__attribute__((target("avx2,fma"))) inline double hsum(__m256d v) noexcept {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

__attribute__((target("avx2,fma"))) double dot(const double* a, const double* b, std::size_t n) noexcept {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

__attribute__((target("avx2,fma"))) void gemv(const double* a, std::size_t rows, std::size_t cols,
                                               const double* x, double* y) noexcept {
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = dot(a + r * cols, x, cols);
    }
}

#else

bool compiled() noexcept { return false; }

double dot(const double* a, const double* b, std::size_t n) noexcept { return scalar::dot(a, b, n); }

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) noexcept {
    scalar::gemv(a, rows, cols, x, y);
}

#endif

}  // namespace kfuse::simd::avx2
