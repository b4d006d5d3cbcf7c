#include "kfuse/simd/kernels.hpp"

namespace kfuse::simd::scalar {

double dot(const double* a, const double* b, std::size_t n) noexcept {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) noexcept {
    for (std::size_t r = 0; r < rows; ++r) {
        y[r] = dot(a + r * cols, x, cols);
    }
}

}  // namespace kfuse::simd::scalar
