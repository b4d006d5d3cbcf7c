#pragma once

// Dense inner-product kernels used on the batch paths (Gram assembly, grid
// evaluation, dissimilarity sums). Each kernel has a scalar reference and an
// AVX2/FMA variant; the variant is chosen once at startup from CPUID and can
// be overridden for equivalence testing.

#include <cstddef>
#include <span>
#include <string_view>

namespace kfuse::simd {

enum class Backend { Scalar, Avx2 };

std::string_view backend_name(Backend b) noexcept;

// Whether the running CPU can execute the given backend.
bool backend_supported(Backend b) noexcept;

Backend active_backend() noexcept;

// Forces a backend. Returns false (and changes nothing) if unsupported.
bool set_backend(Backend b) noexcept;

// Sum of a[i]*b[i]. Sizes must match.
double dot(std::span<const double> a, std::span<const double> b) noexcept;

// y = A x for a row-major rows x cols matrix.
void gemv(std::span<const double> a, std::size_t rows, std::size_t cols,
          std::span<const double> x, std::span<double> y) noexcept;

namespace scalar {
double dot(const double* a, const double* b, std::size_t n) noexcept;
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) noexcept;
}  // namespace scalar

namespace avx2 {
bool compiled() noexcept;
double dot(const double* a, const double* b, std::size_t n) noexcept;
void gemv(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) noexcept;
}  // namespace avx2

}  // namespace kfuse::simd
