#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "kfuse/simd/kernels.hpp"

namespace simd = kfuse::simd;

namespace {

std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> dist;
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

double abs_dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] * b[i]);
    return s;
}

}  // namespace

TEST_CASE("scalar dot matches a hand sum") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{4.0, -5.0, 6.0};
    CHECK(simd::scalar::dot(a.data(), b.data(), 3) == 12.0);
    CHECK(simd::scalar::dot(a.data(), b.data(), 0) == 0.0);
}

TEST_CASE("avx2 dot and gemv agree with the scalar reference") {
    if (!simd::backend_supported(simd::Backend::Avx2)) {
        MESSAGE("AVX2 not available on this machine; skipping");
        return;
    }
    std::mt19937_64 rng(17);
    for (std::size_t n = 0; n <= 67; ++n) {
        const auto a = random_vector(rng, n);
        const auto b = random_vector(rng, n);
        const double ref = simd::scalar::dot(a.data(), b.data(), n);
        const double got = simd::avx2::dot(a.data(), b.data(), n);
        CHECK(std::abs(got - ref) <= 4 * n * 1e-16 * abs_dot(a, b) + 1e-300);
    }
    for (std::size_t rows : {1u, 3u, 8u, 41u}) {
        for (std::size_t cols : {1u, 4u, 5u, 13u}) {
            const auto a = random_vector(rng, rows * cols);
            const auto x = random_vector(rng, cols);
            std::vector<double> y_ref(rows), y_vec(rows);
            simd::scalar::gemv(a.data(), rows, cols, x.data(), y_ref.data());
            simd::avx2::gemv(a.data(), rows, cols, x.data(), y_vec.data());
            for (std::size_t i = 0; i < rows; ++i) {
                std::vector<double> row(a.begin() + static_cast<std::ptrdiff_t>(i * cols),
                                        a.begin() + static_cast<std::ptrdiff_t>((i + 1) * cols));
                CHECK(std::abs(y_vec[i] - y_ref[i]) <= 4 * cols * 1e-16 * abs_dot(row, x) + 1e-300);
            }
        }
    }
}

TEST_CASE("backend can be forced to scalar and restored") {
    const auto before = simd::active_backend();
    REQUIRE(simd::set_backend(simd::Backend::Scalar));
    CHECK(simd::active_backend() == simd::Backend::Scalar);
    const std::vector<double> a{0.5, 0.25, 2.0, 1.0, 3.0};
    const std::vector<double> b{2.0, 4.0, 0.5, -1.0, 1.0};
    CHECK(simd::dot(a, b) == 5.0);
    std::vector<double> y(1);
    simd::gemv(a, 1, 5, b, y);
    CHECK(y[0] == 5.0);
    CHECK(simd::backend_name(simd::Backend::Scalar) == "scalar");
    simd::set_backend(before);
    CHECK(simd::active_backend() == before);
}
