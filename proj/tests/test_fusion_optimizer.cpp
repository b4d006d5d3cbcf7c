#include <doctest.h>

#include <array>
#include <cmath>

#include "kfuse/errors.hpp"
#include "kfuse/fusion_optimizer.hpp"
#include "test_support.hpp"

using namespace kfuse;
using kfuse::testing::Rng;

TEST_CASE("dissimilarity") {
    const auto basis = kfuse::testing::cubic_basis();
    Rng rng(41);
    const FusionFunction f(basis, rng.normal_vector(4));
    const FusionFunction g(basis, rng.normal_vector(4));
    const auto sections = DissimilarityBasis::sampled_kernel_sections(basis, 40, -10, 10, 7);

    CHECK(dissimilarity(f, f, sections) == 0.0);
    CHECK(std::abs(dissimilarity(f, g, sections) - dissimilarity(g, f, sections)) <=
          1e-12 * dissimilarity(f, g, sections));

    const auto psi = DissimilarityBasis::orthonormal(basis);
    const double d = (f.coeffs() - g.coeffs()).squaredNorm();
    CHECK(std::abs(dissimilarity(f, g, psi) - d) <= 1e-14 * d);

    const FusionFunction b(basis, rng.normal_vector(4));
    const DissimilarityBasis single(basis, {b}, "single");
    const double fb = h_inner_product(f, b);
    CHECK(std::abs(dissimilarity(f, FusionFunction::zero(basis), single) - fb * fb) <= 1e-14 * fb * fb);

    const auto other = kfuse::testing::cubic_basis();
    CHECK_THROWS_AS(dissimilarity(FusionFunction::zero(other), f, sections), BindingError);
}

TEST_CASE("sampled kernel sections") {
    const auto basis = kfuse::testing::cubic_basis();
    const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 40, -10, 10, 2023);
    CHECK(family.size() == 40);
    CHECK(family.span_rank() == 4);
    CHECK(family.spans());
    const auto again = DissimilarityBasis::sampled_kernel_sections(basis, 40, -10, 10, 2023);
    CHECK(family.stacked() == again.stacked());
    const auto one = DissimilarityBasis::sampled_kernel_sections(basis, 1, -10, 10, 1);
    CHECK(one.span_rank() == 1);
    CHECK_FALSE(one.spans());
}

TEST_CASE("fusing with a zero estimate halves the other") {
    const auto basis = kfuse::testing::cubic_basis();
    const FusionFunction f1(basis, Vector::LinSpaced(4, 1.0, 2.5));
    const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 40, -10, 10, 3);
    const auto r = fuse(f1, FusionFunction::zero(basis), family, 0.0);
    CHECK(std::abs(r.a - 0.5) < 1e-12);
    CHECK(r.b == 0.0);
    CHECK(r.degenerate);
    CHECK(kfuse::testing::max_abs(r.fused.coeffs() - 0.5 * f1.coeffs()) < 1e-12);
}

TEST_CASE("fusing identical estimates returns that estimate") {
    const auto basis = kfuse::testing::cubic_basis();
    const FusionFunction f(basis, Vector::LinSpaced(4, -1.0, 1.5));
    const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 40, -10, 10, 4);
    const auto r = fuse(f, f, family, 0.0);
    CHECK(std::abs(r.a - 0.5) < 1e-12);
    CHECK(std::abs(r.b - 0.5) < 1e-12);
    CHECK(r.degenerate);
    CHECK(kfuse::testing::max_abs(r.fused.coeffs() - f.coeffs()) < 1e-12);
}

TEST_CASE("closed form matches the brute-force search") {
    Rng rng(42);
    const auto basis = kfuse::testing::cubic_basis();
    for (int trial = 0; trial < 6; ++trial) {
        const double ridge = std::array{0.0, 1e-3, 1.0}[static_cast<std::size_t>(trial % 3)];
        const FusionFunction f1(basis, rng.normal_vector(4));
        const FusionFunction f2(basis, rng.normal_vector(4));
        const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 10, -1, 1, 100 + trial);
        const auto r = fuse(f1, f2, family, ridge);
        const auto oracle = kfuse::testing::brute_force_fuse(f1, f2, family, ridge);
        CHECK(std::abs(r.a - oracle.a) <= 1e-6);
        CHECK(std::abs(r.b - oracle.b) <= 1e-6);
        CHECK(r.objective <= oracle.objective * (1 + 1e-12) + 1e-14);
    }

    // Identical inputs: every a + b = 1 is optimal and the search must land on the shortest.
    const FusionFunction f(basis, rng.normal_vector(4));
    const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 10, -1, 1, 99);
    const auto oracle = kfuse::testing::brute_force_fuse(f, f, family, 0.0);
    CHECK(std::abs(oracle.a - 0.5) <= 1e-6);
    CHECK(std::abs(oracle.b - 0.5) <= 1e-6);
}

TEST_CASE("the fused pair is never worse than the simple choices") {
    Rng rng(43);
    for (int trial = 0; trial < 30; ++trial) {
        const auto pair = kfuse::testing::random_pair(rng);
        const auto basis = FusionBasis::build(pair.first, pair.second);
        const FusionFunction f1(basis, rng.normal_vector(basis->rank()));
        const FusionFunction f2(basis, rng.normal_vector(basis->rank()));
        const auto family = DissimilarityBasis::sampled_kernel_sections(basis, 12, -2, 2, 500 + trial);
        const double ridge = std::array{0.0, 1e-3, 1.0}[static_cast<std::size_t>(trial % 3)];
        const auto r = fuse(f1, f2, family, ridge);
        for (auto [a, b] : std::array<std::pair<double, double>, 4>{{{1, 0}, {0, 1}, {1, 1}, {0, 0}}}) {
            CHECK(r.objective <= fusion_objective(f1, f2, family, ridge, a, b) * (1 + 1e-12) + 1e-14);
        }
        // Central differences of a quadratic are exact up to rounding.
        const double h = 1e-5;
        const double ga = (fusion_objective(f1, f2, family, ridge, r.a + h, r.b) -
                           fusion_objective(f1, f2, family, ridge, r.a - h, r.b)) / (2 * h);
        const double gb = (fusion_objective(f1, f2, family, ridge, r.a, r.b + h) -
                           fusion_objective(f1, f2, family, ridge, r.a, r.b - h)) / (2 * h);
        CHECK(std::hypot(ga, gb) <= 1e-6 * (1 + std::abs(r.objective)));
    }
}

TEST_CASE("fusion preconditions") {
    const auto basis = kfuse::testing::cubic_basis();
    const auto family = DissimilarityBasis::orthonormal(basis);
    const FusionFunction f(basis, Vector::Ones(4));
    CHECK_THROWS_AS(fuse(f, f, family, -1.0), PreconditionError);
    Vector bad = Vector::Ones(4);
    bad(1) = std::nan("");
    CHECK_THROWS_AS(fuse(f, FusionFunction(basis, bad), family, 0.0), InputError);
    CHECK_THROWS_AS(DissimilarityBasis(basis, {}, "empty"), PreconditionError);
}
