#pragma once

// Shared fixtures and brute-force oracles for the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kfuse/fusion_optimizer.hpp"
#include "kfuse/fusion_space.hpp"

namespace kfuse::testing {

inline FeatureSetPtr monomials(std::initializer_list<unsigned> powers, Interval domain = {-10.0, 10.0}) {
    std::vector<Feature> fs;
    for (unsigned p : powers) fs.emplace_back(Primitive::monomial(p));
    return FeatureSet::create(std::move(fs), {domain});
}

// {1, x, x^2} and {x^2, x^3} on [-10, 10], canonically aligned.
inline FusionBasisPtr cubic_basis() {
    return align_canonical(*FusionBasis::build(monomials({0, 1, 2}), monomials({2, 3})));
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
    std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }

    Vector normal_vector(std::size_t n) {
        Vector v(static_cast<Eigen::Index>(n));
        for (auto& x : v) x = normal();
        return v;
    }

    std::vector<Point> points(std::size_t n, double lo, double hi) {
        std::vector<Point> out(n);
        for (auto& p : out) p = {uniform(lo, hi)};
        return out;
    }

    std::mt19937_64& engine() { return gen_; }

private:
    std::mt19937_64 gen_;
};

// Mutually independent on [-2, 2]. Some subsets, such as exp(0.7x), exp(-0.7x),
// x and x^3, are close to dependent, which keeps the solvers honest.
inline std::vector<Feature> feature_pool() {
    return {Primitive::monomial(0), Primitive::monomial(1),    Primitive::monomial(2), Primitive::monomial(3),
            Primitive::exponential(0.7), Primitive::exponential(-0.7), Primitive::sine(1.0),
            Primitive::cosine(2.0)};
}

inline constexpr Interval kPoolDomain{-2.0, 2.0};

inline std::vector<Feature> random_features(Rng& rng, std::size_t count) {
    auto pool = feature_pool();
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(count), pool.end());
    return pool;
}

// Two agents with 0-2 shared features and 1-2 exclusive ones each.
struct RandomPair {
    FeatureSetPtr first;
    FeatureSetPtr second;
    std::size_t shared = 0;
};

inline RandomPair random_pair(Rng& rng) {
    auto pool = feature_pool();
    std::shuffle(pool.begin(), pool.end(), rng.engine());
    const std::size_t shared = rng.index(3);
    const std::size_t own1 = 1 + rng.index(2);
    const std::size_t own2 = 1 + rng.index(2);
    std::vector<Feature> a(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shared));
    std::vector<Feature> b = a;
    auto it = pool.begin() + static_cast<std::ptrdiff_t>(shared);
    a.insert(a.end(), it, it + static_cast<std::ptrdiff_t>(own1));
    it += static_cast<std::ptrdiff_t>(own1);
    b.insert(b.begin(), it, it + static_cast<std::ptrdiff_t>(own2));
    std::shuffle(a.begin(), a.end(), rng.engine());
    return {FeatureSet::create(std::move(a), {kPoolDomain}), FeatureSet::create(std::move(b), {kPoolDomain}), shared};
}

inline AgentFunction random_agent_function(Rng& rng, const FeatureSetPtr& fs) {
    return {fs, rng.normal_vector(fs->size())};
}

// Squared H-norm as the smallest ||c1||^2 + ||c2||^2 over all raw decompositions
// f = sum c1_j phi1_j + sum c2_j phi2_j. The dependency directions are found
// from a full-pivot LU of the raw evaluation matrix on independent probes.
inline double min_decomposition_norm2(const FeatureSet& first, const FeatureSet& second, const Vector& c1,
                                      const Vector& c2, Rng& rng) {
    std::vector<Feature> raw = first.features();
    raw.insert(raw.end(), second.features().begin(), second.features().end());
    const auto& dom = first.domain().front();
    const auto probes = rng.points(6 * raw.size(), dom.lo, dom.hi);
    const Matrix e = evaluation_matrix(raw, probes);
    Eigen::FullPivLU<Matrix> lu(e);
    lu.setThreshold(1e-10);
    Vector c(static_cast<Eigen::Index>(raw.size()));
    c << c1, c2;
    if (lu.rank() == static_cast<Eigen::Index>(raw.size())) return c.squaredNorm();
    const Matrix k = lu.kernel();
    const Vector t = k.colPivHouseholderQr().solve(-c);
    return (c + k * t).squaredNorm();
}

// Grid-plus-refine minimizer of the fusion objective. Ties in the objective are
// broken toward the smaller (a, b), which reproduces the minimum-norm choice.
struct BruteForceFusion {
    double a = 0.0;
    double b = 0.0;
    double objective = 0.0;
};

inline BruteForceFusion brute_force_fuse(const FusionFunction& f1, const FusionFunction& f2,
                                         const DissimilarityBasis& family, double ridge, double grid_step = 1e-3) {
    std::vector<double> p;
    std::vector<double> q;
    for (const auto& bk : family.vectors()) {
        p.push_back(h_inner_product(f1, bk));
        q.push_back(h_inner_product(f2, bk));
    }
    // Direct residual form in extended precision, used for refinement.
    auto objective = [&](double a, double b) {
        long double s = 0.0L;
        for (std::size_t k = 0; k < p.size(); ++k) {
            const long double v = static_cast<long double>(a) * p[k] + static_cast<long double>(b) * q[k];
            s += (v - p[k]) * (v - p[k]) + (v - q[k]) * (v - q[k]);
        }
        long double norm2 = 0.0L;
        for (Eigen::Index i = 0; i < f1.coeffs().size(); ++i) {
            const long double c =
                static_cast<long double>(a) * f1.coeffs()(i) + static_cast<long double>(b) * f2.coeffs()(i);
            norm2 += c * c;
        }
        return s + ridge * norm2;
    };
    // Expanded form for the coarse grid.
    double pp = 0.0, pq = 0.0, qq = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        pp += p[k] * p[k];
        pq += p[k] * q[k];
        qq += q[k] * q[k];
    }
    const double g11 = h_inner_product(f1, f1);
    const double g12 = h_inner_product(f1, f2);
    const double g22 = h_inner_product(f2, f2);
    const double caa = 2.0 * pp + ridge * g11;
    const double cab = 2.0 * (2.0 * pq + ridge * g12);
    const double cbb = 2.0 * qq + ridge * g22;
    const double ca = -2.0 * (pp + pq);
    const double cb = -2.0 * (pq + qq);
    const double c0 = pp + qq;

    struct Best {
        double a, b;
        long double j;
    };
    const int steps = static_cast<int>(std::lround(6.0 / grid_step));
    constexpr double kLo = -3.0;
    const double step = 6.0 / steps;

    // Pass 1: lowest objective on the grid, then a shrinking pattern search.
    Best best{0.0, 0.0, c0};
    for (int i = 0; i <= steps; ++i) {
        const double a = kLo + step * i;
        const double base = c0 + ca * a + caa * a * a;
        const double lin = cb + cab * a;
        for (int j = 0; j <= steps; ++j) {
            const double b = kLo + step * j;
            const double j_ab = base + (lin + cbb * b) * b;
            if (j_ab < best.j) best = {a, b, j_ab};
        }
    }
    // Local (2K+1)^2 grids around the current point, recentred until the
    // centre wins and then shrunk. accept(cand, cur) must be a strict
    // improvement so each level terminates.
    auto search = [&](Best start, double h0, auto accept) {
        constexpr int kHalf = 10;
        Best cur = start;
        for (double h = h0; h > 1e-13; h *= 0.25) {
            for (int moves = 0; moves < 1000; ++moves) {
                Best next = cur;
                for (int da = -kHalf; da <= kHalf; ++da) {
                    for (int db = -kHalf; db <= kHalf; ++db) {
                        if (da == 0 && db == 0) continue;
                        const double a = cur.a + da * h;
                        const double b = cur.b + db * h;
                        const Best cand{a, b, objective(a, b)};
                        if (accept(cand, next)) next = cand;
                    }
                }
                if (next.a == cur.a && next.b == cur.b) break;
                cur = next;
            }
        }
        return cur;
    };
    best.j = objective(best.a, best.b);
    best = search(best, step / 10, [](const Best& c, const Best& cur) { return c.j < cur.j; });

    // Pass 2: among near-optimal points, walk toward the smallest (a, b).
    // The ceiling admits rounding noise only, so a strictly convex objective
    // leaves the pass-1 point where it is.
    // (a, b) are doubles, so allow for their rounding as well.
    constexpr long double eps = std::numeric_limits<long double>::epsilon();
    constexpr long double step_eps = std::numeric_limits<double>::epsilon();
    const long double ceiling = best.j + 4 * eps * std::abs(best.j) + 1e3L * step_eps * step_eps * (c0 + caa + cbb);
    best = search(best, 0.1, [ceiling](const Best& c, const Best& cur) {
        return c.j <= ceiling && c.a * c.a + c.b * c.b < cur.a * cur.a + cur.b * cur.b;
    });
    return {best.a, best.b, static_cast<double>(best.j)};
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace kfuse::testing
