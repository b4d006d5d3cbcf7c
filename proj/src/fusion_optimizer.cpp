#include "kfuse/fusion_optimizer.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "kfuse/errors.hpp"
#include "kfuse/simd/kernels.hpp"

namespace kfuse {

namespace {

// Relative eigenvalue floor below which the 2x2 system counts as singular.
constexpr double kSingularTol = 1e-12;

void check_same_basis(const FusionFunction& f, const FusionBasisPtr& basis) {
    if (f.basis()->id() != basis->id()) {
        throw BindingError("function and dissimilarity family use different fusion bases");
    }
}

void check_finite(const FusionFunction& f) {
    if (!f.coeffs().allFinite()) {
        throw InputError("fusion input has non-finite coefficients");
    }
}

}  // namespace

DissimilarityBasis::DissimilarityBasis(FusionBasisPtr basis, std::vector<FusionFunction> vectors, std::string source)
    : basis_(std::move(basis)), vectors_(std::move(vectors)), source_(std::move(source)) {
    if (vectors_.empty()) {
        throw PreconditionError("dissimilarity family is empty");
    }
    const auto r = static_cast<Eigen::Index>(basis_->rank());
    stacked_.resize(static_cast<Eigen::Index>(vectors_.size()), r);
    for (std::size_t k = 0; k < vectors_.size(); ++k) {
        check_same_basis(vectors_[k], basis_);
        stacked_.row(static_cast<Eigen::Index>(k)) = vectors_[k].coeffs().transpose();
    }
}

DissimilarityBasis DissimilarityBasis::kernel_sections(const FusionBasisPtr& basis, std::span<const Point> anchors) {
    std::vector<FusionFunction> vectors;
    vectors.reserve(anchors.size());
    for (const auto& x : anchors) {
        vectors.push_back(FusionFunction::section(basis, x));
    }
    return {basis, std::move(vectors), "kernel_sections(n=" + std::to_string(anchors.size()) + ")"};
}

DissimilarityBasis DissimilarityBasis::sampled_kernel_sections(const FusionBasisPtr& basis, std::size_t count,
                                                               double lo, double hi, std::uint64_t seed) {
    if (basis->input_dim() != 1) {
        throw PreconditionError("sampled kernel sections are defined for scalar inputs");
    }
    if (!(lo < hi)) {
        throw PreconditionError("anchor range must satisfy lo < hi");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<Point> anchors(count);
    for (auto& a : anchors) a = {dist(rng)};
    auto family = kernel_sections(basis, anchors);
    std::ostringstream os;
    os << "kernel_sections(n=" << count << ", range=[" << lo << "," << hi << "], seed=" << seed << ")";
    family.source_ = os.str();
    return family;
}

DissimilarityBasis DissimilarityBasis::orthonormal(const FusionBasisPtr& basis) {
    std::vector<FusionFunction> vectors;
    const auto r = static_cast<Eigen::Index>(basis->rank());
    for (Eigen::Index k = 0; k < r; ++k) {
        vectors.emplace_back(basis, Vector::Unit(r, k));
    }
    return {basis, std::move(vectors), "psi_basis"};
}

std::size_t DissimilarityBasis::span_rank(double tol) const {
    const Matrix dense = stacked_;
    Eigen::JacobiSVD<Matrix> svd(dense);
    const Vector& s = svd.singularValues();
    if (s.size() == 0 || !(s(0) > 0.0)) return 0;
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s(i) > tol * s(0)) ++rank;
    }
    return rank;
}

Vector DissimilarityBasis::project(const FusionFunction& f) const {
    check_same_basis(f, basis_);
    Vector out(stacked_.rows());
    simd::gemv({stacked_.data(), static_cast<std::size_t>(stacked_.size())}, static_cast<std::size_t>(stacked_.rows()),
               static_cast<std::size_t>(stacked_.cols()), {f.coeffs().data(), static_cast<std::size_t>(f.coeffs().size())},
               {out.data(), static_cast<std::size_t>(out.size())});
    return out;
}

double dissimilarity(const FusionFunction& f, const FusionFunction& g, const DissimilarityBasis& family) {
    check_same_basis(f, family.basis());
    check_same_basis(g, family.basis());
    return family.project(FusionFunction(f.basis(), f.coeffs() - g.coeffs())).squaredNorm();
}

double fusion_objective(const FusionFunction& f1, const FusionFunction& f2, const DissimilarityBasis& family,
                        double ridge, double a, double b) {
    const FusionFunction combo(f1.basis(), a * f1.coeffs() + b * f2.coeffs());
    return dissimilarity(combo, f1, family) + dissimilarity(combo, f2, family) +
           ridge * h_inner_product(combo, combo);
}

FusionResult fuse(const FusionFunction& f1, const FusionFunction& f2, const DissimilarityBasis& family, double ridge) {
    if (!(ridge >= 0.0) || !std::isfinite(ridge)) {
        throw PreconditionError("fusion ridge must be finite and non-negative");
    }
    check_finite(f1);
    check_finite(f2);
    check_same_basis(f1, family.basis());
    check_same_basis(f2, family.basis());

    const Vector p = family.project(f1);
    const Vector q = family.project(f2);
    const double pp = p.squaredNorm();
    const double qq = q.squaredNorm();
    const double pq = p.dot(q);
    const double g11 = f1.coeffs().squaredNorm();
    const double g22 = f2.coeffs().squaredNorm();
    const double g12 = f1.coeffs().dot(f2.coeffs());

    // Half the gradient of the objective is M (a, b)^T - rhs.
    Eigen::Matrix2d m;
    m << 2.0 * pp + ridge * g11, 2.0 * pq + ridge * g12, 2.0 * pq + ridge * g12, 2.0 * qq + ridge * g22;
    const Eigen::Vector2d rhs(pp + pq, pq + qq);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m);
    const Eigen::Vector2d& mu = eig.eigenvalues();
    const double top = std::max(std::abs(mu(0)), std::abs(mu(1)));
    Eigen::Vector2d ab = Eigen::Vector2d::Zero();
    bool degenerate = false;
    for (int i = 0; i < 2; ++i) {
        if (top > 0.0 && mu(i) > kSingularTol * top) {
            ab += eig.eigenvectors().col(i) * (eig.eigenvectors().col(i).dot(rhs) / mu(i));
        } else {
            degenerate = true;
        }
    }

    FusionResult out{ab(0), ab(1), FusionFunction(f1.basis(), ab(0) * f1.coeffs() + ab(1) * f2.coeffs()), 0.0,
                     degenerate};
    out.objective = fusion_objective(f1, f2, family, ridge, out.a, out.b);
    return out;
}

}  // namespace kfuse
