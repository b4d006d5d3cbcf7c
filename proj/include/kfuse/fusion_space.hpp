#pragma once

// The fusion space H of two agents: the RKHS with kernel K = K1 + K2, which
// contains every sum f1 + f2 of agent functions. Agent features are stacked
// into a raw vector Phi of length D; linear dependencies among them form a
// null space N of R^D. An orthonormal basis of N-perp gives functions
// psi_k = sum_m T[k][m] raw_m that are orthonormal in H, and the norm of a
// function is the smallest ||c1||^2 + ||c2||^2 over all ways of writing it.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "kfuse/feature_space.hpp"

namespace kfuse {

enum class AgentId : int { First = 1, Second = 2 };

// Throws PreconditionError for anything other than 1 or 2.
AgentId agent_from_int(int agent);
constexpr int to_int(AgentId a) noexcept { return static_cast<int>(a); }

struct Slice {
    std::size_t offset = 0;
    std::size_t size = 0;
};

class FusionBasis {
public:
    static constexpr double kDefaultRankTol = 1e-10;
    static constexpr std::size_t kProbesPerRawFeature = 8;

    // Detects dependencies among the stacked features by an SVD of their
    // probe evaluations. Requires |probes| >= 2D. The rank is re-checked on a
    // fresh probe set and a disagreement raises ConstructionError.
    static std::shared_ptr<const FusionBasis> build(FeatureSetPtr first, FeatureSetPtr second,
                                                    std::span<const Point> probes,
                                                    double rank_tol = kDefaultRankTol);

    // Same, with 8*D quasi-uniform probes over the shared domain.
    static std::shared_ptr<const FusionBasis> build(FeatureSetPtr first, FeatureSetPtr second,
                                                    double rank_tol = kDefaultRankTol);

    // Rebuilds a basis from a stored map T (r x D). Validates orthonormal rows
    // and the sum-kernel identity; throws ConstructionError otherwise.
    static std::shared_ptr<const FusionBasis> from_map(FeatureSetPtr first, FeatureSetPtr second, Matrix map);

    std::uint64_t id() const noexcept { return id_; }
    std::size_t rank() const noexcept { return static_cast<std::size_t>(map_.rows()); }
    std::size_t dimension() const noexcept { return rank(); }
    std::size_t raw_dimension() const noexcept { return raw_.size(); }
    std::size_t input_dim() const noexcept { return first_->input_dim(); }
    const Box& domain() const noexcept { return first_->domain(); }

    const std::vector<Feature>& raw_features() const noexcept { return raw_; }
    const FeatureSetPtr& agent(AgentId a) const noexcept { return a == AgentId::First ? first_ : second_; }
    Slice slice(AgentId a) const noexcept;

    // Orthonormal columns spanning N (D x (D - r)).
    const Matrix& null_space() const noexcept { return null_; }
    // T, r x D with orthonormal rows spanning N-perp.
    const Matrix& basis_map() const noexcept { return map_; }

    Vector raw_values(std::span<const double> x) const;
    // (psi_1(x), ..., psi_r(x)).
    Vector basis_values(std::span<const double> x) const;

    // Psi-coordinates of agent a's features: row j holds the coefficients of phi^a_j.
    Matrix agent_coordinates(AgentId a) const;

private:
    FusionBasis(FeatureSetPtr first, FeatureSetPtr second, Matrix map, Matrix null);

    std::uint64_t id_;
    FeatureSetPtr first_;
    FeatureSetPtr second_;
    std::vector<Feature> raw_;
    Matrix map_;
    Matrix null_;
};

using FusionBasisPtr = std::shared_ptr<const FusionBasis>;

// Rotates the psi basis so that, walking the raw features in order, each new
// direction is the normalized H-projection of a raw feature orthogonalized
// against the earlier ones. When a diagonal form exists (as for monomial
// features) this recovers it, e.g. {1, x, sqrt(2) x^2, x^3}.
FusionBasisPtr align_canonical(const FusionBasis& basis);

// A function sum_k coeffs_k psi_k in H.
class FusionFunction {
public:
    FusionFunction(FusionBasisPtr basis, Vector coeffs);

    static FusionFunction zero(FusionBasisPtr basis);
    // Kernel section K(., y), coefficients psi(y).
    static FusionFunction section(FusionBasisPtr basis, std::span<const double> y);

    const Vector& coeffs() const noexcept { return coeffs_; }
    const FusionBasisPtr& basis() const noexcept { return basis_; }

    double operator()(std::span<const double> x) const;
    double norm() const noexcept { return coeffs_.norm(); }

private:
    FusionBasisPtr basis_;
    Vector coeffs_;
};

double fusion_kernel(const FusionBasis& basis, std::span<const double> x, std::span<const double> y);

// Embeds an agent function into H; function values are unchanged.
FusionFunction upload(const AgentFunction& f, const FusionBasisPtr& basis);

double h_inner_product(const FusionFunction& f, const FusionFunction& g);

struct Components {
    AgentFunction first;
    AgentFunction second;
};

// The unique minimal-norm decomposition f = L1(f) + L2(f).
Components split_components(const FusionFunction& f);

enum class OperatorKind { LBar1, LBar2, SqrtL1, SqrtL2, ProjM1, ProjM2, Generic };

struct OperatorMatrix {
    Matrix matrix;
    OperatorKind kind = OperatorKind::Generic;
};

// Matrix of f -> <f, K^a(., x)>_H in the psi basis: B^T B with B from
// agent_coordinates. Symmetric, eigenvalues in [0, 1], and L1 + L2 = I.
OperatorMatrix operator_matrix(const FusionBasis& basis, AgentId agent);

inline constexpr double kPsdClipTol = 1e-9;

// Principal square root via a symmetric eigendecomposition. Eigenvalues in
// [-1e-9, 0) are clipped to zero; anything more negative throws NotPositiveError.
Matrix psd_sqrt(const Matrix& m);
OperatorMatrix sqrt_operator(const OperatorMatrix& op);

// Orthogonal projection onto the range of an L-bar operator (eigenvalues > 1e-9).
OperatorMatrix range_projection(const OperatorMatrix& op);

FusionFunction apply(const OperatorMatrix& op, const FusionFunction& f);

inline constexpr double kDefaultConversionTol = 1e-9;

// Expresses f in agent a's own features by least squares. Throws
// NotInAgentSpaceError when the residual exceeds tol * (1 + ||f||).
AgentFunction convert_to_agent(const FusionFunction& f, AgentId agent, double tol = kDefaultConversionTol);

// sqrt(L-bar^a) applied to f, expressed in agent a's features.
AgentFunction download(const FusionFunction& f, AgentId agent);
// Same with a precomputed square-root operator of the matching agent.
AgentFunction download(const FusionFunction& f, AgentId agent, const OperatorMatrix& sqrt_op);

struct SpanReport {
    std::size_t rank = 0;
    std::size_t basis_rank = 0;
    bool spans = false;
};

// Rank of the stacked kernel sections psi(y) over the probes.
SpanReport kernel_sections_span(const FusionBasis& basis, std::span<const Point> probes, double tol = 1e-10);

}  // namespace kfuse
