#pragma once

// Regularized least squares in a finite-dimensional RKHS,
//
//     min_f  sum_j (y_j - f(x_j))^2 + ridge * ||f||^2,
//
// solved two independent ways: through the representer (dual) system
// (K^T K + ridge K) alpha = K^T y on the Gram matrix, and through the primal
// normal equations (E^T E + ridge I) w = E^T y on feature coefficients.

#include <concepts>
#include <memory>

#include "kfuse/feature_space.hpp"
#include "kfuse/fusion_space.hpp"

namespace kfuse {

// A space with an orthonormal finite basis that can be evaluated pointwise.
template <class S>
concept HypothesisSpace = requires(const S& s, std::span<const double> x) {
    { s.dimension() } -> std::convertible_to<std::size_t>;
    { s.input_dim() } -> std::convertible_to<std::size_t>;
    { s.basis_values(x) } -> std::convertible_to<Vector>;
};

template <class S>
struct FunctionOf;
template <>
struct FunctionOf<FeatureSet> {
    using type = AgentFunction;
};
template <>
struct FunctionOf<FusionBasis> {
    using type = FusionFunction;
};

template <HypothesisSpace S>
struct RegressionProblem {
    Dataset data;
    double ridge = 1e-6;
    std::shared_ptr<const S> space;
};

template <class Fn>
struct RegressionSolution {
    Vector dual_coeffs;  // empty for the primal oracle
    Fn function;
    double objective = 0.0;
};

namespace detail {

struct CoreSolution {
    Vector dual;
    Vector coeffs;
    double objective = 0.0;
};

// Singular values of the evaluation matrix (square roots of the Gram
// eigenvalues) below this fraction of the largest count as exact zeros.
inline constexpr double kGramRankTol = 1e-13;

CoreSolution solve_dual(const RowMatrix& e, const Vector& y, double ridge);
CoreSolution solve_primal(const RowMatrix& e, const Vector& y, double ridge);

template <HypothesisSpace S>
RowMatrix evaluation_matrix(const S& space, const Dataset& data) {
    RowMatrix e(static_cast<Eigen::Index>(data.size()), static_cast<Eigen::Index>(space.dimension()));
    for (std::size_t k = 0; k < data.size(); ++k) {
        e.row(static_cast<Eigen::Index>(k)) = space.basis_values(data.inputs[k]).transpose();
    }
    return e;
}

void check_problem(const Dataset& data, double ridge, std::size_t input_dim);

}  // namespace detail

// Objective value at basis coefficients w.
double regression_objective(const RowMatrix& e, const Vector& y, double ridge, const Vector& w);

template <HypothesisSpace S>
auto solve_dual(const RegressionProblem<S>& p) -> RegressionSolution<typename FunctionOf<S>::type> {
    detail::check_problem(p.data, p.ridge, p.space->input_dim());
    auto core = detail::solve_dual(detail::evaluation_matrix(*p.space, p.data), p.data.targets(), p.ridge);
    return {std::move(core.dual), typename FunctionOf<S>::type(p.space, std::move(core.coeffs)), core.objective};
}

template <HypothesisSpace S>
auto solve_primal_oracle(const RegressionProblem<S>& p) -> RegressionSolution<typename FunctionOf<S>::type> {
    detail::check_problem(p.data, p.ridge, p.space->input_dim());
    auto core = detail::solve_primal(detail::evaluation_matrix(*p.space, p.data), p.data.targets(), p.ridge);
    return {Vector(), typename FunctionOf<S>::type(p.space, std::move(core.coeffs)), core.objective};
}

// Regression in the fusion space on the pooled data of both agents.
RegressionSolution<FusionFunction> solve_centralized(const Dataset& first, const Dataset& second,
                                                     const FusionBasisPtr& basis, double ridge);

}  // namespace kfuse
