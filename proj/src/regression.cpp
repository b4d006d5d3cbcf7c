#include "kfuse/regression.hpp"

#include <cmath>
#include <string>

#include "kfuse/errors.hpp"
#include "kfuse/simd/kernels.hpp"

namespace kfuse {

namespace detail {

void check_problem(const Dataset& data, double ridge, std::size_t input_dim) {
    if (!(ridge > 0.0) || !std::isfinite(ridge)) {
        throw PreconditionError("ridge must be a positive finite number, got " + std::to_string(ridge));
    }
    data.validate(input_dim);
}

CoreSolution solve_dual(const RowMatrix& e, const Vector& y, double ridge) {
    const auto m = e.rows();
    const auto n = static_cast<std::size_t>(e.cols());

    Matrix gram(m, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index l = k; l < m; ++l) {
            const double v = simd::dot({e.row(k).data(), n}, {e.row(l).data(), n});
            gram(k, l) = v;
            gram(l, k) = v;
        }
    }

    // Minimum-norm solution of (K^T K + ridge K) alpha = K^T y. In the
    // eigenbasis of K the system is diagonal with entries l^2 + ridge*l, so
    // its pseudo-inverse only touches the range of K and reduces to
    // u^T y / (l + ridge) per eigenpair. The eigenpairs come from the SVD of
    // the factor E (K = U S^2 U^T): eigendecomposing K itself squares the
    // conditioning and loses the small eigenvectors.
    Eigen::JacobiSVD<Matrix> svd(Matrix(e), Eigen::ComputeThinU);
    const Vector& sigma = svd.singularValues();
    const Matrix& u = svd.matrixU();
    const double top = sigma.size() > 0 ? sigma(0) * sigma(0) : 0.0;
    Vector alpha = Vector::Zero(m);
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        if (!(sigma(i) > kGramRankTol * sigma(0))) break;
        alpha += u.col(i) * (u.col(i).dot(y) / (sigma(i) * sigma(i) + ridge));
    }

    CoreSolution out;
    out.coeffs = e.transpose() * alpha;
    // The materialized function must reproduce sum_l alpha_l K(., x_l) at the data.
    const Vector via_sections = gram * alpha;
    const Vector via_coeffs = e * out.coeffs;
    const double scale = 1.0 + std::abs(top) * alpha.norm();
    if ((via_sections - via_coeffs).norm() > 1e-8 * scale) {
        throw InternalConsistencyError("dual solution does not match its basis expansion");
    }
    out.dual = std::move(alpha);
    out.objective = regression_objective(e, y, ridge, out.coeffs);
    return out;
}

CoreSolution solve_primal(const RowMatrix& e, const Vector& y, double ridge) {
    const auto n = e.cols();
    const Matrix normal = e.transpose() * e + ridge * Matrix::Identity(n, n);
    const Vector rhs = e.transpose() * y;
    CoreSolution out;
    Eigen::LLT<Matrix> llt(normal);
    if (llt.info() == Eigen::Success) {
        out.coeffs = llt.solve(rhs);
    } else {
        out.coeffs = normal.ldlt().solve(rhs);
    }
    out.objective = regression_objective(e, y, ridge, out.coeffs);
    return out;
}

}  // namespace detail

double regression_objective(const RowMatrix& e, const Vector& y, double ridge, const Vector& w) {
    Vector fitted(e.rows());
    simd::gemv({e.data(), static_cast<std::size_t>(e.size())}, static_cast<std::size_t>(e.rows()),
               static_cast<std::size_t>(e.cols()), {w.data(), static_cast<std::size_t>(w.size())},
               {fitted.data(), static_cast<std::size_t>(fitted.size())});
    return (y - fitted).squaredNorm() + ridge * w.squaredNorm();
}

RegressionSolution<FusionFunction> solve_centralized(const Dataset& first, const Dataset& second,
                                                     const FusionBasisPtr& basis, double ridge) {
    first.validate(basis->input_dim());
    second.validate(basis->input_dim());
    return solve_dual(RegressionProblem<FusionBasis>{concatenate(first, second), ridge, basis});
}

}  // namespace kfuse
