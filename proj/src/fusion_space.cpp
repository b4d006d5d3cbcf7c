#include "kfuse/fusion_space.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "kfuse/errors.hpp"

namespace kfuse {

namespace {

std::uint64_t next_basis_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

std::vector<Feature> stack_features(const FeatureSet& a, const FeatureSet& b) {
    std::vector<Feature> raw = a.features();
    raw.insert(raw.end(), b.features().begin(), b.features().end());
    return raw;
}

void check_compatible(const FeatureSetPtr& first, const FeatureSetPtr& second) {
    if (!first || !second) {
        throw PreconditionError("fusion basis needs two feature sets");
    }
    if (first->input_dim() != second->input_dim()) {
        throw PreconditionError("agent feature sets have different input dimensions");
    }
    if (first->domain() != second->domain()) {
        throw PreconditionError("agent feature sets have different domain boxes");
    }
}

std::size_t numerical_rank(const Vector& singular_values, double rel_tol) {
    if (singular_values.size() == 0 || !(singular_values(0) > 0.0)) return 0;
    const double cutoff = rel_tol * singular_values(0);
    std::size_t r = 0;
    while (r < static_cast<std::size_t>(singular_values.size()) &&
           singular_values(static_cast<Eigen::Index>(r)) > cutoff) {
        ++r;
    }
    return r;
}

// Uniform random probes used to cross-check a rank decision.
std::vector<Point> fresh_probes(const Box& box, std::size_t count) {
    std::mt19937_64 rng(0x5eed'f00dULL);
    std::vector<Point> probes(count, Point(box.size()));
    for (auto& p : probes) {
        for (std::size_t i = 0; i < box.size(); ++i) {
            p[i] = std::uniform_real_distribution<double>(box[i].lo, box[i].hi)(rng);
        }
    }
    return probes;
}

// Flips each row so that its largest-magnitude entry is positive.
void fix_row_signs(Matrix& m) {
    for (Eigen::Index k = 0; k < m.rows(); ++k) {
        Eigen::Index idx = 0;
        m.row(k).cwiseAbs().maxCoeff(&idx);
        if (m(k, idx) < 0.0) m.row(k) *= -1.0;
    }
}

Matrix orthonormal_complement(const Matrix& rows, std::size_t dim) {
    // Columns of the full V beyond the row rank span the complement.
    Eigen::JacobiSVD<Matrix> svd(rows, Eigen::ComputeFullV);
    const auto r = rows.rows();
    return svd.matrixV().rightCols(static_cast<Eigen::Index>(dim) - r);
}

OperatorKind sqrt_kind(OperatorKind k) {
    switch (k) {
        case OperatorKind::LBar1:
            return OperatorKind::SqrtL1;
        case OperatorKind::LBar2:
            return OperatorKind::SqrtL2;
        default:
            return OperatorKind::Generic;
    }
}

OperatorKind projection_kind(OperatorKind k) {
    switch (k) {
        case OperatorKind::LBar1:
        case OperatorKind::SqrtL1:
            return OperatorKind::ProjM1;
        case OperatorKind::LBar2:
        case OperatorKind::SqrtL2:
            return OperatorKind::ProjM2;
        default:
            return OperatorKind::Generic;
    }
}

Eigen::SelfAdjointEigenSolver<Matrix> symmetric_eigen(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw PreconditionError("operator matrix is not square");
    }
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
        throw PreconditionError("operator matrix is not symmetric");
    }
    return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (m + m.transpose()));
}

}  // namespace

AgentId agent_from_int(int agent) {
    if (agent == 1) return AgentId::First;
    if (agent == 2) return AgentId::Second;
    throw PreconditionError("agent must be 1 or 2, got " + std::to_string(agent));
}

FusionBasis::FusionBasis(FeatureSetPtr first, FeatureSetPtr second, Matrix map, Matrix null)
    : id_(next_basis_id()),
      first_(std::move(first)),
      second_(std::move(second)),
      raw_(stack_features(*first_, *second_)),
      map_(std::move(map)),
      null_(std::move(null)) {}

std::shared_ptr<const FusionBasis> FusionBasis::build(FeatureSetPtr first, FeatureSetPtr second,
                                                      std::span<const Point> probes, double rank_tol) {
    check_compatible(first, second);
    const auto raw = stack_features(*first, *second);
    const std::size_t d = raw.size();
    if (probes.size() < 2 * d) {
        throw PreconditionError("fusion basis needs at least 2D = " + std::to_string(2 * d) + " probes, got " +
                                std::to_string(probes.size()));
    }

    const Matrix e = evaluation_matrix(raw, probes);
    Eigen::JacobiSVD<Matrix> svd(e, Eigen::ComputeFullV);
    const std::size_t r = numerical_rank(svd.singularValues(), rank_tol);
    if (r == 0) {
        throw ConstructionError("all features vanish on the probe set");
    }

    const auto check = fresh_probes(first->domain(), 2 * probes.size());
    Eigen::JacobiSVD<Matrix> svd_check(evaluation_matrix(raw, check));
    const std::size_t r_check = numerical_rank(svd_check.singularValues(), rank_tol);
    if (r_check != r) {
        throw ConstructionError("degenerate probe set: rank " + std::to_string(r) + " on the given probes but " +
                                std::to_string(r_check) + " on a fresh probe set");
    }

    const auto ri = static_cast<Eigen::Index>(r);
    Matrix map = svd.matrixV().leftCols(ri).transpose();
    fix_row_signs(map);
    Matrix null = svd.matrixV().rightCols(static_cast<Eigen::Index>(d) - ri);
    return std::shared_ptr<const FusionBasis>(
        new FusionBasis(std::move(first), std::move(second), std::move(map), std::move(null)));
}

std::shared_ptr<const FusionBasis> FusionBasis::build(FeatureSetPtr first, FeatureSetPtr second, double rank_tol) {
    check_compatible(first, second);
    const auto probes = default_probes(first->domain(), kProbesPerRawFeature * (first->size() + second->size()));
    return build(std::move(first), std::move(second), probes, rank_tol);
}

std::shared_ptr<const FusionBasis> FusionBasis::from_map(FeatureSetPtr first, FeatureSetPtr second, Matrix map) {
    check_compatible(first, second);
    const std::size_t d = first->size() + second->size();
    if (static_cast<std::size_t>(map.cols()) != d || map.rows() == 0 || static_cast<std::size_t>(map.rows()) > d) {
        throw ConstructionError("basis map has shape " + std::to_string(map.rows()) + "x" +
                                std::to_string(map.cols()) + ", expected r x " + std::to_string(d));
    }
    const Matrix gram = map * map.transpose();
    if ((gram - Matrix::Identity(map.rows(), map.rows())).cwiseAbs().maxCoeff() > 1e-10) {
        throw ConstructionError("basis map rows are not orthonormal");
    }
    Matrix null = orthonormal_complement(map, d);
    auto basis = std::shared_ptr<const FusionBasis>(
        new FusionBasis(std::move(first), std::move(second), std::move(map), std::move(null)));

    // Rows must span exactly the complement of the feature dependencies.
    const auto probes = default_probes(basis->domain(), kProbesPerRawFeature * d);
    for (const auto& x : probes) {
        for (const auto& y : probes) {
            const double k1 = kernel_eval(*basis->agent(AgentId::First), x, y);
            const double k2 = kernel_eval(*basis->agent(AgentId::Second), x, y);
            const double k = fusion_kernel(*basis, x, y);
            if (std::abs(k - k1 - k2) > 1e-10 * (1.0 + std::abs(k1) + std::abs(k2))) {
                throw ConstructionError("basis map does not reproduce K1 + K2");
            }
        }
    }
    return basis;
}

Slice FusionBasis::slice(AgentId a) const noexcept {
    if (a == AgentId::First) return {0, first_->size()};
    return {first_->size(), second_->size()};
}

Vector FusionBasis::raw_values(std::span<const double> x) const {
    Vector v(static_cast<Eigen::Index>(raw_.size()));
    for (std::size_t m = 0; m < raw_.size(); ++m) {
        v(static_cast<Eigen::Index>(m)) = raw_[m](x);
    }
    return v;
}

Vector FusionBasis::basis_values(std::span<const double> x) const { return map_ * raw_values(x); }

Matrix FusionBasis::agent_coordinates(AgentId a) const {
    const auto s = slice(a);
    return map_.middleCols(static_cast<Eigen::Index>(s.offset), static_cast<Eigen::Index>(s.size)).transpose();
}

FusionBasisPtr align_canonical(const FusionBasis& basis) {
    const auto r = static_cast<Eigen::Index>(basis.rank());
    const Matrix& t = basis.basis_map();
    Matrix q(r, r);
    Eigen::Index accepted = 0;
    for (Eigen::Index m = 0; m < t.cols() && accepted < r; ++m) {
        // Psi-coordinates of raw feature m.
        const Vector v = t.col(m);
        const double vnorm = v.norm();
        if (vnorm == 0.0) continue;
        Vector w = v;
        for (int pass = 0; pass < 2; ++pass) {
            for (Eigen::Index k = 0; k < accepted; ++k) {
                w -= q.row(k).dot(w) * q.row(k).transpose();
            }
        }
        const double wnorm = w.norm();
        if (wnorm <= 1e-8 * vnorm) continue;
        q.row(accepted++) = (w / wnorm).transpose();
    }
    if (accepted != r) {
        throw InternalConsistencyError("raw features do not span the fusion basis");
    }
    return FusionBasis::from_map(basis.agent(AgentId::First), basis.agent(AgentId::Second), q * t);
}

FusionFunction::FusionFunction(FusionBasisPtr basis, Vector coeffs) : basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
    if (!basis_) {
        throw BindingError("fusion function has no basis");
    }
    if (static_cast<std::size_t>(coeffs_.size()) != basis_->rank()) {
        throw BindingError("fusion function has " + std::to_string(coeffs_.size()) + " coefficients for rank " +
                           std::to_string(basis_->rank()));
    }
}

FusionFunction FusionFunction::zero(FusionBasisPtr basis) {
    const auto r = static_cast<Eigen::Index>(basis ? basis->rank() : 0);
    return FusionFunction(std::move(basis), Vector::Zero(r));
}

FusionFunction FusionFunction::section(FusionBasisPtr basis, std::span<const double> y) {
    Vector c = basis->basis_values(y);
    return FusionFunction(std::move(basis), std::move(c));
}

double FusionFunction::operator()(std::span<const double> x) const { return coeffs_.dot(basis_->basis_values(x)); }

double fusion_kernel(const FusionBasis& basis, std::span<const double> x, std::span<const double> y) {
    return basis.basis_values(x).dot(basis.basis_values(y));
}

FusionFunction upload(const AgentFunction& f, const FusionBasisPtr& basis) {
    const auto id = f.space()->id();
    AgentId agent;
    if (id == basis->agent(AgentId::First)->id()) {
        agent = AgentId::First;
    } else if (id == basis->agent(AgentId::Second)->id()) {
        agent = AgentId::Second;
    } else {
        throw BindingError("uploaded function's feature set is not registered in the fusion basis");
    }
    return FusionFunction(basis, basis->agent_coordinates(agent).transpose() * f.coeffs());
}

double h_inner_product(const FusionFunction& f, const FusionFunction& g) {
    if (f.basis()->id() != g.basis()->id()) {
        throw BindingError("inner product of functions from different fusion bases");
    }
    return f.coeffs().dot(g.coeffs());
}

Components split_components(const FusionFunction& f) {
    const auto& basis = *f.basis();
    const Vector lifted = basis.basis_map().transpose() * f.coeffs();
    const auto s1 = basis.slice(AgentId::First);
    const auto s2 = basis.slice(AgentId::Second);
    return {AgentFunction(basis.agent(AgentId::First),
                          lifted.segment(static_cast<Eigen::Index>(s1.offset), static_cast<Eigen::Index>(s1.size))),
            AgentFunction(basis.agent(AgentId::Second),
                          lifted.segment(static_cast<Eigen::Index>(s2.offset), static_cast<Eigen::Index>(s2.size)))};
}

OperatorMatrix operator_matrix(const FusionBasis& basis, AgentId agent) {
    const Matrix b = basis.agent_coordinates(agent);
    Matrix l = b.transpose() * b;
    l = 0.5 * (l + l.transpose());
    return {std::move(l), agent == AgentId::First ? OperatorKind::LBar1 : OperatorKind::LBar2};
}

Matrix psd_sqrt(const Matrix& m) {
    const auto eig = symmetric_eigen(m);
    Vector lambda = eig.eigenvalues();
    const double top = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    // Round-off sized eigenvalues are exact zeros of the operator.
    const double snap = 64.0 * std::numeric_limits<double>::epsilon() * top * static_cast<double>(m.rows());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (lambda(i) < -kPsdClipTol) {
            throw NotPositiveError("operator has eigenvalue " + std::to_string(lambda(i)) + " below -1e-9");
        }
        if (lambda(i) < 0.0 || std::abs(lambda(i)) <= snap) lambda(i) = 0.0;
    }
    const Matrix& u = eig.eigenvectors();
    Matrix root = u * lambda.cwiseSqrt().asDiagonal() * u.transpose();
    return 0.5 * (root + root.transpose());
}

OperatorMatrix sqrt_operator(const OperatorMatrix& op) { return {psd_sqrt(op.matrix), sqrt_kind(op.kind)}; }

OperatorMatrix range_projection(const OperatorMatrix& op) {
    const auto eig = symmetric_eigen(op.matrix);
    const auto n = op.matrix.rows();
    Matrix p = Matrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (eig.eigenvalues()(i) > kPsdClipTol) {
            p += eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose();
        }
    }
    return {std::move(p), projection_kind(op.kind)};
}

FusionFunction apply(const OperatorMatrix& op, const FusionFunction& f) {
    if (op.matrix.rows() != f.coeffs().size() || op.matrix.cols() != f.coeffs().size()) {
        throw BindingError("operator size does not match the fusion basis rank");
    }
    return FusionFunction(f.basis(), op.matrix * f.coeffs());
}

AgentFunction convert_to_agent(const FusionFunction& f, AgentId agent, double tol) {
    const auto& basis = *f.basis();
    const Matrix bt = basis.agent_coordinates(agent).transpose();
    const Vector c = bt.colPivHouseholderQr().solve(f.coeffs());
    const double residual = (bt * c - f.coeffs()).norm();
    if (!(residual <= tol * (1.0 + f.coeffs().norm()))) {
        throw NotInAgentSpaceError("function is not in agent " + std::to_string(to_int(agent)) +
                                   "'s space (residual " + std::to_string(residual) + ")");
    }
    return AgentFunction(basis.agent(agent), c);
}

AgentFunction download(const FusionFunction& f, AgentId agent, const OperatorMatrix& sqrt_op) {
    const auto expected = agent == AgentId::First ? OperatorKind::SqrtL1 : OperatorKind::SqrtL2;
    if (sqrt_op.kind != expected) {
        throw BindingError("download operator does not belong to agent " + std::to_string(to_int(agent)));
    }
    const FusionFunction g = apply(sqrt_op, f);
    try {
        return convert_to_agent(g, agent);
    } catch (const NotInAgentSpaceError& e) {
        throw InternalConsistencyError(std::string("downloaded function left the agent space: ") + e.what());
    }
}

AgentFunction download(const FusionFunction& f, AgentId agent) {
    return download(f, agent, sqrt_operator(operator_matrix(*f.basis(), agent)));
}

SpanReport kernel_sections_span(const FusionBasis& basis, std::span<const Point> probes, double tol) {
    SpanReport report;
    report.basis_rank = basis.rank();
    if (probes.size() < basis.rank()) {
        throw PreconditionError("kernel section span check needs at least r probes");
    }
    Matrix sections(static_cast<Eigen::Index>(probes.size()), static_cast<Eigen::Index>(basis.rank()));
    for (std::size_t k = 0; k < probes.size(); ++k) {
        sections.row(static_cast<Eigen::Index>(k)) = basis.basis_values(probes[k]).transpose();
    }
    Eigen::JacobiSVD<Matrix> svd(sections);
    report.rank = numerical_rank(svd.singularValues(), tol);
    report.spans = report.rank == basis.rank();
    return report;
}

}  // namespace kfuse
