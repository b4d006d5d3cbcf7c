#include "kfuse/feature_space.hpp"

#include <array>
#include <atomic>
#include <cmath>
#include <sstream>

#include "kfuse/errors.hpp"
#include "kfuse/simd/kernels.hpp"

namespace kfuse {

namespace {

std::uint64_t next_space_id() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

double radical_inverse(std::size_t index, unsigned base) {
    double inv = 1.0 / base;
    double frac = inv;
    double result = 0.0;
    while (index > 0) {
        result += static_cast<double>(index % base) * frac;
        index /= base;
        frac *= inv;
    }
    return result;
}

std::string format_number(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void check_finite(std::span<const double> x, const char* what) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw InputError(std::string(what) + " contains a non-finite value");
        }
    }
}

}  // namespace

Primitive Primitive::monomial(unsigned power) { return {PrimitiveKind::Monomial, static_cast<double>(power)}; }
Primitive Primitive::exponential(double rate) { return {PrimitiveKind::Exponential, rate}; }
Primitive Primitive::sine(double freq) { return {PrimitiveKind::Sine, freq}; }
Primitive Primitive::cosine(double freq) { return {PrimitiveKind::Cosine, freq}; }

Primitive Primitive::from_kind(std::string_view kind, double param) {
    if (!std::isfinite(param)) {
        throw PreconditionError("feature parameter must be finite");
    }
    if (kind == "monomial") {
        if (param < 0.0 || param != std::floor(param)) {
            throw PreconditionError("monomial power must be a non-negative integer, got " + format_number(param));
        }
        return {PrimitiveKind::Monomial, param};
    }
    if (kind == "exp") return exponential(param);
    if (kind == "sin") return sine(param);
    if (kind == "cos") return cosine(param);
    throw PreconditionError("unknown feature kind '" + std::string(kind) + "'");
}

double Primitive::operator()(double x) const noexcept {
    switch (kind) {
        case PrimitiveKind::Monomial: {
            // Repeated multiplication keeps small integer powers exact.
            double r = 1.0;
            for (int p = static_cast<int>(param); p > 0; --p) r *= x;
            return r;
        }
        case PrimitiveKind::Exponential:
            return std::exp(param * x);
        case PrimitiveKind::Sine:
            return std::sin(param * x);
        case PrimitiveKind::Cosine:
            return std::cos(param * x);
    }
    return 0.0;
}

std::string_view Primitive::kind_name() const noexcept {
    switch (kind) {
        case PrimitiveKind::Monomial:
            return "monomial";
        case PrimitiveKind::Exponential:
            return "exp";
        case PrimitiveKind::Sine:
            return "sin";
        case PrimitiveKind::Cosine:
            return "cos";
    }
    return "?";
}

std::string Primitive::descriptor(std::string_view var) const {
    const std::string v(var);
    switch (kind) {
        case PrimitiveKind::Monomial: {
            const int p = static_cast<int>(param);
            if (p == 0) return "1";
            if (p == 1) return v;
            return v + "^" + std::to_string(p);
        }
        case PrimitiveKind::Exponential:
            return "exp(" + format_number(param) + "*" + v + ")";
        case PrimitiveKind::Sine:
            return "sin(" + format_number(param) + "*" + v + ")";
        case PrimitiveKind::Cosine:
            return "cos(" + format_number(param) + "*" + v + ")";
    }
    return "?";
}

Feature::Feature(Primitive p) : factors_{p} {}

Feature::Feature(std::vector<Primitive> factors) : factors_(std::move(factors)) {
    if (factors_.empty()) {
        throw PreconditionError("a feature needs at least one factor");
    }
}

double Feature::operator()(std::span<const double> x) const noexcept {
    double r = 1.0;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        r *= factors_[i](x[i]);
    }
    return r;
}

std::string Feature::descriptor() const {
    if (factors_.size() == 1) {
        return factors_.front().descriptor("x");
    }
    std::string out;
    for (std::size_t i = 0; i < factors_.size(); ++i) {
        if (i > 0) out += "*";
        out += factors_[i].descriptor("x" + std::to_string(i + 1));
    }
    return out;
}

double eval_feature(const Feature& phi, std::span<const double> x) noexcept { return phi(x); }

std::vector<Point> default_probes(const Box& box, std::size_t count) {
    if (box.empty()) {
        throw PreconditionError("probe box has no coordinates");
    }
    std::vector<Point> probes;
    if (box.size() == 1) {
        const auto [lo, hi] = box.front();
        if (count == 1) {
            probes.push_back({0.5 * (lo + hi)});
            return probes;
        }
        probes.reserve(count);
        for (std::size_t k = 0; k < count; ++k) {
            const double t = static_cast<double>(k) / static_cast<double>(count - 1);
            probes.push_back({lo + t * (hi - lo)});
        }
        return probes;
    }

    static constexpr std::array<unsigned, 12> primes{2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
    if (box.size() > primes.size()) {
        throw PreconditionError("default probes support at most 12 input coordinates");
    }
    const std::size_t d = box.size();
    const std::size_t corners = std::size_t{1} << d;
    for (std::size_t c = 0; c < corners && probes.size() < count; ++c) {
        Point p(d);
        for (std::size_t i = 0; i < d; ++i) p[i] = (c >> i) & 1U ? box[i].hi : box[i].lo;
        probes.push_back(std::move(p));
    }
    for (std::size_t k = 1; probes.size() < count; ++k) {
        Point p(d);
        for (std::size_t i = 0; i < d; ++i) {
            p[i] = box[i].lo + radical_inverse(k, primes[i]) * box[i].length();
        }
        probes.push_back(std::move(p));
    }
    return probes;
}

RowMatrix evaluation_matrix(std::span<const Feature> features, std::span<const Point> points) {
    RowMatrix e(points.size(), features.size());
    for (std::size_t k = 0; k < points.size(); ++k) {
        for (std::size_t j = 0; j < features.size(); ++j) {
            e(k, j) = features[j](points[k]);
        }
    }
    return e;
}

IndependenceReport verify_independence(std::span<const Feature> features, std::span<const Point> probes,
                                       double tol) {
    if (features.empty()) {
        throw PreconditionError("feature list is empty");
    }
    if (probes.size() < features.size()) {
        throw PreconditionError("independence check needs at least as many probes as features (" +
                                std::to_string(probes.size()) + " < " + std::to_string(features.size()) + ")");
    }
    const Matrix e = evaluation_matrix(features, probes);
    Eigen::JacobiSVD<Matrix> svd(e, Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();

    IndependenceReport report;
    report.sigma_max = s(0);
    report.sigma_min = s(s.size() - 1);
    const double cutoff = tol * report.sigma_max;
    for (Eigen::Index j = 0; j < s.size(); ++j) {
        if (!(s(j) > cutoff)) {
            report.near_null.push_back(svd.matrixV().col(j));
        }
    }
    report.ok = report.near_null.empty() && report.sigma_max > 0.0;
    return report;
}

FeatureSet::FeatureSet(std::vector<Feature> features, Box domain)
    : id_(next_space_id()), features_(std::move(features)), domain_(std::move(domain)) {}

std::shared_ptr<const FeatureSet> FeatureSet::create(std::vector<Feature> features, Box domain, double tol) {
    if (features.empty()) {
        throw PreconditionError("a feature set needs at least one feature");
    }
    if (domain.empty()) {
        throw PreconditionError("domain box has no coordinates");
    }
    for (const auto& iv : domain) {
        if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || !(iv.lo < iv.hi)) {
            throw PreconditionError("domain box intervals must be finite with lo < hi");
        }
    }
    for (const auto& f : features) {
        if (f.input_dim() != domain.size()) {
            throw PreconditionError("feature '" + f.descriptor() + "' has " + std::to_string(f.input_dim()) +
                                    " factors but the domain has " + std::to_string(domain.size()) +
                                    " coordinates");
        }
        for (const auto& p : f.factors()) {
            // Re-validate through the parser to reject bad powers and NaNs.
            (void)Primitive::from_kind(p.kind_name(), p.param);
        }
    }

    const auto probes = default_probes(domain, kProbesPerFeature * features.size());
    const auto report = verify_independence(features, probes, tol);
    if (!report.ok) {
        std::ostringstream os;
        os << "features are linearly dependent on the domain (sigma_min/sigma_max = "
           << (report.sigma_max > 0 ? report.sigma_min / report.sigma_max : 0.0) << ")";
        if (!report.near_null.empty()) {
            os << "; dependency coefficients:";
            for (Eigen::Index j = 0; j < report.near_null.front().size(); ++j) {
                os << ' ' << report.near_null.front()(j);
            }
        }
        throw ConstructionError(os.str());
    }
    return std::shared_ptr<const FeatureSet>(new FeatureSet(std::move(features), std::move(domain)));
}

Vector FeatureSet::basis_values(std::span<const double> x) const {
    Vector v(static_cast<Eigen::Index>(features_.size()));
    for (std::size_t j = 0; j < features_.size(); ++j) {
        v(static_cast<Eigen::Index>(j)) = features_[j](x);
    }
    return v;
}

double kernel_eval(const FeatureSet& fs, std::span<const double> x, std::span<const double> y) {
    double acc = 0.0;
    for (const auto& phi : fs.features()) {
        acc += phi(x) * phi(y);
    }
    return acc;
}

Matrix gram_matrix(const FeatureSet& fs, std::span<const Point> points) {
    if (points.empty()) {
        throw PreconditionError("gram matrix needs at least one point");
    }
    const RowMatrix e = evaluation_matrix(fs.features(), points);
    const auto n = static_cast<std::size_t>(e.cols());
    const auto m = e.rows();
    Matrix g(m, m);
    for (Eigen::Index k = 0; k < m; ++k) {
        for (Eigen::Index l = k; l < m; ++l) {
            const double v = simd::dot({e.row(k).data(), n}, {e.row(l).data(), n});
            g(k, l) = v;
            g(l, k) = v;
        }
    }
    return g;
}

AgentFunction::AgentFunction(FeatureSetPtr space, Vector coeffs) : space_(std::move(space)), coeffs_(std::move(coeffs)) {
    if (!space_) {
        throw BindingError("agent function has no feature set");
    }
    if (static_cast<std::size_t>(coeffs_.size()) != space_->size()) {
        throw BindingError("agent function has " + std::to_string(coeffs_.size()) + " coefficients for " +
                           std::to_string(space_->size()) + " features");
    }
}

AgentFunction AgentFunction::zero(FeatureSetPtr space) {
    const auto n = static_cast<Eigen::Index>(space ? space->size() : 0);
    return AgentFunction(std::move(space), Vector::Zero(n));
}

AgentFunction AgentFunction::section(FeatureSetPtr space, std::span<const double> y) {
    Vector c = space->basis_values(y);
    return AgentFunction(std::move(space), std::move(c));
}

double AgentFunction::operator()(std::span<const double> x) const {
    double acc = 0.0;
    const auto& feats = space_->features();
    for (std::size_t j = 0; j < feats.size(); ++j) {
        acc += coeffs_(static_cast<Eigen::Index>(j)) * feats[j](x);
    }
    return acc;
}

double eval_function(const AgentFunction& f, std::span<const double> x) { return f(x); }

double inner_product(const AgentFunction& f, const AgentFunction& g) {
    if (f.space()->id() != g.space()->id()) {
        throw BindingError("inner product of functions from different feature sets");
    }
    return f.coeffs().dot(g.coeffs());
}

void Dataset::validate(std::size_t input_dim) const {
    if (outputs.empty()) {
        throw InputError("dataset is empty");
    }
    if (inputs.size() != outputs.size()) {
        throw InputError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                         std::to_string(outputs.size()) + " outputs");
    }
    for (const auto& x : inputs) {
        if (x.size() != input_dim) {
            throw InputError("dataset point has wrong input dimension");
        }
        check_finite(x, "dataset input");
    }
    check_finite(outputs, "dataset output");
}

Vector Dataset::targets() const { return Eigen::Map<const Vector>(outputs.data(), static_cast<Eigen::Index>(outputs.size())); }

Dataset concatenate(const Dataset& a, const Dataset& b) {
    Dataset out = a;
    out.inputs.insert(out.inputs.end(), b.inputs.begin(), b.inputs.end());
    out.outputs.insert(out.outputs.end(), b.outputs.begin(), b.outputs.end());
    return out;
}

}  // namespace kfuse
