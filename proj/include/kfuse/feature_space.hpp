#pragma once

// Symbolic feature primitives and the finite-dimensional RKHS an agent builds
// from them. The features of a set are treated as orthonormal: a function
// f = sum_j a_j phi_j has squared norm sum_j a_j^2 and the kernel is
// K(x, y) = sum_j phi_j(x) phi_j(y).

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace kfuse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// A point of the input space R^d.
using Point = std::vector<double>;

enum class PrimitiveKind { Monomial, Exponential, Sine, Cosine };

// One-dimensional building block: x^p, exp(r x), sin(w x) or cos(w x).
struct Primitive {
    PrimitiveKind kind = PrimitiveKind::Monomial;
    double param = 0.0;

    static Primitive monomial(unsigned power);
    static Primitive exponential(double rate);
    static Primitive sine(double freq);
    static Primitive cosine(double freq);

    // Parses the config vocabulary ("monomial", "exp", "sin", "cos").
    static Primitive from_kind(std::string_view kind, double param);

    double operator()(double x) const noexcept;

    std::string_view kind_name() const noexcept;
    std::string descriptor(std::string_view var = "x") const;

    friend bool operator==(const Primitive&, const Primitive&) = default;
};

// Product of one primitive per input coordinate.
class Feature {
public:
    Feature(Primitive p);  // NOLINT(google-explicit-constructor): 1-D shorthand
    explicit Feature(std::vector<Primitive> factors);

    std::size_t input_dim() const noexcept { return factors_.size(); }
    const std::vector<Primitive>& factors() const noexcept { return factors_; }

    double operator()(std::span<const double> x) const noexcept;

    std::string descriptor() const;

    friend bool operator==(const Feature&, const Feature&) = default;

private:
    std::vector<Primitive> factors_;
};

double eval_feature(const Feature& phi, std::span<const double> x) noexcept;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const noexcept { return hi - lo; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

using Box = std::vector<Interval>;

// Quasi-uniform points over a box. In 1-D this is an evenly spaced grid that
// includes both endpoints; otherwise a Halton sequence plus the box corners.
std::vector<Point> default_probes(const Box& box, std::size_t count);

struct IndependenceReport {
    bool ok = false;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    // Unit coefficient vectors c with sum_j c_j phi_j ~ 0 on the probes.
    std::vector<Vector> near_null;
};

// Row-major evaluation matrix E[k][j] = phi_j(points[k]).
RowMatrix evaluation_matrix(std::span<const Feature> features, std::span<const Point> points);

// Checks linear independence via the singular values of the probe evaluation
// matrix. Throws PreconditionError if there are fewer probes than features.
IndependenceReport verify_independence(std::span<const Feature> features, std::span<const Point> probes,
                                       double tol = 1e-10);

class FeatureSet {
public:
    static constexpr double kDefaultIndependenceTol = 1e-10;
    static constexpr std::size_t kProbesPerFeature = 8;

    // Validates parameters and independence; throws ConstructionError on a
    // dependent set and PreconditionError on malformed input.
    static std::shared_ptr<const FeatureSet> create(std::vector<Feature> features, Box domain,
                                                    double tol = kDefaultIndependenceTol);

    std::uint64_t id() const noexcept { return id_; }
    std::size_t size() const noexcept { return features_.size(); }
    std::size_t dimension() const noexcept { return features_.size(); }
    std::size_t input_dim() const noexcept { return domain_.size(); }
    const Box& domain() const noexcept { return domain_; }
    const std::vector<Feature>& features() const noexcept { return features_; }

    // (phi_1(x), ..., phi_n(x)).
    Vector basis_values(std::span<const double> x) const;

private:
    FeatureSet(std::vector<Feature> features, Box domain);

    std::uint64_t id_;
    std::vector<Feature> features_;
    Box domain_;
};

using FeatureSetPtr = std::shared_ptr<const FeatureSet>;

// Sums in declaration order so that K(x, y) == K(y, x) bit for bit.
double kernel_eval(const FeatureSet& fs, std::span<const double> x, std::span<const double> y);

Matrix gram_matrix(const FeatureSet& fs, std::span<const Point> points);

// A function sum_j coeffs_j phi_j in an agent space.
class AgentFunction {
public:
    AgentFunction(FeatureSetPtr space, Vector coeffs);

    static AgentFunction zero(FeatureSetPtr space);
    // Kernel section K(., y), i.e. coefficients phi_j(y).
    static AgentFunction section(FeatureSetPtr space, std::span<const double> y);

    const Vector& coeffs() const noexcept { return coeffs_; }
    const FeatureSetPtr& space() const noexcept { return space_; }

    double operator()(std::span<const double> x) const;

    double norm() const noexcept { return coeffs_.norm(); }

private:
    FeatureSetPtr space_;
    Vector coeffs_;
};

double eval_function(const AgentFunction& f, std::span<const double> x);

// Throws BindingError if f and g live in different feature sets.
double inner_product(const AgentFunction& f, const AgentFunction& g);

struct Dataset {
    std::vector<Point> inputs;
    std::vector<double> outputs;

    std::size_t size() const noexcept { return outputs.size(); }

    // Throws InputError on empty, ragged or non-finite data.
    void validate(std::size_t input_dim) const;

    Vector targets() const;
};

Dataset concatenate(const Dataset& a, const Dataset& b);

}  // namespace kfuse
