#pragma once

// Fusion of two uploaded estimates into a single function a*f1 + b*f2 that is
// close to both, measured by a dissimilarity built from a finite family of
// functions b_k in H:
//
//     d(f, g) = sum_k <f - g, b_k>_H^2
//     min_{a,b} d(a f1 + b f2, f1) + d(a f1 + b f2, f2) + ridge ||a f1 + b f2||_H^2

#include <cstdint>
#include <string>
#include <vector>

#include "kfuse/fusion_space.hpp"

namespace kfuse {

class DissimilarityBasis {
public:
    static constexpr std::size_t kDefaultCount = 40;

    DissimilarityBasis(FusionBasisPtr basis, std::vector<FusionFunction> vectors, std::string source);

    // Kernel sections K(., x) at the given anchors.
    static DissimilarityBasis kernel_sections(const FusionBasisPtr& basis, std::span<const Point> anchors);

    // Kernel sections at `count` anchors drawn uniformly from [lo, hi] (1-D).
    static DissimilarityBasis sampled_kernel_sections(const FusionBasisPtr& basis, std::size_t count, double lo,
                                                      double hi, std::uint64_t seed);

    // The psi basis itself, which makes d(f, g) = ||f - g||_H^2.
    static DissimilarityBasis orthonormal(const FusionBasisPtr& basis);

    std::size_t size() const noexcept { return vectors_.size(); }
    const std::vector<FusionFunction>& vectors() const noexcept { return vectors_; }
    const FusionBasisPtr& basis() const noexcept { return basis_; }
    const std::string& source() const noexcept { return source_; }
    // Row k holds the coefficients of b_k.
    const RowMatrix& stacked() const noexcept { return stacked_; }

    std::size_t span_rank(double tol = 1e-10) const;
    bool spans(double tol = 1e-10) const { return span_rank(tol) == basis_->rank(); }

    // (<f, b_1>_H, ..., <f, b_n>_H).
    Vector project(const FusionFunction& f) const;

private:
    FusionBasisPtr basis_;
    std::vector<FusionFunction> vectors_;
    std::string source_;
    RowMatrix stacked_;
};

double dissimilarity(const FusionFunction& f, const FusionFunction& g, const DissimilarityBasis& family);

struct FusionResult {
    double a = 0.0;
    double b = 0.0;
    FusionFunction fused;
    double objective = 0.0;
    bool degenerate = false;
};

// Value of the fusion objective at (a, b), straight from the definition.
double fusion_objective(const FusionFunction& f1, const FusionFunction& f2, const DissimilarityBasis& family,
                        double ridge, double a, double b);

// Closed-form minimizer from the 2x2 normal equations. A singular system is
// resolved by its minimum-norm solution and flagged as degenerate.
FusionResult fuse(const FusionFunction& f1, const FusionFunction& f2, const DissimilarityBasis& family,
                  double ridge = 1e-6);

}  // namespace kfuse
