#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "kfuse/feature_space.hpp"
#include "kfuse/fusion_space.hpp"
#include "kfuse/pipeline/json_writer.hpp"

namespace kfuse {

// The function the agents try to recover, as a finite feature expansion.
struct TrueFunction {
    std::string kind = "random-cubic";  // or "expansion"
    std::uint64_t seed = 0;             // random-cubic only
    Interval coeff_range{-2.0, 2.0};    // random-cubic only
    std::vector<Feature> features;
    std::vector<double> coeffs;

    double operator()(std::span<const double> x) const;

    // Cubic with coefficients of 1, x, x^2, x^3 drawn uniformly from `range`.
    static TrueFunction random_cubic(std::uint64_t seed, Interval range = {-2.0, 2.0});
};

struct AgentConfig {
    std::vector<Feature> features;
    std::vector<Interval> input_regions;
    std::size_t sample_count = 20;
    double noise_std = 0.0;
    std::uint64_t noise_seed = 0;
    double ridge = 1e-6;
};

struct FusionConfig {
    std::size_t n_b = 40;
    Interval anchor_range{-10.0, 10.0};
    std::uint64_t seed = 0;
    double ridge = 1e-6;
};

struct EvaluationConfig {
    Interval grid_range{-10.0, 10.0};
    std::size_t grid_points = 401;
};

// One scalar-input experiment with two agents.
struct ExperimentConfig {
    TrueFunction truth;
    Interval domain{-10.0, 10.0};
    std::array<AgentConfig, 2> agents;
    FusionConfig fusion;
    double centralized_ridge = 1e-6;
    EvaluationConfig evaluation;
    std::filesystem::path output_dir = "out";

    const AgentConfig& agent(AgentId a) const noexcept { return agents[static_cast<std::size_t>(to_int(a) - 1)]; }

    // Throws PreconditionError with the offending key on malformed input.
    static ExperimentConfig from_json(const io::Json& j);
    static ExperimentConfig load(const std::filesystem::path& path);

    // Everything except output_dir, in a form from_json accepts.
    io::Json to_json() const;

    // The stock two-agent cubic experiment: agent 1 sees {1, x, x^2} on
    // [-5, 5], agent 2 sees {x^2, x^3} on [-10, -5] U [5, 10].
    static ExperimentConfig two_agent_cubic();

    void validate() const;
};

// Evenly spaced 1-D points with both ends included; a single point sits at the midpoint.
std::vector<double> linspace(double lo, double hi, std::size_t count);

// Evaluation grid of the config.
std::vector<double> evaluation_grid(const EvaluationConfig& eval);

// Splits `total` samples across intervals in proportion to their lengths
// (largest remainder, ties to the earlier interval).
std::vector<std::size_t> allocate_samples(std::span<const Interval> regions, std::size_t total);

// Uniformly spaced inputs over the agent's regions, outputs from the true
// function plus seeded Gaussian noise.
Dataset generate_data(const ExperimentConfig& cfg, AgentId agent);

io::Json feature_to_json(const Feature& f);
Feature feature_from_json(const io::Json& j);

}  // namespace kfuse
