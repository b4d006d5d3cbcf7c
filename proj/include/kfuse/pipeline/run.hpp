#pragma once

// The two-agent estimation pipeline: local fit -> upload -> fuse -> download,
// plus the pooled-data baseline. Artifacts written to the output directory:
//
//   operators.json   basis map and the L-bar / sqrt(L-bar) matrices
//   messages.jsonl   upload and download messages, one JSON object per line
//   metrics.json     config echo, seeds, fusion weights, per-estimate errors
//   estimates.csv    x, true, f1_up, f2_up, fused, f1_down, f2_down, centralized

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "kfuse/fusion_optimizer.hpp"
#include "kfuse/pipeline/config.hpp"
#include "kfuse/pipeline/messages.hpp"
#include "kfuse/regression.hpp"

namespace kfuse {

inline constexpr std::array<const char*, 6> kEstimateNames{"f1_up", "f2_up", "fused", "f1_down", "f2_down", "centralized"};

struct EstimateMetrics {
    double rmse_on_grid = 0.0;
    double sup_error_on_grid = 0.0;
    double h_norm = 0.0;
};

// Feature sets from the config and the canonically aligned fusion basis.
FusionBasisPtr build_experiment_basis(const ExperimentConfig& cfg);

struct LocalFit {
    AgentId agent = AgentId::First;
    RegressionSolution<AgentFunction> solution;
    TransferMessage upload;
};

// Agent-side work: generate data, solve the local regression, build the upload message.
LocalFit fit_agent(const ExperimentConfig& cfg, AgentId agent, const FusionBasisPtr& basis);

struct FusionCenterOutput {
    FusionResult fusion;
    std::size_t family_rank = 0;
    std::array<TransferMessage, 2> downloads;
};

// Fusion-center work. Sees only the basis, the upload messages and its own settings.
FusionCenterOutput run_fusion_center(const FusionBasisPtr& basis, const TransferMessage& first,
                                     const TransferMessage& second, const FusionConfig& settings);

// Errors of a psi-coefficient estimate against the true function on the grid.
EstimateMetrics measure(const FusionBasis& basis, const Vector& coeffs, std::span<const double> grid,
                        std::span<const double> truth);

struct PipelineResult {
    FusionBasisPtr basis;
    std::vector<LocalFit> local;  // agent 1, agent 2
    FusionCenterOutput center;
    std::vector<AgentFunction> downloaded;
    RegressionSolution<FusionFunction> centralized;
    std::array<EstimateMetrics, 6> metrics;  // ordered as kEstimateNames
    io::Json metrics_json;

    const EstimateMetrics& metric(std::string_view name) const;
};

// Runs every stage and writes the four artifacts into out_dir. Failures are
// rethrown as StageError naming the stage.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Re-runs fusion and download from messages.jsonl + operators.json alone and
// returns the recomputed fusion block and fused / downloaded metrics.
io::Json replay_fusion(const std::filesystem::path& out_dir);

// Rewrites estimates.csv from the artifacts in out_dir.
void emit_plot_data(const std::filesystem::path& out_dir);

}  // namespace kfuse
