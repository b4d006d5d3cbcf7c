#include "kfuse/pipeline/run.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <optional>

#include "kfuse/errors.hpp"
#include "kfuse/simd/kernels.hpp"

namespace kfuse {

using io::Json;

namespace {

template <class F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(name, e.what());
    }
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("missing artifact " + path.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw InputError("malformed " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    io::write(out, j, 2);
    out << '\n';
}

// Row-major psi evaluations, one row per grid point.
RowMatrix grid_matrix(const FusionBasis& basis, std::span<const double> grid) {
    RowMatrix e(static_cast<Eigen::Index>(grid.size()), static_cast<Eigen::Index>(basis.rank()));
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double x = grid[k];
        e.row(static_cast<Eigen::Index>(k)) = basis.basis_values({&x, 1}).transpose();
    }
    return e;
}

std::vector<double> evaluate(const RowMatrix& e, const Vector& coeffs) {
    std::vector<double> values(static_cast<std::size_t>(e.rows()));
    simd::gemv({e.data(), static_cast<std::size_t>(e.size())}, static_cast<std::size_t>(e.rows()),
               static_cast<std::size_t>(e.cols()), {coeffs.data(), static_cast<std::size_t>(coeffs.size())}, values);
    return values;
}

std::vector<double> truth_on(const TrueFunction& truth, std::span<const double> grid) {
    std::vector<double> out;
    out.reserve(grid.size());
    for (double x : grid) out.push_back(truth({&x, 1}));
    return out;
}

Json metrics_json(const EstimateMetrics& m) {
    return Json{{"rmse_on_grid", m.rmse_on_grid}, {"sup_error_on_grid", m.sup_error_on_grid}, {"h_norm", m.h_norm}};
}

Json fusion_json(const FusionCenterOutput& c, const FusionConfig& settings) {
    return Json{{"a", c.fusion.a},
                {"b", c.fusion.b},
                {"degenerate", c.fusion.degenerate},
                {"objective", c.fusion.objective},
                {"n_b", settings.n_b},
                {"family_rank", c.family_rank},
                {"fused_coeffs", vector_to_json(c.fusion.fused.coeffs())}};
}

const TransferMessage& find_message(const std::vector<TransferMessage>& messages, Direction d, AgentId a) {
    for (const auto& m : messages) {
        if (m.direction == d && m.agent == a) return m;
    }
    throw InputError("messages.jsonl has no " + std::string(direction_name(d)) + " message for agent " +
                     std::to_string(to_int(a)));
}

}  // namespace

FusionBasisPtr build_experiment_basis(const ExperimentConfig& cfg) {
    const Box domain{cfg.domain};
    auto first = FeatureSet::create(cfg.agents[0].features, domain);
    auto second = FeatureSet::create(cfg.agents[1].features, domain);
    return align_canonical(*FusionBasis::build(std::move(first), std::move(second)));
}

LocalFit fit_agent(const ExperimentConfig& cfg, AgentId agent, const FusionBasisPtr& basis) {
    const Dataset data = generate_data(cfg, agent);
    auto solution = solve_dual(RegressionProblem<FeatureSet>{data, cfg.agent(agent).ridge, basis->agent(agent)});
    const FusionFunction up = upload(solution.function, basis);
    TransferMessage message{Direction::Upload, agent, basis_digest(*basis), up.coeffs()};
    return {agent, std::move(solution), std::move(message)};
}

FusionCenterOutput run_fusion_center(const FusionBasisPtr& basis, const TransferMessage& first,
                                     const TransferMessage& second, const FusionConfig& settings) {
    if (first.direction != Direction::Upload || second.direction != Direction::Upload || first.agent != AgentId::First ||
        second.agent != AgentId::Second) {
        throw InputError("fusion center expects upload messages from agent 1 and agent 2");
    }
    const FusionFunction f1 = first.payload(basis);
    const FusionFunction f2 = second.payload(basis);
    const auto family = DissimilarityBasis::sampled_kernel_sections(basis, settings.n_b, settings.anchor_range.lo,
                                                                    settings.anchor_range.hi, settings.seed);
    FusionResult fusion = fuse(f1, f2, family, settings.ridge);

    const std::string digest = basis_digest(*basis);
    std::array<TransferMessage, 2> downloads;
    for (AgentId a : {AgentId::First, AgentId::Second}) {
        const auto root = sqrt_operator(operator_matrix(*basis, a));
        downloads[static_cast<std::size_t>(to_int(a) - 1)] =
            TransferMessage{Direction::Download, a, digest, apply(root, fusion.fused).coeffs()};
    }
    return {std::move(fusion), family.span_rank(), std::move(downloads)};
}

EstimateMetrics measure(const FusionBasis& basis, const Vector& coeffs, std::span<const double> grid,
                        std::span<const double> truth) {
    const auto values = evaluate(grid_matrix(basis, grid), coeffs);
    EstimateMetrics m;
    double sq = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
        const double err = values[k] - truth[k];
        sq += err * err;
        m.sup_error_on_grid = std::max(m.sup_error_on_grid, std::abs(err));
    }
    m.rmse_on_grid = std::sqrt(sq / static_cast<double>(values.size()));
    m.h_norm = coeffs.norm();
    return m;
}

const EstimateMetrics& PipelineResult::metric(std::string_view name) const {
    for (std::size_t i = 0; i < kEstimateNames.size(); ++i) {
        if (name == kEstimateNames[i]) return metrics[i];
    }
    throw PreconditionError("unknown estimate '" + std::string(name) + "'");
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
    stage("config", [&] { cfg.validate(); });
    const auto basis = stage("basis", [&] { return build_experiment_basis(cfg); });

    std::vector<LocalFit> local;
    local.push_back(stage("fit-agent-1", [&] { return fit_agent(cfg, AgentId::First, basis); }));
    local.push_back(stage("fit-agent-2", [&] { return fit_agent(cfg, AgentId::Second, basis); }));

    auto center = stage("fuse", [&] { return run_fusion_center(basis, local[0].upload, local[1].upload, cfg.fusion); });

    std::vector<AgentFunction> downloaded;
    for (AgentId a : {AgentId::First, AgentId::Second}) {
        downloaded.push_back(stage(a == AgentId::First ? "download-agent-1" : "download-agent-2", [&] {
            const auto& msg = center.downloads[static_cast<std::size_t>(to_int(a) - 1)];
            return convert_to_agent(msg.payload(basis), a);
        }));
    }

    auto centralized = stage("centralized", [&] {
        return solve_centralized(generate_data(cfg, AgentId::First), generate_data(cfg, AgentId::Second), basis,
                                 cfg.centralized_ridge);
    });

    const auto grid = evaluation_grid(cfg.evaluation);
    const auto truth = truth_on(cfg.truth, grid);
    const std::array<const Vector*, 6> estimates{&local[0].upload.coeffs,   &local[1].upload.coeffs,
                                                 &center.fusion.fused.coeffs(), &center.downloads[0].coeffs,
                                                 &center.downloads[1].coeffs, &centralized.function.coeffs()};
    std::array<EstimateMetrics, 6> metrics;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        metrics[i] = measure(*basis, *estimates[i], grid, truth);
    }

    Json report = stage("metrics", [&] {
        Json seeds{{"fusion", cfg.fusion.seed},
                   {"noise", Json::array({cfg.agents[0].noise_seed, cfg.agents[1].noise_seed})}};
        if (cfg.truth.kind == "random-cubic") seeds["true_function"] = cfg.truth.seed;
        Json agents = Json::array();
        for (std::size_t i = 0; i < 2; ++i) {
            agents.push_back(Json{{"agent", i + 1},
                                  {"objective", local[i].solution.objective},
                                  {"coeffs", vector_to_json(local[i].solution.function.coeffs())},
                                  {"downloaded_coeffs", vector_to_json(downloaded[i].coeffs())}});
        }
        Json est = Json::object();
        for (std::size_t i = 0; i < kEstimateNames.size(); ++i) est[kEstimateNames[i]] = metrics_json(metrics[i]);
        return Json{{"config", cfg.to_json()},
                    {"seeds", seeds},
                    {"basis", {{"rank", basis->rank()}, {"digest", basis_digest(*basis)}}},
                    {"agents", agents},
                    {"fusion", fusion_json(center, cfg.fusion)},
                    {"centralized",
                     {{"objective", centralized.objective}, {"coeffs", vector_to_json(centralized.function.coeffs())}}},
                    {"estimates", est}};
    });

    stage("write", [&] {
        std::filesystem::create_directories(out_dir);
        write_json(out_dir / "operators.json", operators_to_json(*basis));
        write_messages(out_dir / "messages.jsonl",
                       {local[0].upload, local[1].upload, center.downloads[0], center.downloads[1]});
        write_json(out_dir / "metrics.json", report);
        emit_plot_data(out_dir);
    });

    return PipelineResult{basis,   std::move(local),       std::move(center), std::move(downloaded),
                          std::move(centralized), metrics, std::move(report)};
}

Json replay_fusion(const std::filesystem::path& out_dir) {
    const auto basis = basis_from_operators_json(read_json(out_dir / "operators.json"));
    const auto messages = read_messages(out_dir / "messages.jsonl");
    const Json metrics = read_json(out_dir / "metrics.json");
    const ExperimentConfig cfg = ExperimentConfig::from_json(metrics.at("config"));

    const auto center = run_fusion_center(basis, find_message(messages, Direction::Upload, AgentId::First),
                                          find_message(messages, Direction::Upload, AgentId::Second), cfg.fusion);
    // Agents must be able to express what they receive.
    for (AgentId a : {AgentId::First, AgentId::Second}) {
        (void)convert_to_agent(center.downloads[static_cast<std::size_t>(to_int(a) - 1)].payload(basis), a);
    }

    const auto grid = evaluation_grid(cfg.evaluation);
    const auto truth = truth_on(cfg.truth, grid);
    return Json{{"fusion", fusion_json(center, cfg.fusion)},
                {"estimates",
                 {{"fused", metrics_json(measure(*basis, center.fusion.fused.coeffs(), grid, truth))},
                  {"f1_down", metrics_json(measure(*basis, center.downloads[0].coeffs, grid, truth))},
                  {"f2_down", metrics_json(measure(*basis, center.downloads[1].coeffs, grid, truth))}}}};
}

void emit_plot_data(const std::filesystem::path& out_dir) {
    const auto basis = basis_from_operators_json(read_json(out_dir / "operators.json"));
    const auto messages = read_messages(out_dir / "messages.jsonl");
    const Json metrics = read_json(out_dir / "metrics.json");
    const ExperimentConfig cfg = ExperimentConfig::from_json(metrics.at("config"));

    const std::array<Vector, 6> coeffs{
        find_message(messages, Direction::Upload, AgentId::First).payload(basis).coeffs(),
        find_message(messages, Direction::Upload, AgentId::Second).payload(basis).coeffs(),
        vector_from_json(metrics.at("fusion").at("fused_coeffs")),
        find_message(messages, Direction::Download, AgentId::First).payload(basis).coeffs(),
        find_message(messages, Direction::Download, AgentId::Second).payload(basis).coeffs(),
        vector_from_json(metrics.at("centralized").at("coeffs"))};

    const auto grid = evaluation_grid(cfg.evaluation);
    const auto truth = truth_on(cfg.truth, grid);
    const RowMatrix e = grid_matrix(*basis, grid);
    std::array<std::vector<double>, 6> columns;
    for (std::size_t i = 0; i < coeffs.size(); ++i) {
        if (static_cast<std::size_t>(coeffs[i].size()) != basis->rank()) {
            throw InputError(std::string("coefficients of ") + kEstimateNames[i] + " do not match the basis rank");
        }
        columns[i] = evaluate(e, coeffs[i]);
    }

    std::ofstream out(out_dir / "estimates.csv", std::ios::binary);
    if (!out) throw InputError("cannot write estimates.csv");
    out << "x,true";
    for (const char* name : kEstimateNames) out << ',' << name;
    out << "\r\n";
    for (std::size_t k = 0; k < grid.size(); ++k) {
        out << io::format_real(grid[k]) << ',' << io::format_real(truth[k]);
        for (const auto& col : columns) out << ',' << io::format_real(col[k]);
        out << "\r\n";
    }
}

}  // namespace kfuse
