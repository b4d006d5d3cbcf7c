// kfuse: command-line driver for the two-agent fusion pipeline.
//
//   kfuse pipeline --config <path> [--out-dir <path>]
//   kfuse fit      --config <path> --agent <1|2>
//   kfuse fuse     --out-dir <path>

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "kfuse/errors.hpp"
#include "kfuse/pipeline/run.hpp"

namespace {

using kfuse::io::Json;

int run_pipeline_cmd(const std::string& config_path, const std::string& out_dir_opt) {
    const auto cfg = [&] {
        try {
            return kfuse::ExperimentConfig::load(config_path);
        } catch (const std::exception& e) {
            throw kfuse::StageError("config", e.what());
        }
    }();
    const std::filesystem::path out_dir = out_dir_opt.empty() ? cfg.output_dir : std::filesystem::path(out_dir_opt);
    const auto result = kfuse::run_pipeline(cfg, out_dir);

    std::printf("basis rank %zu, fusion a = %.6g, b = %.6g%s\n", result.basis->rank(), result.center.fusion.a,
                result.center.fusion.b, result.center.fusion.degenerate ? " (degenerate)" : "");
    std::printf("%-12s %14s %14s %14s\n", "estimate", "rmse", "sup_error", "h_norm");
    for (std::size_t i = 0; i < kfuse::kEstimateNames.size(); ++i) {
        const auto& m = result.metrics[i];
        std::printf("%-12s %14.6g %14.6g %14.6g\n", kfuse::kEstimateNames[i], m.rmse_on_grid, m.sup_error_on_grid,
                    m.h_norm);
    }
    std::printf("artifacts written to %s\n", out_dir.string().c_str());
    return 0;
}

int run_fit_cmd(const std::string& config_path, int agent_id) {
    const auto cfg = [&] {
        try {
            return kfuse::ExperimentConfig::load(config_path);
        } catch (const std::exception& e) {
            throw kfuse::StageError("config", e.what());
        }
    }();
    const auto agent = kfuse::agent_from_int(agent_id);
    const auto basis = [&] {
        try {
            return kfuse::build_experiment_basis(cfg);
        } catch (const std::exception& e) {
            throw kfuse::StageError("basis", e.what());
        }
    }();
    const auto fit = [&] {
        try {
            return kfuse::fit_agent(cfg, agent, basis);
        } catch (const std::exception& e) {
            throw kfuse::StageError("fit-agent-" + std::to_string(agent_id), e.what());
        }
    }();

    Json features = Json::array();
    for (const auto& f : basis->agent(agent)->features()) features.push_back(f.descriptor());
    const Json out{{"agent", agent_id},
                   {"features", features},
                   {"coeffs", kfuse::vector_to_json(fit.solution.function.coeffs())},
                   {"objective", fit.solution.objective},
                   {"upload", fit.upload.to_json()}};
    std::cout << kfuse::io::dump(out, 2) << '\n';
    return 0;
}

int run_fuse_cmd(const std::string& out_dir) {
    Json replay;
    try {
        replay = kfuse::replay_fusion(out_dir);
    } catch (const std::exception& e) {
        throw kfuse::StageError("fuse", e.what());
    }
    const auto path = std::filesystem::path(out_dir) / "replay.json";
    std::ofstream out(path, std::ios::binary);
    kfuse::io::write(out, replay, 2);
    out << '\n';
    std::cout << kfuse::io::dump(replay, 2) << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-agent function estimation with fusion-space upload and download"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    int agent = 1;

    auto* pipeline = app.add_subcommand("pipeline", "Run local fits, fusion, downloads and the pooled baseline");
    pipeline->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    pipeline->add_option("--out-dir", out_dir, "Output directory (defaults to the config's output_dir)");

    auto* fit = app.add_subcommand("fit", "Fit one agent locally and print its upload message");
    fit->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    fit->add_option("--agent", agent, "Agent id")->required()->check(CLI::IsMember({1, 2}));

    auto* fuse = app.add_subcommand("fuse", "Replay fusion and download from stored messages");
    fuse->add_option("--out-dir", out_dir, "Directory holding pipeline artifacts")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*pipeline) return run_pipeline_cmd(config_path, out_dir);
        if (*fit) return run_fit_cmd(config_path, agent);
        if (*fuse) return run_fuse_cmd(out_dir);
    } catch (const kfuse::StageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: [" << app.get_subcommands().front()->get_name() << "] " << e.what() << '\n';
        return 2;
    }
    return 1;
}
