#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "kfuse/errors.hpp"
#include "kfuse/pipeline/run.hpp"

using namespace kfuse;
namespace fs = std::filesystem;

namespace {

// Unique per process so the SIMD and scalar runs can share a machine.
fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("kfuse_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t pos; (pos = text.find("\r\n", start)) != std::string::npos; start = pos + 2) {
        out.push_back(text.substr(start, pos - start));
    }
    return out;
}

std::vector<double> split_row(const std::string& row) {
    std::vector<double> out;
    std::stringstream ss(row);
    for (std::string cell; std::getline(ss, cell, ',');) out.push_back(std::stod(cell));
    return out;
}

}  // namespace

TEST_CASE("shipped config matches the built-in default") {
    const auto path = fs::path(KFUSE_SOURCE_DIR) / "configs" / "two_agent_cubic.json";
    CHECK(ExperimentConfig::load(path).to_json() == ExperimentConfig::two_agent_cubic().to_json());
}

TEST_CASE("generate_data examples") {
    const auto cfg = ExperimentConfig::two_agent_cubic();

    const auto d1 = generate_data(cfg, AgentId::First);
    REQUIRE(d1.size() == 20);
    CHECK(d1.inputs.front()[0] == -5.0);
    CHECK(d1.inputs.back()[0] == 5.0);
    for (std::size_t k = 0; k < 20; ++k) {
        CHECK(std::abs(d1.inputs[k][0] - (-5.0 + 10.0 * static_cast<double>(k) / 19.0)) < 1e-14);
        CHECK(d1.outputs[k] == cfg.truth(d1.inputs[k]));
    }

    const auto d2 = generate_data(cfg, AgentId::Second);
    REQUIRE(d2.size() == 20);
    std::size_t left = 0;
    for (const auto& x : d2.inputs) left += x[0] <= -5.0 ? 1 : 0;
    CHECK(left == 10);
    CHECK(d2.inputs.front()[0] == -10.0);
    CHECK(d2.inputs.back()[0] == 10.0);
}

TEST_CASE("samples follow region lengths") {
    const std::vector<Interval> regions{{0.0, 1.0}, {2.0, 5.0}};
    const auto counts = allocate_samples(regions, 10);
    CHECK(counts[0] + counts[1] == 10);
    CHECK(counts[1] > counts[0]);
    CHECK_THROWS_AS(allocate_samples(std::vector<Interval>{}, 3), PreconditionError);
}

TEST_CASE("noise is seeded") {
    auto cfg = ExperimentConfig::two_agent_cubic();
    cfg.agents[0].noise_std = 0.1;
    const auto a = generate_data(cfg, AgentId::First);
    const auto b = generate_data(cfg, AgentId::First);
    CHECK(a.outputs == b.outputs);
    CHECK(a.outputs[3] != cfg.truth(a.inputs[3]));
}

TEST_CASE("config parsing reports the offending key") {
    auto j = ExperimentConfig::two_agent_cubic().to_json();
    j["agents"][1]["sample_count"] = -3;
    try {
        (void)ExperimentConfig::from_json(j);
        FAIL("expected a config error");
    } catch (const PreconditionError& e) {
        CHECK(std::string(e.what()).find("agents[1].sample_count") != std::string::npos);
    }
    j = ExperimentConfig::two_agent_cubic().to_json();
    j["agents"][0]["features"][0]["kind"] = "bessel";
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), PreconditionError);
    j = ExperimentConfig::two_agent_cubic().to_json();
    j.erase("agents");
    CHECK_THROWS_AS(ExperimentConfig::from_json(j), PreconditionError);
}

TEST_CASE("default experiment orderings and artifacts") {
    const auto dir = scratch("default");
    const auto result = run_pipeline(ExperimentConfig::two_agent_cubic(), dir);

    const auto& fused = result.metric("fused");
    CHECK(fused.rmse_on_grid < result.metric("f1_up").rmse_on_grid);
    CHECK(result.metric("f1_down").rmse_on_grid < result.metric("f1_up").rmse_on_grid);
    CHECK(result.metric("f2_down").rmse_on_grid <= result.metric("f2_up").rmse_on_grid);
    CHECK(result.metric("centralized").rmse_on_grid < result.metric("f1_up").rmse_on_grid);

    for (const char* name : {"estimates.csv", "metrics.json", "operators.json", "messages.jsonl"}) {
        CHECK(fs::exists(dir / name));
    }
    const auto rows = lines(slurp(dir / "estimates.csv"));
    REQUIRE(rows.size() == 402);
    CHECK(rows[0] == "x,true,f1_up,f2_up,fused,f1_down,f2_down,centralized");
    double prev = -1e300;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto cells = split_row(rows[i]);
        REQUIRE(cells.size() == 8);
        for (double v : cells) CHECK(std::isfinite(v));
        CHECK(cells[0] > prev);
        prev = cells[0];
    }
    fs::remove_all(dir);
}

TEST_CASE("two grid points give a three-line file") {
    const auto dir = scratch("grid2");
    auto cfg = ExperimentConfig::two_agent_cubic();
    cfg.evaluation.grid_points = 2;
    (void)run_pipeline(cfg, dir);
    CHECK(lines(slurp(dir / "estimates.csv")).size() == 3);
    fs::remove_all(dir);
}

TEST_CASE("reruns are byte identical") {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    (void)run_pipeline(ExperimentConfig::two_agent_cubic(), a);
    (void)run_pipeline(ExperimentConfig::two_agent_cubic(), b);
    for (const char* name : {"estimates.csv", "metrics.json", "operators.json", "messages.jsonl"}) {
        CHECK(slurp(a / name) == slurp(b / name));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("messages carry coefficients and a digest only") {
    const auto dir = scratch("privacy");
    const auto result = run_pipeline(ExperimentConfig::two_agent_cubic(), dir);
    const auto messages = read_messages(dir / "messages.jsonl");
    CHECK(messages.size() == 4);
    std::ifstream in(dir / "messages.jsonl");
    for (std::string line; std::getline(in, line);) {
        const auto j = io::Json::parse(line);
        std::vector<std::string> keys;
        for (const auto& [k, v] : j.items()) keys.push_back(k);
        CHECK(keys == message_schema_keys());
        CHECK(j.at("coeffs").size() == result.basis->rank());
    }
    auto tampered = messages.front().to_json();
    tampered["inputs"] = io::Json::array({1.0, 2.0});
    CHECK_THROWS_AS(TransferMessage::from_json(tampered), InputError);

    // A message for another basis is refused.
    auto foreign = messages.front();
    foreign.basis_digest = std::string(64, '0');
    CHECK_THROWS_AS(foreign.payload(result.basis), BindingError);
    fs::remove_all(dir);
}

TEST_CASE("fusion replay from messages reproduces the metrics") {
    const auto dir = scratch("replay");
    const auto result = run_pipeline(ExperimentConfig::two_agent_cubic(), dir);
    const auto replay = replay_fusion(dir);
    const auto& stored = result.metrics_json;
    CHECK(std::abs(replay["fusion"]["a"].get<double>() - stored["fusion"]["a"].get<double>()) <= 1e-12);
    CHECK(std::abs(replay["fusion"]["b"].get<double>() - stored["fusion"]["b"].get<double>()) <= 1e-12);
    for (const char* name : {"fused", "f1_down", "f2_down"}) {
        for (const char* field : {"rmse_on_grid", "sup_error_on_grid", "h_norm"}) {
            const double want = stored["estimates"][name][field].get<double>();
            CHECK(std::abs(replay["estimates"][name][field].get<double>() - want) <= 1e-12 * (1 + std::abs(want)));
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("plot data needs the artifacts") {
    const auto dir = scratch("missing");
    fs::create_directories(dir);
    CHECK_THROWS(emit_plot_data(dir));
    fs::remove_all(dir);
}

TEST_CASE("failing stage is named") {
    auto cfg = ExperimentConfig::two_agent_cubic();
    cfg.agents[0].features.push_back(Primitive::monomial(1));
    try {
        (void)run_pipeline(cfg, scratch("bad"));
        FAIL("expected a stage error");
    } catch (const StageError& e) {
        CHECK(e.stage() == "basis");
    }
}

TEST_CASE("shared true function: uploads, fusion and pooling recover it") {
    // Only x^2 is shared between the agents.
    auto cfg = ExperimentConfig::two_agent_cubic();
    cfg.truth = TrueFunction{};
    cfg.truth.kind = "expansion";
    cfg.truth.features = {Primitive::monomial(2)};
    cfg.truth.coeffs = {0.75};
    cfg.agents[0].ridge = cfg.agents[1].ridge = cfg.centralized_ridge = cfg.fusion.ridge = 1e-8;
    const auto dir = scratch("shared");
    const auto result = run_pipeline(cfg, dir);
    for (const char* name : {"f1_up", "f2_up", "fused", "centralized"}) {
        CHECK(result.metric(name).rmse_on_grid < 1e-4);
    }
    // Downloads apply sqrt(L) to the fused function, which scales a shared
    // component by 1/sqrt2: the agents receive 0.75 x^2 / sqrt2.
    for (std::size_t i = 0; i < 2; ++i) {
        const auto& g = result.downloaded[i];
        const auto idx = i == 0 ? 2 : 0;
        CHECK(std::abs(g.coeffs()(idx) - 0.75 / std::sqrt(2.0)) < 1e-4);
        CHECK(g.coeffs().norm() - std::abs(g.coeffs()(idx)) < 1e-4);
    }
    fs::remove_all(dir);
}
