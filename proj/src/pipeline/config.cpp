#include "kfuse/pipeline/config.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "kfuse/errors.hpp"

namespace kfuse {

namespace {

using io::Json;

[[noreturn]] void bad(const std::string& key, const std::string& why) {
    throw PreconditionError("config: '" + key + "' " + why);
}

const Json& require(const Json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) bad(path + key, "is required");
    return j.at(key);
}

double number(const Json& j, const std::string& key) {
    if (!j.is_number()) bad(key, "must be a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) bad(key, "must be finite");
    return v;
}

std::uint64_t unsigned_int(const Json& j, const std::string& key) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0)) {
        bad(key, "must be a non-negative integer");
    }
    return j.get<std::uint64_t>();
}

Interval interval(const Json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2) bad(key, "must be a [lo, hi] pair");
    Interval iv{number(j[0], key), number(j[1], key)};
    if (!(iv.lo < iv.hi)) bad(key, "must satisfy lo < hi");
    return iv;
}

Json interval_json(const Interval& iv) { return Json::array({iv.lo, iv.hi}); }

std::vector<Feature> features_from(const Json& j, const std::string& key) {
    if (!j.is_array() || j.empty()) bad(key, "must be a non-empty array of features");
    std::vector<Feature> out;
    for (const auto& f : j) {
        try {
            out.push_back(feature_from_json(f));
        } catch (const PreconditionError& e) {
            bad(key, e.what());
        }
    }
    return out;
}

Json features_json(const std::vector<Feature>& fs) {
    Json out = Json::array();
    for (const auto& f : fs) out.push_back(feature_to_json(f));
    return out;
}

AgentConfig agent_from(const Json& j, const std::string& path) {
    AgentConfig a;
    a.features = features_from(require(j, "features", path), path + "features");
    const auto& regions = require(j, "input_regions", path);
    if (!regions.is_array() || regions.empty()) bad(path + "input_regions", "must be a non-empty array");
    for (const auto& r : regions) a.input_regions.push_back(interval(r, path + "input_regions"));
    a.sample_count = unsigned_int(require(j, "sample_count", path), path + "sample_count");
    if (j.contains("noise_std")) a.noise_std = number(j.at("noise_std"), path + "noise_std");
    if (j.contains("noise_seed")) a.noise_seed = unsigned_int(j.at("noise_seed"), path + "noise_seed");
    if (j.contains("ridge")) a.ridge = number(j.at("ridge"), path + "ridge");
    return a;
}

Json agent_json(const AgentConfig& a) {
    Json regions = Json::array();
    for (const auto& r : a.input_regions) regions.push_back(interval_json(r));
    return Json{{"features", features_json(a.features)},
                {"input_regions", regions},
                {"sample_count", a.sample_count},
                {"noise_std", a.noise_std},
                {"noise_seed", a.noise_seed},
                {"ridge", a.ridge}};
}

}  // namespace

Json feature_to_json(const Feature& f) {
    auto primitive = [](const Primitive& p) { return Json{{"kind", std::string(p.kind_name())}, {"param", p.param}}; };
    if (f.input_dim() == 1) return primitive(f.factors().front());
    Json factors = Json::array();
    for (const auto& p : f.factors()) factors.push_back(primitive(p));
    return Json{{"factors", factors}};
}

Feature feature_from_json(const Json& j) {
    auto primitive = [](const Json& p) {
        if (!p.is_object() || !p.contains("kind") || !p.contains("param") || !p.at("kind").is_string()) {
            throw PreconditionError("feature must look like {\"kind\": ..., \"param\": ...}");
        }
        return Primitive::from_kind(p.at("kind").get<std::string>(), number(p.at("param"), "param"));
    };
    if (j.is_object() && j.contains("factors")) {
        std::vector<Primitive> factors;
        for (const auto& p : j.at("factors")) factors.push_back(primitive(p));
        return Feature(std::move(factors));
    }
    return Feature(primitive(j));
}

double TrueFunction::operator()(std::span<const double> x) const {
    double acc = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) acc += coeffs[i] * features[i](x);
    return acc;
}

TrueFunction TrueFunction::random_cubic(std::uint64_t seed, Interval range) {
    TrueFunction t;
    t.kind = "random-cubic";
    t.seed = seed;
    t.coeff_range = range;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(range.lo, range.hi);
    for (unsigned p = 0; p <= 3; ++p) {
        t.features.emplace_back(Primitive::monomial(p));
        t.coeffs.push_back(dist(rng));
    }
    return t;
}

ExperimentConfig ExperimentConfig::from_json(const Json& j) {
    if (!j.is_object()) bad("<root>", "must be an object");
    ExperimentConfig cfg;

    const auto& truth = require(j, "true_function", "");
    const auto& kind = require(truth, "kind", "true_function.");
    if (!kind.is_string()) bad("true_function.kind", "must be a string");
    if (kind == "random-cubic") {
        Interval range{-2.0, 2.0};
        if (truth.contains("coeff_range")) range = interval(truth.at("coeff_range"), "true_function.coeff_range");
        cfg.truth = TrueFunction::random_cubic(unsigned_int(require(truth, "seed", "true_function."), "true_function.seed"),
                                               range);
    } else if (kind == "expansion") {
        const auto& terms = require(truth, "terms", "true_function.");
        if (!terms.is_array() || terms.empty()) bad("true_function.terms", "must be a non-empty array");
        cfg.truth.kind = "expansion";
        for (const auto& t : terms) {
            cfg.truth.features.push_back(feature_from_json(t));
            cfg.truth.coeffs.push_back(number(require(t, "coeff", "true_function.terms[]."), "true_function.terms[].coeff"));
        }
    } else {
        bad("true_function.kind", "must be \"random-cubic\" or \"expansion\"");
    }

    const auto& agents = require(j, "agents", "");
    if (!agents.is_array() || agents.size() != 2) bad("agents", "must list exactly two agents");
    cfg.agents[0] = agent_from(agents[0], "agents[0].");
    cfg.agents[1] = agent_from(agents[1], "agents[1].");

    if (j.contains("domain")) {
        cfg.domain = interval(j.at("domain"), "domain");
    }

    if (j.contains("fusion")) {
        const auto& f = j.at("fusion");
        if (f.contains("n_b")) cfg.fusion.n_b = unsigned_int(f.at("n_b"), "fusion.n_b");
        if (f.contains("anchor_range")) cfg.fusion.anchor_range = interval(f.at("anchor_range"), "fusion.anchor_range");
        if (f.contains("seed")) cfg.fusion.seed = unsigned_int(f.at("seed"), "fusion.seed");
        if (f.contains("ridge")) cfg.fusion.ridge = number(f.at("ridge"), "fusion.ridge");
    }
    if (j.contains("centralized") && j.at("centralized").contains("ridge")) {
        cfg.centralized_ridge = number(j.at("centralized").at("ridge"), "centralized.ridge");
    }
    if (j.contains("evaluation")) {
        const auto& e = j.at("evaluation");
        if (e.contains("grid_range")) cfg.evaluation.grid_range = interval(e.at("grid_range"), "evaluation.grid_range");
        if (e.contains("grid_points")) {
            cfg.evaluation.grid_points = unsigned_int(e.at("grid_points"), "evaluation.grid_points");
        }
    }
    if (j.contains("output_dir")) {
        if (!j.at("output_dir").is_string()) bad("output_dir", "must be a string");
        cfg.output_dir = j.at("output_dir").get<std::string>();
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw PreconditionError("config: cannot open " + path.string());
    }
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw PreconditionError("config: " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

Json ExperimentConfig::to_json() const {
    Json truth_json;
    if (truth.kind == "random-cubic") {
        truth_json = Json{{"kind", "random-cubic"}, {"seed", truth.seed}, {"coeff_range", interval_json(truth.coeff_range)}};
    } else {
        Json terms = Json::array();
        for (std::size_t i = 0; i < truth.features.size(); ++i) {
            Json t = feature_to_json(truth.features[i]);
            t["coeff"] = truth.coeffs[i];
            terms.push_back(t);
        }
        truth_json = Json{{"kind", "expansion"}, {"terms", terms}};
    }
    return Json{{"true_function", truth_json},
                {"domain", interval_json(domain)},
                {"agents", Json::array({agent_json(agents[0]), agent_json(agents[1])})},
                {"fusion",
                 {{"n_b", fusion.n_b},
                  {"anchor_range", interval_json(fusion.anchor_range)},
                  {"seed", fusion.seed},
                  {"ridge", fusion.ridge}}},
                {"centralized", {{"ridge", centralized_ridge}}},
                {"evaluation", {{"grid_range", interval_json(evaluation.grid_range)}, {"grid_points", evaluation.grid_points}}}};
}

ExperimentConfig ExperimentConfig::two_agent_cubic() {
    ExperimentConfig cfg;
    cfg.truth = TrueFunction::random_cubic(173210);
    cfg.domain = {-10.0, 10.0};
    cfg.agents[0].features = {Primitive::monomial(0), Primitive::monomial(1), Primitive::monomial(2)};
    cfg.agents[0].input_regions = {{-5.0, 5.0}};
    cfg.agents[0].sample_count = 20;
    cfg.agents[0].noise_seed = 101;
    cfg.agents[1].features = {Primitive::monomial(2), Primitive::monomial(3)};
    cfg.agents[1].input_regions = {{-10.0, -5.0}, {5.0, 10.0}};
    cfg.agents[1].sample_count = 20;
    cfg.agents[1].noise_seed = 202;
    cfg.fusion = {40, {-10.0, 10.0}, 2023, 1e-6};
    cfg.centralized_ridge = 1e-6;
    cfg.evaluation = {{-10.0, 10.0}, 401};
    return cfg;
}

void ExperimentConfig::validate() const {
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto prefix = "agents[" + std::to_string(i) + "].";
        const auto& a = agents[i];
        if (a.features.empty()) bad(prefix + "features", "must be non-empty");
        for (const auto& f : a.features) {
            if (f.input_dim() != 1) bad(prefix + "features", "must be scalar-input features");
        }
        if (a.sample_count < 1) bad(prefix + "sample_count", "must be at least 1");
        if (a.input_regions.empty()) bad(prefix + "input_regions", "must be non-empty");
        for (const auto& r : a.input_regions) {
            if (!(r.lo < r.hi)) bad(prefix + "input_regions", "intervals must satisfy lo < hi");
            if (r.lo < domain.lo || r.hi > domain.hi) bad(prefix + "input_regions", "must lie inside the domain");
        }
        if (!(a.noise_std >= 0.0)) bad(prefix + "noise_std", "must be non-negative");
        if (!(a.ridge > 0.0)) bad(prefix + "ridge", "must be positive");
    }
    if (truth.features.empty() || truth.features.size() != truth.coeffs.size()) {
        bad("true_function", "must have one coefficient per feature");
    }
    if (fusion.n_b < 1) bad("fusion.n_b", "must be at least 1");
    if (!(fusion.ridge >= 0.0)) bad("fusion.ridge", "must be non-negative");
    if (!(centralized_ridge > 0.0)) bad("centralized.ridge", "must be positive");
    if (evaluation.grid_points < 2) bad("evaluation.grid_points", "must be at least 2");
}

std::vector<double> linspace(double lo, double hi, std::size_t count) {
    std::vector<double> out;
    if (count == 0) return out;
    if (count == 1) return {0.5 * (lo + hi)};
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
        out.push_back(k + 1 == count ? hi : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(count - 1));
    }
    return out;
}

std::vector<double> evaluation_grid(const EvaluationConfig& eval) {
    return linspace(eval.grid_range.lo, eval.grid_range.hi, eval.grid_points);
}

std::vector<std::size_t> allocate_samples(std::span<const Interval> regions, std::size_t total) {
    if (regions.empty()) {
        throw PreconditionError("cannot allocate samples over an empty region");
    }
    double length = 0.0;
    for (const auto& r : regions) length += r.length();
    std::vector<std::size_t> counts(regions.size());
    std::vector<double> remainder(regions.size());
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < regions.size(); ++i) {
        const double share = static_cast<double>(total) * regions[i].length() / length;
        counts[i] = static_cast<std::size_t>(std::floor(share));
        remainder[i] = share - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(regions.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned) {
        ++counts[order[k % order.size()]];
    }
    return counts;
}

Dataset generate_data(const ExperimentConfig& cfg, AgentId agent) {
    const auto& a = cfg.agent(agent);
    if (a.input_regions.empty()) {
        throw PreconditionError("agent " + std::to_string(to_int(agent)) + " has an empty input region");
    }
    const auto counts = allocate_samples(a.input_regions, a.sample_count);
    Dataset data;
    for (std::size_t i = 0; i < a.input_regions.size(); ++i) {
        for (double x : linspace(a.input_regions[i].lo, a.input_regions[i].hi, counts[i])) {
            data.inputs.push_back({x});
        }
    }
    std::mt19937_64 rng(a.noise_seed);
    std::normal_distribution<double> noise(0.0, a.noise_std > 0.0 ? a.noise_std : 1.0);
    for (const auto& x : data.inputs) {
        double y = cfg.truth(x);
        if (a.noise_std > 0.0) y += noise(rng);
        data.outputs.push_back(y);
    }
    return data;
}

}  // namespace kfuse
