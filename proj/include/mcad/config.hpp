#pragma once

#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcad/harness.hpp"

namespace mcad {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using json = nlohmann::json;

/// Configuration rejected: carries a line-oriented diagnostic.
class config_error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void reject_unknown(const json& obj, const std::string& scope,
                           const std::set<std::string>& known) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!known.count(it.key()))
            throw config_error(scope + ": unknown key '" + it.key() + "'");
    }
}

template <typename T>
T get_or(const json& obj, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw config_error("key '" + key + "': wrong type");
    }
}

}  // namespace detail

/// The schema, with every default equal to the paper-scale base regime:
/// R=200, lambda=0.00025, alpha=3, N0=500, L=40, M=60, p_a=0.05,
/// delta2 = R^(-alpha)/10, 2000 realizations.
inline json default_config() {
    return json{
        {"schema_version", kSchemaVersion},
        {"network",
         {{"R", 200.0},
          {"lambda", 0.00025},
          {"alpha", 3.0},
          {"n0", 500},
          {"n_ring", -1},
          {"rmax_factor", 10.0},
          {"delta2", "auto"}}},
        {"signal", {{"L", 40}, {"M", 60}}},
        {"prior",
         {{"kind", "iid"},
          {"p_a", 0.05},
          {"eta", 0.0},
          {"group_size", 2},
          {"p_k", 0.05},
          {"epsilon", 1e-6}}},
        {"detectors", {"ml_noncoop", "map_noncoop", "ml_coop", "map_coop"}},
        {"detector",
         {{"tol", 1e-6},
          {"max_iters", 50},
          {"refresh_every", 10},
          {"freeze_x", false},
          {"init_a", 0.0},
          {"init_x", 0.0}}},
        {"sweep", {{"variable", "theta"}, {"grid", json::array()}}},
        {"realizations", 2000},
        {"seed", 1},
        {"workers", 0},
        {"quadrature_tol", 1e-8},
    };
}

/// Named parameter profiles. "paper" is the schema default; "desk" shrinks
/// the network for fast runs.
inline json profile_overrides(const std::string& name) {
    if (name == "paper") return json::object();
    if (name == "desk") {
        return json{{"network", {{"n0", 100}, {"n_ring", 100}}},
                    {"signal", {{"L", 20}, {"M", 16}}},
                    {"realizations", 200}};
    }
    throw config_error("unknown profile '" + name + "' (expected desk or paper)");
}

namespace detail {

inline void merge_into(json& base, const json& patch) {
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        if (it->is_object() && base.contains(it.key()) && base[it.key()].is_object())
            merge_into(base[it.key()], *it);
        else
            base[it.key()] = *it;
    }
}

}  // namespace detail

/// Parses "--set a.b.c=value" override paths; values parse as JSON when
/// possible (numbers, booleans, arrays) and fall back to strings.
inline json parse_override(const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw config_error("override '" + kv + "': expected key=value");
    const std::string path = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;  // plain string
    }
    json out = json::object();
    json* cur = &out;
    std::stringstream ss(path);
    std::string part;
    std::vector<std::string> parts;
    while (std::getline(ss, part, '.')) parts.push_back(part);
    if (parts.empty()) throw config_error("override '" + kv + "': empty key");
    for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
        (*cur)[parts[i]] = json::object();
        cur = &(*cur)[parts[i]];
    }
    (*cur)[parts.back()] = value;
    return out;
}

/// Validates the merged configuration against the schema (unknown keys
/// rejected, ranges checked) and resolves it into an ExperimentSpec.
inline ExperimentSpec resolve_config(const json& cfg) {
    detail::reject_unknown(cfg, "config",
                           {"schema_version", "network", "signal", "prior", "detectors", "detector",
                            "sweep", "realizations", "seed", "workers", "quadrature_tol"});
    ExperimentSpec spec;
    const int sv = detail::get_or(cfg, "schema_version", kSchemaVersion);
    if (sv != kSchemaVersion)
        throw config_error("schema_version: expected " + std::to_string(kSchemaVersion));

    const json net = cfg.value("network", json::object());
    detail::reject_unknown(net, "network", {"R", "lambda", "alpha", "n0", "n_ring", "rmax_factor", "delta2"});
    spec.R = detail::get_or(net, "R", spec.R);
    spec.lambda = detail::get_or(net, "lambda", spec.lambda);
    spec.alpha = detail::get_or(net, "alpha", spec.alpha);
    spec.n0 = detail::get_or(net, "n0", spec.n0);
    spec.n_ring = detail::get_or(net, "n_ring", spec.n_ring);
    spec.rmax_factor = detail::get_or(net, "rmax_factor", spec.rmax_factor);
    if (net.contains("delta2")) {
        if (net.at("delta2").is_string()) {
            if (net.at("delta2").get<std::string>() != "auto")
                throw config_error("network.delta2: expected a number or \"auto\"");
            spec.delta2 = -1.0;
        } else {
            spec.delta2 = net.at("delta2").get<double>();
            if (!(spec.delta2 > 0.0)) throw config_error("network.delta2: must be > 0");
        }
    }
    if (!(spec.R > 0.0)) throw config_error("network.R: must be > 0");
    if (spec.lambda < 0.0) throw config_error("network.lambda: must be >= 0");
    if (!(spec.alpha > 2.0)) throw config_error("network.alpha: must be > 2");
    if (spec.n0 < 1) throw config_error("network.n0: must be >= 1");
    if (!(spec.rmax_factor * spec.R > 2.0 * kSqrt3 * spec.R + spec.R))
        throw config_error("network.rmax_factor: disk must cover the 7-cell cluster");

    const json sig = cfg.value("signal", json::object());
    detail::reject_unknown(sig, "signal", {"L", "M"});
    spec.L = detail::get_or(sig, "L", spec.L);
    spec.M = detail::get_or(sig, "M", spec.M);
    if (spec.L < 1) throw config_error("signal.L: must be >= 1");
    if (spec.M < 1) throw config_error("signal.M: must be >= 1");

    const json pr = cfg.value("prior", json::object());
    detail::reject_unknown(pr, "prior", {"kind", "p_a", "eta", "group_size", "p_k", "epsilon"});
    const std::string kind = detail::get_or<std::string>(pr, "kind", "iid");
    if (kind == "iid") spec.prior.kind = PriorKind::Iid;
    else if (kind == "pairs") spec.prior.kind = PriorKind::Pairs;
    else if (kind == "groups") spec.prior.kind = PriorKind::Groups;
    else throw config_error("prior.kind: expected iid, pairs, or groups");
    spec.prior.p_a = detail::get_or(pr, "p_a", spec.prior.p_a);
    spec.prior.eta = detail::get_or(pr, "eta", spec.prior.eta);
    spec.prior.group_size = detail::get_or(pr, "group_size", spec.prior.group_size);
    spec.prior.p_k = detail::get_or(pr, "p_k", spec.prior.p_k);
    spec.prior.eps = detail::get_or(pr, "epsilon", spec.prior.eps);
    if (!(spec.prior.p_a > 0.0 && spec.prior.p_a < 1.0))
        throw config_error("prior.p_a: out of range, need 0 < p_a < 1");
    if (!(spec.prior.eta >= 0.0 && spec.prior.eta <= 1.0))
        throw config_error("prior.eta: out of range, need 0 <= eta <= 1");
    if (!(spec.prior.p_k > 0.0 && spec.prior.p_k < 1.0))
        throw config_error("prior.p_k: out of range, need 0 < p_k < 1");
    if (!(spec.prior.eps > 0.0)) throw config_error("prior.epsilon: must be > 0");
    if (spec.prior.group_size < 1) throw config_error("prior.group_size: must be >= 1");

    if (cfg.contains("detectors")) {
        spec.detectors.clear();
        for (const auto& d : cfg.at("detectors")) {
            const auto name = detector_from_string(d.get<std::string>());
            if (!name) throw config_error("detectors: unknown detector '" + d.get<std::string>() + "'");
            spec.detectors.push_back(*name);
        }
        if (spec.detectors.empty()) throw config_error("detectors: must not be empty");
    }

    const json det = cfg.value("detector", json::object());
    detail::reject_unknown(det, "detector",
                           {"tol", "max_iters", "refresh_every", "freeze_x", "init_a", "init_x"});
    spec.det_cfg.tol = detail::get_or(det, "tol", spec.det_cfg.tol);
    spec.det_cfg.max_iters = detail::get_or(det, "max_iters", spec.det_cfg.max_iters);
    spec.det_cfg.refresh_every = detail::get_or(det, "refresh_every", spec.det_cfg.refresh_every);
    spec.det_cfg.freeze_x = detail::get_or(det, "freeze_x", spec.det_cfg.freeze_x);
    spec.det_cfg.init_a = detail::get_or(det, "init_a", spec.det_cfg.init_a);
    spec.det_cfg.init_x = detail::get_or(det, "init_x", spec.det_cfg.init_x);
    if (!(spec.det_cfg.tol > 0.0)) throw config_error("detector.tol: must be > 0");
    if (spec.det_cfg.max_iters < 1) throw config_error("detector.max_iters: must be >= 1");

    const json sw = cfg.value("sweep", json::object());
    detail::reject_unknown(sw, "sweep", {"variable", "grid"});
    const std::string var = detail::get_or<std::string>(sw, "variable", "theta");
    if (var == "theta") spec.sweep_var = SweepVar::Theta;
    else if (var == "L") spec.sweep_var = SweepVar::L;
    else if (var == "M") spec.sweep_var = SweepVar::M;
    else if (var == "lambda") spec.sweep_var = SweepVar::Lambda;
    else if (var == "eta") spec.sweep_var = SweepVar::Eta;
    else if (var == "group_size") spec.sweep_var = SweepVar::GroupSize;
    else throw config_error("sweep.variable: expected theta, L, M, lambda, eta, or group_size");
    spec.grid.clear();
    for (const auto& v : sw.value("grid", json::array())) spec.grid.push_back(v.get<double>());
    if (spec.grid.empty() && spec.sweep_var != SweepVar::Theta)
        throw config_error("sweep.grid: must not be empty");
    if (spec.sweep_var == SweepVar::Eta && spec.prior.kind != PriorKind::Pairs)
        throw config_error("sweep.variable=eta requires prior.kind=pairs");
    if (spec.sweep_var == SweepVar::GroupSize && spec.prior.kind != PriorKind::Groups)
        throw config_error("sweep.variable=group_size requires prior.kind=groups");

    spec.realizations = detail::get_or(cfg, "realizations", spec.realizations);
    if (spec.realizations < 1) throw config_error("realizations: must be >= 1");
    spec.seed = detail::get_or<std::uint64_t>(cfg, "seed", spec.seed);
    spec.workers = detail::get_or(cfg, "workers", spec.workers);
    spec.quad_tol = detail::get_or(cfg, "quadrature_tol", spec.quad_tol);
    if (!(spec.quad_tol > 0.0)) throw config_error("quadrature_tol: must be > 0");

    // Cross-field checks the harness relies on.
    const auto check_prior_fits = [&](long n_cell, const char* what) {
        if (spec.prior.kind == PriorKind::Pairs && n_cell % 2 != 0)
            throw config_error(std::string(what) + ": pairs prior needs an even device count");
        if (spec.prior.kind == PriorKind::Groups) {
            for (double g : spec.sweep_var == SweepVar::GroupSize ? spec.grid
                                                                  : std::vector<double>{double(spec.prior.group_size)}) {
                const long gs = static_cast<long>(g);
                if (gs < 1 || n_cell % gs != 0)
                    throw config_error(std::string(what) +
                                       ": groups prior needs group_size dividing the device count");
            }
        }
    };
    check_prior_fits(spec.n0, "network.n0");
    check_prior_fits(spec.ring_count(), "network.n_ring");
    return spec;
}

/// Reads a config file; a run manifest (identified by its "config" and
/// "mcad_version" keys) is unwrapped so any run is reproducible straight
/// from its manifest.
inline json load_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw config_error("cannot read config file: " + path);
    json cfg;
    try {
        cfg = json::parse(is);
    } catch (const json::exception& e) {
        throw config_error("config parse error in " + path + ": " + e.what());
    }
    if (cfg.is_object() && cfg.contains("config") && cfg.contains("mcad_version"))
        return cfg.at("config");
    return cfg;
}

/// Full resolved configuration (defaults + file + profile + overrides).
inline json assemble_config(const json& file_cfg, const std::string& profile,
                            const std::vector<std::string>& overrides) {
    json cfg = default_config();
    if (!profile.empty()) detail::merge_into(cfg, profile_overrides(profile));
    detail::merge_into(cfg, file_cfg);
    for (const std::string& kv : overrides) detail::merge_into(cfg, parse_override(kv));
    return cfg;
}

inline json make_manifest(const json& resolved_cfg, const std::vector<std::string>& overrides,
                          const std::string& profile) {
    return json{{"mcad_version", kVersion},
                {"schema_version", kSchemaVersion},
                {"profile", profile.empty() ? "paper" : profile},
                {"overrides", overrides},
                {"config", resolved_cfg}};
}

}  // namespace mcad
