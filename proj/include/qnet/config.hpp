#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qnet/errors.hpp"
#include "qnet/network.hpp"

namespace qnet {

using json = nlohmann::ordered_json;

// Experiment description: which heavy-traffic sequence to study, which
// members to sample, and how hard. Budgets follow the mixing-time scaling of
// the sequence; see the factor fields.
struct ExperimentConfig {
    std::string name = "experiment";
    NetworkSpec base;
    Vec kappa0;
    std::vector<long> n_list;
    long samples_per_n = 4000;     // pooled over replications
    int replications = 4;
    double warmup_factor = 20.0;   // warmup = factor * n / kappa_star^2
    double spacing_factor = 0.5;   // spacing = factor * n
    std::uint64_t seed = 1;
    int threads = 1;
    int sojourn_station = -1;      // negative disables the sojourn experiment
    std::vector<long> visit_counts;
    long sojourn_samples = 0;
    std::string output_dir = "qnet-out";
    bool quiet = false;
};

namespace detail {

inline const json& need(const json& j, const char* key, const char* where) {
    auto it = j.find(key);
    if (it == j.end())
        throw Error("config-error", std::string("missing key '") + key + "' in " + where);
    return *it;
}

inline double num(const json& j, const char* key, const char* where) {
    const json& v = need(j, key, where);
    if (!v.is_number())
        throw Error("config-error", std::string("'") + key + "' must be a number in " + where);
    return v.get<double>();
}

inline DistributionSpec parse_distribution(const json& j, const char* where) {
    if (!j.is_object())
        throw Error("config-error", std::string("distribution must be an object in ") + where);
    std::string family = need(j, "family", where).get<std::string>();
    try {
        if (family == "exponential") return DistributionSpec::exponential(num(j, "rate", where));
        if (family == "erlang")
            return DistributionSpec::erlang(num(j, "shape", where), num(j, "rate", where));
        if (family == "hyperexp2")
            return DistributionSpec::hyperexp2(num(j, "p", where), num(j, "rate1", where),
                                               num(j, "rate2", where));
        if (family == "deterministic")
            return DistributionSpec::deterministic(num(j, "value", where));
        if (family == "uniform")
            return DistributionSpec::uniform(num(j, "low", where), num(j, "high", where));
    } catch (const Error& e) {
        if (e.code() == "config-error") throw;
        throw Error("config-error", std::string(where) + ": " + e.what());
    }
    throw Error("config-error", "unknown distribution family '" + family + "' in " + where);
}

inline json distribution_to_json(const DistributionSpec& d) {
    json j;
    j["family"] = family_name(d.family);
    switch (d.family) {
        case DistFamily::exponential: j["rate"] = d.a; break;
        case DistFamily::erlang:
            j["shape"] = d.a;
            j["rate"] = d.b;
            break;
        case DistFamily::hyperexp2:
            j["p"] = d.a;
            j["rate1"] = d.b;
            j["rate2"] = d.c;
            break;
        case DistFamily::deterministic: j["value"] = d.a; break;
        case DistFamily::uniform:
            j["low"] = d.a;
            j["high"] = d.b;
            break;
    }
    return j;
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
    if (!root.is_object()) throw Error("config-error", "configuration root must be an object");
    ExperimentConfig cfg;
    if (root.contains("name")) cfg.name = root["name"].get<std::string>();

    const json& net = detail::need(root, "network", "configuration");
    const json& stations = detail::need(net, "stations", "network");
    if (!stations.is_array() || stations.empty())
        throw Error("config-error", "network.stations must be a nonempty array");
    for (const auto& st : stations) {
        StationSpec s{std::nullopt,
                      detail::parse_distribution(detail::need(st, "service", "station"), "service")};
        if (st.contains("arrival") && !st["arrival"].is_null())
            s.arrival = detail::parse_distribution(st["arrival"], "arrival");
        cfg.base.stations.push_back(std::move(s));
    }
    const int J = static_cast<int>(cfg.base.stations.size());

    const json& routing = detail::need(net, "routing", "network");
    if (!routing.is_array() || static_cast<int>(routing.size()) != J)
        throw Error("config-error", "network.routing must be a J x J array");
    cfg.base.routing = Mat::Zero(J, J);
    for (int i = 0; i < J; ++i) {
        const json& row = routing[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<int>(row.size()) != J)
            throw Error("config-error", "network.routing must be a J x J array");
        for (int k = 0; k < J; ++k) {
            const json& v = row[static_cast<std::size_t>(k)];
            if (!v.is_number()) throw Error("config-error", "routing entries must be numbers");
            cfg.base.routing(i, k) = v.get<double>();
        }
    }

    const json& k0 = detail::need(root, "kappa0", "configuration");
    if (!k0.is_array() || static_cast<int>(k0.size()) != J)
        throw Error("config-error", "kappa0 must be an array of length J");
    cfg.kappa0 = Vec(J);
    for (int j = 0; j < J; ++j) {
        const json& v = k0[static_cast<std::size_t>(j)];
        cfg.kappa0[j] = v.is_null() ? 0.0 : v.get<double>();
    }

    const json& exp = detail::need(root, "experiment", "configuration");
    const json& nlist = detail::need(exp, "n", "experiment");
    if (!nlist.is_array() || nlist.empty())
        throw Error("config-error", "experiment.n must be a nonempty array");
    for (const auto& v : nlist) {
        long n = v.get<long>();
        if (n < 1) throw Error("config-error", "sequence indices must be >= 1");
        cfg.n_list.push_back(n);
    }
    if (exp.contains("samples")) cfg.samples_per_n = exp["samples"].get<long>();
    if (exp.contains("replications")) cfg.replications = exp["replications"].get<int>();
    if (exp.contains("warmup_factor")) cfg.warmup_factor = exp["warmup_factor"].get<double>();
    if (exp.contains("spacing_factor")) cfg.spacing_factor = exp["spacing_factor"].get<double>();
    if (exp.contains("seed")) cfg.seed = exp["seed"].get<std::uint64_t>();
    if (exp.contains("sojourn") && !exp["sojourn"].is_null()) {
        const json& so = exp["sojourn"];
        cfg.sojourn_station = detail::need(so, "station", "sojourn").get<int>();
        const json& visits = detail::need(so, "visits", "sojourn");
        if (!visits.is_array() || static_cast<int>(visits.size()) != J)
            throw Error("config-error", "sojourn.visits must be an array of length J");
        for (const auto& v : visits) cfg.visit_counts.push_back(v.get<long>());
        cfg.sojourn_samples = detail::need(so, "samples", "sojourn").get<long>();
    }

    if (root.contains("output")) {
        const json& out = root["output"];
        if (out.contains("dir")) cfg.output_dir = out["dir"].get<std::string>();
    }

    if (cfg.samples_per_n < 10) throw Error("config-error", "experiment.samples must be >= 10");
    if (cfg.replications < 1 || cfg.replications > 1024)
        throw Error("config-error", "experiment.replications out of range");
    if (cfg.samples_per_n % cfg.replications != 0)
        throw Error("config-error", "experiment.samples must divide evenly into replications");
    if (!(cfg.warmup_factor > 0.0) || !(cfg.spacing_factor > 0.0))
        throw Error("config-error", "budget factors must be positive");

    try {
        cfg.base = validate_network(std::move(cfg.base));
    } catch (const Error& e) {
        throw Error("config-error", std::string("network invalid: ") + e.what());
    }
    return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
    json root;
    root["name"] = cfg.name;
    json stations = json::array();
    for (const auto& st : cfg.base.stations) {
        json s;
        s["arrival"] = st.arrival ? detail::distribution_to_json(*st.arrival) : json(nullptr);
        s["service"] = detail::distribution_to_json(st.service);
        stations.push_back(std::move(s));
    }
    root["network"]["stations"] = std::move(stations);
    json routing = json::array();
    for (Eigen::Index i = 0; i < cfg.base.routing.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < cfg.base.routing.cols(); ++k)
            row.push_back(cfg.base.routing(i, k));
        routing.push_back(std::move(row));
    }
    root["network"]["routing"] = std::move(routing);
    json k0 = json::array();
    for (Eigen::Index j = 0; j < cfg.kappa0.size(); ++j) k0.push_back(cfg.kappa0[j]);
    root["kappa0"] = std::move(k0);
    root["experiment"]["n"] = cfg.n_list;
    root["experiment"]["samples"] = cfg.samples_per_n;
    root["experiment"]["replications"] = cfg.replications;
    root["experiment"]["warmup_factor"] = cfg.warmup_factor;
    root["experiment"]["spacing_factor"] = cfg.spacing_factor;
    root["experiment"]["seed"] = cfg.seed;
    if (cfg.sojourn_station >= 0) {
        root["experiment"]["sojourn"]["station"] = cfg.sojourn_station;
        root["experiment"]["sojourn"]["visits"] = cfg.visit_counts;
        root["experiment"]["sojourn"]["samples"] = cfg.sojourn_samples;
    }
    root["output"]["dir"] = cfg.output_dir;
    return root;
}

// Built-in configurations exercising the two canonical sequences.
inline ExperimentConfig preset_config(const std::string& name) {
    json root;
    if (name == "mm1") {
        root = json::parse(R"({
          "name": "mm1",
          "network": {
            "stations": [
              {"arrival": {"family": "exponential", "rate": 1.0},
               "service": {"family": "exponential", "rate": 1.0}}
            ],
            "routing": [[0.0]]
          },
          "kappa0": [1.0],
          "experiment": {
            "n": [64, 256, 1024],
            "samples": 4000,
            "replications": 4,
            "sojourn": {"station": 0, "visits": [1], "samples": 1000000}
          },
          "output": {"dir": "qnet-out-mm1"}
        })");
    } else if (name == "tandem") {
        root = json::parse(R"({
          "name": "tandem",
          "network": {
            "stations": [
              {"arrival": {"family": "exponential", "rate": 1.0},
               "service": {"family": "exponential", "rate": 1.0}},
              {"arrival": null,
               "service": {"family": "exponential", "rate": 1.0}}
            ],
            "routing": [[0.0, 1.0], [0.0, 0.0]]
          },
          "kappa0": [1.0, null],
          "experiment": {
            "n": [100, 400],
            "samples": 6000,
            "replications": 4,
            "sojourn": {"station": 0, "visits": [1, 1], "samples": 600000}
          },
          "output": {"dir": "qnet-out-tandem"}
        })");
    } else {
        throw Error("config-error", "unknown preset '" + name + "'");
    }
    return parse_config(root);
}

// Loads a configuration from a file path, or falls back to a preset name.
inline ExperimentConfig load_config(const std::string& path_or_preset) {
    std::ifstream in(path_or_preset);
    if (!in) {
        if (path_or_preset == "mm1" || path_or_preset == "tandem")
            return preset_config(path_or_preset);
        throw Error("config-error", "cannot open configuration '" + path_or_preset + "'");
    }
    json root;
    try {
        in >> root;
    } catch (const std::exception& e) {
        throw Error("config-error",
                    "cannot parse '" + path_or_preset + "': " + std::string(e.what()));
    }
    return parse_config(root);
}

// Output directory resolution: the environment wins over the config value.
inline std::string resolve_output_dir(const ExperimentConfig& cfg) {
    if (const char* env = std::getenv("QNET_OUTPUT_DIR"); env && *env) return env;
    return cfg.output_dir;
}

}  // namespace qnet
