#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "qnet/experiments.hpp"

using namespace qnet;
using Catch::Matchers::WithinAbs;

namespace {

json small_mm1_config(std::vector<long> ns, long samples, int reps) {
    json root = json::parse(R"({
      "name": "unit-mm1",
      "network": {
        "stations": [
          {"arrival": {"family": "exponential", "rate": 1.0},
           "service": {"family": "exponential", "rate": 1.0}}
        ],
        "routing": [[0.0]]
      },
      "kappa0": [1.0],
      "experiment": {"n": [16], "samples": 400, "replications": 2}
    })");
    root["experiment"]["n"] = ns;
    root["experiment"]["samples"] = samples;
    root["experiment"]["replications"] = reps;
    return root;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("closed-form gap between scaled geometric tails and their limit") {
    REQUIRE_THAT(scaled_geometric_gap(1.0, 64), WithinAbs(0.024284043652, 1e-10));
    REQUIRE_THAT(scaled_geometric_gap(1.0, 256), WithinAbs(0.011806847192, 1e-10));
    REQUIRE_THAT(scaled_geometric_gap(1.0, 1024), WithinAbs(0.005824335368, 1e-10));
    REQUIRE_THAT(scaled_geometric_gap(2.0, 100), WithinAbs(0.040261922869, 1e-10));
    double prev = 1.0;
    for (long n : {64L, 256L, 1024L, 4096L}) {
        double g = scaled_geometric_gap(1.0, n);
        REQUIRE(g < prev);
        prev = g;
    }
    REQUIRE(scaled_geometric_gap(1.0, 1024) < 0.02);
    REQUIRE(testutil::error_code_of([] { scaled_geometric_gap(5.0, 16); }) ==
            "invalid-argument");
}

TEST_CASE("presets parse into validated critical networks") {
    auto mm1 = preset_config("mm1");
    REQUIRE(mm1.base.dim() == 1);
    REQUIRE(mm1.base.derived);
    REQUIRE(mm1.n_list == std::vector<long>{64, 256, 1024});
    REQUIRE(mm1.sojourn_station == 0);

    auto tandem = preset_config("tandem");
    REQUIRE(tandem.base.dim() == 2);
    REQUIRE(tandem.kappa0[1] == 0.0);
    REQUIRE(tandem.visit_counts == std::vector<long>{1, 1});

    REQUIRE(testutil::error_code_of([] { preset_config("mm7"); }) == "config-error");
    REQUIRE(testutil::error_code_of([] { load_config("/no/such/file.json"); }) ==
            "config-error");
    REQUIRE(load_config("mm1").name == "mm1");
}

TEST_CASE("config rejects malformed documents") {
    auto base = small_mm1_config({16}, 400, 2);

    auto broken = base;
    broken.erase("network");
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");

    broken = base;
    broken["network"]["routing"] = json::array({json::array({0.0, 0.0})});
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");

    broken = base;
    broken["network"]["stations"][0]["service"]["family"] = "pareto";
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");

    broken = base;
    broken["experiment"]["samples"] = 401;  // not divisible by replications
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");

    broken = base;
    broken["network"]["stations"][0]["service"]["rate"] = -2.0;
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");

    broken = base;
    broken["kappa0"] = json::array({1.0, 1.0});
    REQUIRE(testutil::error_code_of([&] { parse_config(broken); }) == "config-error");
}

TEST_CASE("config survives a serialization round trip") {
    auto cfg = preset_config("tandem");
    auto back = parse_config(config_to_json(cfg));
    REQUIRE(back.name == cfg.name);
    REQUIRE(back.n_list == cfg.n_list);
    REQUIRE(back.samples_per_n == cfg.samples_per_n);
    REQUIRE((back.kappa0 - cfg.kappa0).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(network_digest(back.base) == network_digest(cfg.base));
    REQUIRE(back.visit_counts == cfg.visit_counts);
}

TEST_CASE("interchange distances shrink along the index list") {
    auto cfg = parse_config(small_mm1_config({16, 256}, 2000, 2));
    auto rep = run_interchange(cfg);
    REQUIRE(rep.records.size() == 2);
    REQUIRE(rep.records[0].reference == "product-form");
    REQUIRE_THAT(rep.records[0].eta[0], WithinAbs(1.0, 1e-12));
    for (const auto& rec : rep.records) {
        REQUIRE(rec.ks[0] >= 0.0);
        REQUIRE(rec.ks[0] <= 1.0);
        REQUIRE(rec.joint_tail_gap >= 0.0);
        REQUIRE(rec.joint_tail_gap <= 1.0);
        REQUIRE(rec.samples == 2000);
    }
    REQUIRE(rep.records[1].ks[0] < rep.records[0].ks[0]);
    REQUIRE(rep.distances_decrease);
    REQUIRE(rep.slope_margin > 1.0);
    // utilization matches the advertised gap
    REQUIRE_THAT(rep.records[0].rho[0], WithinAbs(1.0 - 1.0 / 4.0, 1e-12));
    REQUIRE_THAT(rep.records[1].rho[0], WithinAbs(1.0 - 1.0 / 16.0, 1e-12));
}

TEST_CASE("records round-trip losslessly and reruns are identical") {
    auto cfg = parse_config(small_mm1_config({16, 64}, 400, 2));
    auto rep1 = run_interchange(cfg);
    auto rep2 = run_interchange(cfg);
    REQUIRE(rep1.records.size() == rep2.records.size());
    for (std::size_t i = 0; i < rep1.records.size(); ++i) {
        std::string a = to_json(rep1.records[i]).dump();
        std::string b = to_json(rep2.records[i]).dump();
        REQUIRE(a == b);
        auto back = interchange_record_from_json(json::parse(a));
        REQUIRE(to_json(back).dump() == a);
    }
}

TEST_CASE("per-member substreams ignore the rest of the n-list") {
    auto full = run_interchange(parse_config(small_mm1_config({16, 64}, 400, 2)));
    auto solo = run_interchange(parse_config(small_mm1_config({64}, 400, 2)));
    REQUIRE(to_json(full.records[1]).dump() == to_json(solo.records[0]).dump());
    REQUIRE((full.records[1].scaled - solo.records[0].scaled).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("thread count does not change the results") {
    auto base = small_mm1_config({16, 64}, 400, 4);
    auto cfg1 = parse_config(base);
    cfg1.threads = 1;
    auto cfg4 = parse_config(base);
    cfg4.threads = 4;
    auto rep1 = run_interchange(cfg1);
    auto rep4 = run_interchange(cfg4);
    for (std::size_t i = 0; i < rep1.records.size(); ++i)
        REQUIRE(to_json(rep1.records[i]).dump() == to_json(rep4.records[i]).dump());
}

TEST_CASE("parallel map propagates worker errors") {
    REQUIRE(testutil::error_code_of([] {
                parallel_for(4, 16, [](std::size_t i) {
                    if (i == 3) throw Error("invalid-argument", "boom");
                });
            }) == "invalid-argument");
}

TEST_CASE("non-product-form base falls back to a simulated reference") {
    json root = json::parse(R"({
      "name": "unit-det-tandem",
      "network": {
        "stations": [
          {"arrival": {"family": "exponential", "rate": 1.0},
           "service": {"family": "deterministic", "value": 1.0}},
          {"arrival": null,
           "service": {"family": "exponential", "rate": 1.0}}
        ],
        "routing": [[0.0, 1.0], [0.0, 0.0]]
      },
      "kappa0": [1.0, null],
      "experiment": {"n": [49], "samples": 400, "replications": 2}
    })");
    auto rep = run_interchange(parse_config(root));
    REQUIRE(rep.records[0].reference == "rbm-simulation");
    REQUIRE(rep.records[0].eta.size() == 0);
    REQUIRE(rep.records[0].ref_draws.rows() >= 4000);
    for (int j = 0; j < 2; ++j) {
        REQUIRE(rep.records[0].ks[j] >= 0.0);
        REQUIRE(rep.records[0].ks[j] <= 1.0);
    }
}

TEST_CASE("non-critical base propagates its error") {
    auto root = small_mm1_config({16}, 400, 2);
    root["network"]["stations"][0]["service"]["rate"] = 2.0;
    REQUIRE(testutil::error_code_of([&] { run_interchange(parse_config(root)); }) ==
            "not-critical");
}

TEST_CASE("product-form reference agrees with a long diffusion run") {
    auto mm1 = rbm_params(make_heavy_traffic_sequence(preset_config("mm1").base,
                                                      Vec::Constant(1, 1.0)));
    auto cv1 = cross_validate_reference(mm1, 6000, 41);
    REQUIRE(cv1.pass);

    auto tandem_cfg = preset_config("tandem");
    auto tandem = rbm_params(make_heavy_traffic_sequence(tandem_cfg.base, tandem_cfg.kappa0));
    auto cv2 = cross_validate_reference(tandem, 3000, 42);
    REQUIRE(cv2.pass);
}

TEST_CASE("scaled sojourn means approach the snapshot limit") {
    // consecutive sojourns decorrelate on the member's relaxation timescale
    // (about n time units), so the budget must span many multiples of n
    auto root = small_mm1_config({64}, 400, 2);
    root["experiment"]["sojourn"] = json{{"station", 0}, {"visits", {1}}, {"samples", 40000}};
    auto cfg = parse_config(root);
    auto rep = run_sojourn(cfg);
    REQUIRE(rep.records.size() == 1);
    const auto& rec = rep.records[0];
    REQUIRE(rec.samples == 40000);
    REQUIRE_THAT(rec.ref_mean, WithinAbs(1.0, 1e-12));
    // the member's stationary mean sojourn is exactly sqrt(n)/kappa at every n
    REQUIRE_THAT(rec.scaled_mean, WithinAbs(1.0, 5.0 * rec.se + 0.05));

    auto none = parse_config(small_mm1_config({16}, 400, 2));
    REQUIRE(testutil::error_code_of([&] { run_sojourn(none); }) == "config-error");
}

TEST_CASE("infeasible visit vectors are rejected through the pipeline") {
    auto cfg = preset_config("tandem");
    cfg.visit_counts = {0, 1};
    cfg.n_list = {16};
    cfg.sojourn_samples = 50;
    REQUIRE(testutil::error_code_of([&] { run_sojourn(cfg); }) == "infeasible-visits");
}

TEST_CASE("report files are byte-identical across runs") {
    namespace fs = std::filesystem;
    auto cfg = parse_config(small_mm1_config({16, 64}, 400, 2));
    auto sojourn_root = small_mm1_config({16}, 400, 2);
    sojourn_root["experiment"]["sojourn"] =
        json{{"station", 0}, {"visits", {1}}, {"samples", 200}};
    auto sojourn_cfg = parse_config(sojourn_root);

    fs::path base = fs::temp_directory_path() / "qnet-test-out";
    fs::remove_all(base);
    auto run_once = [&](const std::string& sub) {
        auto dir = (base / sub).string();
        write_interchange(run_interchange(cfg), dir);
        write_sojourn(run_sojourn(sojourn_cfg), dir);
        return dir;
    };
    auto d1 = run_once("a");
    auto d2 = run_once("b");

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(d1))
        names.push_back(entry.path().filename().string());
    REQUIRE(names.size() >= 5);  // records, summaries, cdf tables
    for (const auto& name : names) {
        REQUIRE(fs::exists(fs::path(d2) / name));
        REQUIRE(slurp(fs::path(d1) / name) == slurp(fs::path(d2) / name));
    }
    fs::remove_all(base);
}

TEST_CASE("environment variable overrides the configured output directory") {
    auto cfg = preset_config("mm1");
    ::setenv("QNET_OUTPUT_DIR", "/tmp/qnet-env-dir", 1);
    REQUIRE(resolve_output_dir(cfg) == "/tmp/qnet-env-dir");
    ::unsetenv("QNET_OUTPUT_DIR");
    REQUIRE(resolve_output_dir(cfg) == cfg.output_dir);
}

TEST_CASE("oversized budgets are rejected up front") {
    auto cfg = parse_config(small_mm1_config({1000000}, 100000, 2));
    REQUIRE(testutil::error_code_of([&] { run_interchange(cfg); }) == "config-error");
}
