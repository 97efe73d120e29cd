#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qnet/config.hpp"
#include "qnet/experiments.hpp"
#include "qnet/fluid.hpp"
#include "qnet/lyapunov.hpp"
#include "qnet/network.hpp"
#include "qnet/rbm.hpp"

namespace {

namespace fs = std::filesystem;
using qnet::ExperimentConfig;
using qnet::Mat;
using qnet::Vec;

// Shortest-round-trip formatting, same as the report writers, so rerunning a
// command reproduces every output byte.
std::string fmt(double x) { return qnet::json(x).dump(); }

std::string fmt_vec(const Vec& v) {
    std::string out = "[";
    for (int j = 0; j < v.size(); ++j) {
        if (j) out += ", ";
        out += fmt(v[j]);
    }
    return out + "]";
}

std::string fmt_mat(const Mat& m) {
    std::string out = "[";
    for (int i = 0; i < m.rows(); ++i) {
        if (i) out += ",\n ";
        out += fmt_vec(m.row(i).transpose());
    }
    return out + "]";
}

struct CommonArgs {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string output_dir;
    int replications = 0;
    int threads = 0;
    bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs& a, bool with_parallel) {
    sub->add_option("-c,--config", a.config, "configuration file path, or a preset name (mm1, tandem)")
        ->required();
    sub->add_option("-s,--seed", a.seed, "master seed override")->each([&a](const std::string&) {
        a.seed_set = true;
    });
    sub->add_option("-o,--output-dir", a.output_dir,
                    "output directory override (QNET_OUTPUT_DIR beats both this and the config)");
    if (with_parallel) {
        sub->add_option("-r,--replications", a.replications, "replication count override");
        sub->add_option("-t,--threads", a.threads, "worker threads (results do not depend on this)");
    }
    sub->add_flag("-q,--quiet", a.quiet, "suppress progress output");
}

ExperimentConfig load_with_overrides(const CommonArgs& a) {
    ExperimentConfig cfg = qnet::load_config(a.config);
    if (a.seed_set) cfg.seed = a.seed;
    if (!a.output_dir.empty()) cfg.output_dir = a.output_dir;
    if (a.replications > 0) {
        cfg.replications = a.replications;
        if (cfg.samples_per_n % cfg.replications != 0)
            throw qnet::Error("config-error",
                              "experiment.samples must divide evenly into replications");
    }
    if (a.threads > 0) cfg.threads = a.threads;
    cfg.quiet = a.quiet;
    return cfg;
}

int cmd_interchange(const ExperimentConfig& cfg) {
    auto rep = qnet::run_interchange(cfg);
    std::string dir = qnet::resolve_output_dir(cfg);
    qnet::write_interchange(rep, dir);
    if (!cfg.quiet) {
        std::cout << "interchange '" << rep.name << "' (seed " << rep.master_seed << ")\n";
        for (const auto& r : rep.records) {
            std::cout << "  n=" << r.n << "  rho=" << fmt_vec(r.rho) << "  reference=" << r.reference
                      << "\n    sup-CDF distance " << fmt_vec(r.ks) << "  joint tail gap "
                      << fmt(r.joint_tail_gap) << "\n    scaled means " << fmt_vec(r.scaled_mean)
                      << "\n";
        }
        std::cout << "  distances decrease along n: " << (rep.distances_decrease ? "yes" : "no")
                  << " (slope margin " << fmt(rep.slope_margin) << ")\n"
                  << "  reports written to " << dir << "\n";
    }
    return 0;
}

int cmd_sojourn(const ExperimentConfig& cfg) {
    auto rep = qnet::run_sojourn(cfg);
    std::string dir = qnet::resolve_output_dir(cfg);
    qnet::write_sojourn(rep, dir);
    if (!cfg.quiet) {
        std::cout << "sojourn '" << rep.name << "' (seed " << rep.master_seed << ")\n";
        for (const auto& r : rep.records) {
            std::cout << "  n=" << r.n << "  scaled mean " << fmt(r.scaled_mean) << " (se "
                      << fmt(r.se) << ")";
            if (std::isfinite(r.ref_mean))
                std::cout << "  limit " << fmt(r.ref_mean) << "  err " << fmt(r.err);
            std::cout << "\n";
        }
        std::cout << "  reports written to " << dir << "\n";
    }
    return 0;
}

int cmd_fluid(const ExperimentConfig& cfg, std::vector<double> initial, bool use_base, long member,
              double horizon, double step) {
    qnet::NetworkSpec net = cfg.base;
    if (!use_base) {
        auto seq = qnet::make_heavy_traffic_sequence(cfg.base, cfg.kappa0);
        if (member < 1) member = cfg.n_list.front();
        net = qnet::heavy_traffic_member(seq, member);
    }
    const int J = net.dim();
    Vec z = Vec::Ones(J);
    if (!initial.empty()) {
        if (static_cast<int>(initial.size()) != J)
            throw qnet::Error("config-error", "--initial needs one value per station");
        for (int j = 0; j < J; ++j) z[j] = initial[static_cast<std::size_t>(j)];
    }

    double bound = -1.0;
    if (net.rho.maxCoeff() < 1.0) bound = qnet::drain_time_bound(net, z);
    auto sol = qnet::fluid_solve(net, z, horizon, step);

    std::string dir = qnet::resolve_output_dir(cfg);
    fs::create_directories(dir);
    {
        std::ofstream out(fs::path(dir) / "fluid_path.tsv", std::ios::binary);
        out << "t";
        for (int j = 0; j < J; ++j) out << "\tq" << j;
        for (int j = 0; j < J; ++j) out << "\ty" << j;
        out << "\n";
        int stride = std::max(1, sol.q.size() / 2000);
        for (int i = 0; i < sol.q.size(); i += stride) {
            out << fmt(sol.q.t[i]);
            for (int j = 0; j < J; ++j) out << "\t" << fmt(sol.q.values(i, j));
            for (int j = 0; j < J; ++j) out << "\t" << fmt(sol.y.values(i, j));
            out << "\n";
        }
    }
    std::ofstream sum(fs::path(dir) / "fluid_summary.txt", std::ios::binary);
    auto line = [&](const std::string& s) {
        sum << s << "\n";
        if (!cfg.quiet) std::cout << s << "\n";
    };
    line("fluid model, " + std::to_string(J) + " stations" +
         (use_base ? std::string(" (critical base)") : " (member n=" + std::to_string(member) + ")"));
    line("initial content: " + fmt_vec(z));
    line("free drift:      " + fmt_vec(sol.drift));
    if (sol.drain_time)
        line("drained by t = " + fmt(*sol.drain_time) + " (grid step " + fmt(sol.step) + ")");
    else
        line("not drained within horizon " + fmt(sol.q.t.back()));
    if (bound >= 0.0) line("worst-case drain bound: " + fmt(bound));
    if (!cfg.quiet) std::cout << "path written to " << dir << "/fluid_path.tsv\n";
    return 0;
}

int cmd_rbm_check(const ExperimentConfig& cfg, bool cross_validate, long cv_samples) {
    auto seq = qnet::make_heavy_traffic_sequence(cfg.base, cfg.kappa0);
    auto spec = qnet::rbm_params(seq);

    std::string dir = qnet::resolve_output_dir(cfg);
    fs::create_directories(dir);
    std::ofstream sum(fs::path(dir) / "rbm_check.txt", std::ios::binary);
    auto line = [&](const std::string& s) {
        sum << s << "\n";
        if (!cfg.quiet) std::cout << s << "\n";
    };

    line("diffusion limit of '" + cfg.name + "' (" + std::to_string(spec.dim()) + " stations)");
    line("kappa: " + fmt_vec(spec.kappa));
    line("beta:  " + fmt_vec(spec.beta));
    line("Gamma:\n" + fmt_mat(spec.gamma));
    line(spec.stable ? "stable: yes" : "stable: no (reflected drift is not inward)");
    if (spec.product_form) {
        line("product form: yes");
        line("eta: " + fmt_vec(spec.eta));
    } else {
        line("product form: no-product-form (skew symmetry fails)");
        line("skew residual:\n" + fmt_mat(spec.skew_residual));
    }

    if (cross_validate) {
        if (!spec.product_form || !spec.stable)
            throw qnet::Error("no-product-form",
                              "cross-validation needs a stable product-form limit");
        auto cv = qnet::cross_validate_reference(spec, cv_samples,
                                                 qnet::derive_seed(cfg.seed, qnet::StreamKind::pilot,
                                                                   0, 0));
        line("cross-validation (" + std::to_string(cv_samples) + " simulated samples):");
        line("  product-form means: " + fmt_vec(cv.product_mean));
        line("  simulated means:    " + fmt_vec(cv.sim_mean));
        line(cv.pass ? "  agreement: pass" : "  agreement: FAIL");
        if (!cv.pass)
            throw qnet::Error("cross-validation-failed",
                              "simulated stationary means disagree with the product form");
    }
    return 0;
}

int cmd_tail_bound(const ExperimentConfig& cfg, long member, double t0,
                   std::vector<double> levels, long samples, double span) {
    auto seq = qnet::make_heavy_traffic_sequence(cfg.base, cfg.kappa0);
    if (member < 1) member = cfg.n_list.front();
    qnet::NetworkSpec net = qnet::heavy_traffic_member(seq, member);
    const int J = net.dim();

    // probe states spread each target level across stations in proportion to
    // their traffic intensities, so the ladder climbs the congested direction
    if (levels.empty()) levels = {30.0, 60.0, 100.0};
    Vec weights = net.rho / net.rho.sum();
    std::vector<Vec> probes;
    for (double lvl : levels) {
        Vec q(J);
        for (int j = 0; j < J; ++j) q[j] = std::round(lvl * weights[j]);
        probes.push_back(q);
    }
    qnet::StateFunctional phi = [](const Vec& x) { return x.sum(); };
    auto sampler = qnet::gjn_transition_sampler(net);
    std::uint64_t seed =
        qnet::derive_seed(cfg.seed, qnet::StreamKind::pilot, static_cast<std::uint64_t>(member), 0);

    auto inc = qnet::collect_increments(sampler, phi, t0, probes, samples, seed);
    auto cert = qnet::estimate_drift(sampler, phi, t0, probes, samples, seed,
                                     qnet::DriftKind::additive);
    auto lf = qnet::select_theta(inc, cert.gamma);

    std::string dir = qnet::resolve_output_dir(cfg);
    fs::create_directories(dir);
    std::ofstream sum(fs::path(dir) / "tail_bound_summary.txt", std::ios::binary);
    auto line = [&](const std::string& s) {
        sum << s << "\n";
        if (!cfg.quiet) std::cout << s << "\n";
    };
    line("stationary tail bound for member n=" + std::to_string(member) + " of '" + cfg.name +
         "' (total jobs in system)");
    line("probe levels: " + fmt_vec(Eigen::Map<const Vec>(levels.data(),
                                                          static_cast<Eigen::Index>(levels.size()))));
    line("certificate: drift <= -" + fmt(cert.gamma) + " over t0=" + fmt(t0) + " above K=" +
         fmt(cert.K) + " (" + std::to_string(samples) + " samples per state, " +
         fmt(cert.confidence) + " confidence)");
    line("theta=" + fmt(lf.theta) + "  L1=" + fmt(lf.L1) + "  L2=" + fmt(lf.L2));

    std::ofstream tsv(fs::path(dir) / "tail_bound.tsv", std::ios::binary);
    tsv << "threshold\tbound\n";
    const int points = 26;
    for (int i = 1; i <= points; ++i) {
        double s = cert.K + span * i / points;
        double b = qnet::tail_bound(cert, lf, s);
        tsv << fmt(s) << "\t" << fmt(b) << "\n";
        if (!cfg.quiet && (i == 1 || i == points / 2 || i == points))
            std::cout << "  P(total jobs >= " << fmt(s) << ") <= " << fmt(b) << "\n";
    }
    if (!cfg.quiet) std::cout << "table written to " << dir << "/tail_bound.tsv\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"steady-state experiments for open queueing networks and their diffusion limits"};
    app.require_subcommand(1);

    CommonArgs args;
    auto* interchange = app.add_subcommand(
        "interchange", "compare scaled stationary queue lengths against the diffusion limit");
    add_common(interchange, args, true);
    auto* sojourn =
        app.add_subcommand("sojourn", "compare scaled stationary sojourn times against the limit");
    add_common(sojourn, args, true);

    auto* fluid = app.add_subcommand("fluid", "deterministic fluid drain from an initial state");
    add_common(fluid, args, false);
    std::vector<double> initial;
    bool use_base = false;
    long member = 0;
    double horizon = -1.0, step = -1.0;
    fluid->add_option("--initial", initial, "initial fluid content per station (default: all ones)");
    fluid->add_flag("--base", use_base, "use the critical base network instead of a member");
    fluid->add_option("--member", member, "sequence index n (default: first of the n-list)");
    fluid->add_option("--horizon", horizon, "time horizon (default: 1.25x the drain bound)");
    fluid->add_option("--step", step, "grid step");

    auto* rbm_check = app.add_subcommand(
        "rbm-check", "report the diffusion parameters and diagnose the product form");
    add_common(rbm_check, args, false);
    bool cross_validate = false;
    long cv_samples = 6000;
    rbm_check->add_flag("--cross-validate", cross_validate,
                        "check product-form means against a long RBM simulation");
    rbm_check->add_option("--cv-samples", cv_samples, "samples for --cross-validate");

    auto* tail = app.add_subcommand(
        "tail-bound", "certify a stationary tail bound for one member via drift estimation");
    add_common(tail, args, false);
    long tb_member = 0;
    double t0 = 25.0, span = 50.0;
    std::vector<double> levels;
    long tb_samples = 400;
    tail->add_option("--member", tb_member, "sequence index n (default: first of the n-list)");
    tail->add_option("--t0", t0, "drift horizon");
    tail->add_option("--levels", levels, "probe levels for total jobs (default: 30 60 100)");
    tail->add_option("--samples", tb_samples, "transition samples per probe state");
    tail->add_option("--span", span, "report thresholds up to K + span");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help exits clean; usage problems mean no runnable config
    }

    ExperimentConfig cfg;
    try {
        cfg = load_with_overrides(args);
    } catch (const std::exception& e) {
        std::cerr << "qnet: " << e.what() << "\n";
        return 2;
    }

    try {
        if (app.got_subcommand(interchange)) return cmd_interchange(cfg);
        if (app.got_subcommand(sojourn)) return cmd_sojourn(cfg);
        if (app.got_subcommand(fluid)) return cmd_fluid(cfg, initial, use_base, member, horizon, step);
        if (app.got_subcommand(rbm_check)) return cmd_rbm_check(cfg, cross_validate, cv_samples);
        if (app.got_subcommand(tail)) return cmd_tail_bound(cfg, tb_member, t0, levels, tb_samples, span);
    } catch (const qnet::Error& e) {
        std::cerr << "qnet: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "qnet: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
