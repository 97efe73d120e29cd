#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "qnet/config.hpp"
#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/rbm.hpp"
#include "qnet/samples.hpp"
#include "qnet/simulation.hpp"
#include "qnet/stats.hpp"

namespace qnet {

// ==== deterministic parallel map ============================================
//
// Work items are dispatched to threads through an atomic counter and written
// into a pre-sized result slot by index, so the merged output is identical
// for any thread count. Every item must draw its randomness from seeds
// derived out of its own key, never from execution order.
template <typename Fn>
void parallel_for(int threads, std::size_t n_tasks, Fn&& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n_tasks <= 1) {
        for (std::size_t i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mx;
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mx);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    int use = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), n_tasks));
    pool.reserve(static_cast<std::size_t>(use));
    for (int t = 0; t < use; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

// ==== exact oracle for the single-station sequence ==========================

// Largest gap between the scaled geometric stationary tail of the n-th
// single-station member and its exponential limit. The prelimit tail at
// scaled level s is rho^(s sqrt n) = exp(-b s) with b = -sqrt(n) log(rho),
// so the gap peaks where the two densities cross.
inline double scaled_geometric_gap(double kappa, long n) {
    double rn = std::sqrt(static_cast<double>(n));
    if (!(kappa > 0.0) || !(kappa < rn))
        throw Error("invalid-argument", "need 0 < kappa < sqrt(n)");
    double b = -rn * std::log1p(-kappa / rn);
    if (b - kappa < 1e-14) return 0.0;
    double sstar = std::log(b / kappa) / (b - kappa);
    return std::exp(-kappa * sstar) - std::exp(-b * sstar);
}

// ==== interchange experiment ================================================

struct InterchangeRecord {
    long n = 0;
    Vec rho;
    long samples = 0;
    int replications = 0;
    std::uint64_t seed = 0;    // substream root for this member
    std::uint64_t digest = 0;  // member network digest
    Vec scaled_mean, scaled_m2;
    Mat scaled_cov;
    Mat quantiles;  // stations x {0.50, 0.90, 0.99}
    std::string reference;  // "product-form" or "rbm-simulation"
    Vec eta;                // product-form rates when applicable
    Vec ks;                 // per-station sup-CDF distance
    double ks_se = 0.0;     // sampling scale of the distances
    double joint_tail_gap = 0.0;
    Vec moment_err_p1, moment_err_p2;
    // raw scaled samples for table output; not part of the serialized record
    Mat scaled;
    Mat ref_draws;  // simulated reference sample when no product form
};

struct InterchangeReport {
    std::string name;
    std::uint64_t master_seed = 0;
    std::vector<InterchangeRecord> records;
    bool distances_decrease = false;
    double slope_margin = 0.0;  // min over stations of decrease / pooled se
};

namespace detail {

inline Vec quantiles_of(std::vector<double> xs, std::initializer_list<double> ps) {
    std::sort(xs.begin(), xs.end());
    Vec out(static_cast<Eigen::Index>(ps.size()));
    Eigen::Index i = 0;
    for (double p : ps) {
        double pos = p * static_cast<double>(xs.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, xs.size() - 1);
        double frac = pos - static_cast<double>(lo);
        out[i++] = (1.0 - frac) * xs[lo] + frac * xs[hi];
    }
    return out;
}

// fraction of rows with every coordinate at or above z
inline double joint_upper_tail(const Mat& rows, const Vec& z) {
    long hit = 0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        bool all = true;
        for (Eigen::Index j = 0; j < rows.cols(); ++j)
            if (rows(i, j) < z[j]) {
                all = false;
                break;
            }
        if (all) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(rows.rows());
}

inline void check_member_budget(const NetworkSpec& member, double horizon_per_rep, int reps,
                                long n) {
    double load = member.alpha.sum() + member.lambda.sum() + member.mu.sum();
    double events = horizon_per_rep * load * static_cast<double>(reps);
    if (events > 2e9)
        throw Error("config-error",
                    "member n=" + std::to_string(n) + " needs about " +
                        std::to_string(static_cast<double>(events)) +
                        " events; shrink samples, spacing, or the n-list");
}

}  // namespace detail

inline InterchangeReport run_interchange(const ExperimentConfig& cfg) {
    auto seq = make_heavy_traffic_sequence(cfg.base, cfg.kappa0);
    auto rbm = rbm_params(seq);
    const int J = cfg.base.dim();
    double kappa_star = seq.kappa.cwiseProduct(cfg.base.mu).minCoeff();

    bool product = rbm.product_form && rbm.stable;
    Vec eta;
    if (product) eta = product_form_rates(rbm);

    InterchangeReport rep;
    rep.name = cfg.name;
    rep.master_seed = cfg.seed;
    rep.records.resize(cfg.n_list.size());

    const long per_rep = cfg.samples_per_n / cfg.replications;
    struct Task {
        std::size_t rec;
        long n;
        int rep;
    };
    std::vector<Task> tasks;
    std::vector<NetworkSpec> members(cfg.n_list.size());
    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
        long n = cfg.n_list[i];
        members[i] = heavy_traffic_member(seq, n);
        double warmup = cfg.warmup_factor * static_cast<double>(n) / (kappa_star * kappa_star);
        double spacing = cfg.spacing_factor * static_cast<double>(n);
        detail::check_member_budget(members[i],
                                    warmup + spacing * static_cast<double>(per_rep),
                                    cfg.replications, n);
        for (int r = 0; r < cfg.replications; ++r)
            tasks.push_back({i, n, r});
    }

    std::vector<Mat> chunks(tasks.size());
    parallel_for(cfg.threads, tasks.size(), [&](std::size_t t) {
        const Task& task = tasks[t];
        const NetworkSpec& member = members[task.rec];
        long n = task.n;
        double warmup = cfg.warmup_factor * static_cast<double>(n) / (kappa_star * kappa_star);
        double spacing = cfg.spacing_factor * static_cast<double>(n);
        std::uint64_t seed = derive_seed(cfg.seed, StreamKind::experiment,
                                         static_cast<std::uint64_t>(n),
                                         static_cast<std::uint64_t>(task.rep));
        auto set = stationary_sample(member, warmup, per_rep, spacing, seed, 1);
        chunks[t] = set.samples / std::sqrt(static_cast<double>(n));
    });

    // reference draws for the no-product-form route, shared across n
    Mat ref_draws;
    if (!product) {
        if (!rbm.stable) throw Error("refuse-unstable", "diffusion limit has no stationary law");
        double step = rbm_default_step(rbm);
        double relax = rbm_relaxation_scale(rbm);
        long ref_n = std::max<long>(cfg.samples_per_n, 4000);
        auto ref = rbm_stationary_sample(rbm, 20.0 * relax, ref_n, 5.0 * relax, step,
                                         derive_seed(cfg.seed, StreamKind::diffusion, 1, 0));
        ref_draws = ref.samples;
    }

    for (std::size_t i = 0; i < cfg.n_list.size(); ++i) {
        InterchangeRecord& rec = rep.records[i];
        long n = cfg.n_list[i];
        rec.n = n;
        rec.rho = members[i].rho;
        rec.samples = per_rep * cfg.replications;
        rec.replications = cfg.replications;
        rec.seed = derive_seed(cfg.seed, StreamKind::experiment, static_cast<std::uint64_t>(n), 0);
        rec.digest = network_digest(members[i]);
        rec.reference = product ? "product-form" : "rbm-simulation";
        if (product) rec.eta = eta;

        rec.scaled.resize(rec.samples, J);
        Eigen::Index row = 0;
        for (std::size_t t = 0; t < tasks.size(); ++t) {
            if (tasks[t].rec != i) continue;
            rec.scaled.middleRows(row, chunks[t].rows()) = chunks[t];
            row += chunks[t].rows();
        }

        rec.scaled_mean = rec.scaled.colwise().mean().transpose();
        rec.scaled_m2 = rec.scaled.array().square().colwise().mean().transpose();
        Mat centered = rec.scaled.rowwise() - rec.scaled_mean.transpose();
        rec.scaled_cov = centered.transpose() * centered /
                         static_cast<double>(rec.samples - 1);

        rec.quantiles.resize(J, 3);
        rec.ks.resize(J);
        rec.moment_err_p1.resize(J);
        rec.moment_err_p2.resize(J);
        Vec ref_mean(J), ref_m2(J);
        for (int j = 0; j < J; ++j) {
            std::vector<double> col(static_cast<std::size_t>(rec.samples));
            for (Eigen::Index r = 0; r < rec.samples; ++r)
                col[static_cast<std::size_t>(r)] = rec.scaled(r, j);
            rec.quantiles.row(j) = detail::quantiles_of(col, {0.5, 0.9, 0.99}).transpose();
            if (product) {
                rec.ks[j] = ks_distance_exponential(col, eta[j]);
                ref_mean[j] = 1.0 / eta[j];
                ref_m2[j] = 2.0 / (eta[j] * eta[j]);
            } else {
                std::vector<double> rcol(static_cast<std::size_t>(ref_draws.rows()));
                for (Eigen::Index r = 0; r < ref_draws.rows(); ++r)
                    rcol[static_cast<std::size_t>(r)] = ref_draws(r, j);
                rec.ks[j] = ks_distance_two_sample(col, rcol);
                ref_mean[j] = ref_draws.col(j).mean();
                ref_m2[j] = ref_draws.col(j).array().square().mean();
            }
            rec.moment_err_p1[j] = std::abs(rec.scaled_mean[j] - ref_mean[j]);
            rec.moment_err_p2[j] = std::abs(rec.scaled_m2[j] - ref_m2[j]);
        }
        // the sup-CDF statistic fluctuates at roughly 0.26 / sqrt(m) under
        // agreement; used as the error-bar scale for the slope verdict
        rec.ks_se = 0.26 / std::sqrt(static_cast<double>(rec.samples));

        double gap = 0.0;
        for (double mult : {0.25, 0.5, 1.0, 2.0}) {
            Vec z = mult * ref_mean;
            double emp = detail::joint_upper_tail(rec.scaled, z);
            double ref;
            if (product)
                ref = std::exp(-(eta.cwiseProduct(z)).sum());
            else
                ref = detail::joint_upper_tail(ref_draws, z);
            gap = std::max(gap, std::abs(emp - ref));
        }
        rec.joint_tail_gap = gap;
        if (!product) rec.ref_draws = ref_draws;
    }

    if (rep.records.size() >= 2) {
        const auto& first = rep.records.front();
        const auto& last = rep.records.back();
        double pooled = std::sqrt(first.ks_se * first.ks_se + last.ks_se * last.ks_se);
        double margin = std::numeric_limits<double>::infinity();
        for (int j = 0; j < J; ++j)
            margin = std::min(margin, (first.ks[j] - last.ks[j]) / pooled);
        rep.slope_margin = margin;
        rep.distances_decrease = margin > 1.0;
    }
    return rep;
}

// Cross-validation of the two reference routes: when the product form holds,
// the closed-form marginal means must agree with a long simulation of the
// diffusion itself. The tolerance is three standard errors plus an allowance
// for the grid under-lift of the multi-station sampler (the scalar sampler is
// transition-exact, so its allowance is zero).
struct ReferenceCrossValidation {
    Vec product_mean, sim_mean, tolerance;
    bool pass = true;
};

inline ReferenceCrossValidation cross_validate_reference(const RbmSpec& spec, long n_samples,
                                                         std::uint64_t seed) {
    Vec eta = product_form_rates(spec);
    double step = rbm_default_step(spec);
    double relax = rbm_relaxation_scale(spec);
    auto set = rbm_stationary_sample(spec, 20.0 * relax, n_samples, 5.0 * relax, step, seed);

    ReferenceCrossValidation cv;
    cv.product_mean = eta.cwiseInverse();
    cv.sim_mean = set.samples.colwise().mean().transpose();
    cv.tolerance = Vec(spec.dim());
    for (int j = 0; j < spec.dim(); ++j) {
        auto col = set.column(j);
        auto ms = mean_se(col);
        double bias = spec.dim() == 1 ? 0.0 : 0.6 * std::sqrt(spec.gamma(j, j) * step);
        cv.tolerance[j] = 3.0 * ms.se + bias;
        cv.pass = cv.pass && std::abs(cv.sim_mean[j] - cv.product_mean[j]) <= cv.tolerance[j];
    }
    return cv;
}

// ==== sojourn experiment ====================================================

struct SojournRecord {
    long n = 0;
    long samples = 0;
    std::uint64_t seed = 0;
    double scaled_mean = 0.0;
    double se = 0.0;  // batch-means standard error of the scaled mean
    double ref_mean = 0.0;  // product-form limit, nan when unavailable
    double err = 0.0;
    std::vector<double> scaled;  // raw scaled sojourns, not serialized
};

struct SojournReport {
    std::string name;
    int station = 0;
    std::vector<long> visits;
    std::uint64_t master_seed = 0;
    std::vector<SojournRecord> records;
};

inline SojournReport run_sojourn(const ExperimentConfig& cfg) {
    if (cfg.sojourn_station < 0 || cfg.sojourn_samples < 10)
        throw Error("config-error", "configuration has no usable sojourn block");
    auto seq = make_heavy_traffic_sequence(cfg.base, cfg.kappa0);
    auto rbm = rbm_params(seq);
    double kappa_star = seq.kappa.cwiseProduct(cfg.base.mu).minCoeff();
    bool product = rbm.product_form && rbm.stable;

    double ref_mean = std::numeric_limits<double>::quiet_NaN();
    if (product) {
        Vec eta = product_form_rates(rbm);
        ref_mean = 0.0;
        for (int j = 0; j < cfg.base.dim(); ++j)
            ref_mean += static_cast<double>(cfg.visit_counts[static_cast<std::size_t>(j)]) /
                        (cfg.base.mu[j] * eta[j]);
    }

    SojournReport rep;
    rep.name = cfg.name;
    rep.station = cfg.sojourn_station;
    rep.visits = cfg.visit_counts;
    rep.master_seed = cfg.seed;
    rep.records.resize(cfg.n_list.size());

    parallel_for(cfg.threads, cfg.n_list.size(), [&](std::size_t i) {
        long n = cfg.n_list[i];
        NetworkSpec member = heavy_traffic_member(seq, n);
        double warmup = cfg.warmup_factor * static_cast<double>(n) / (kappa_star * kappa_star);
        std::uint64_t seed = derive_seed(cfg.seed, StreamKind::experiment,
                                         static_cast<std::uint64_t>(n), 1'000'003);
        auto set = sojourn_times(member, cfg.sojourn_station, cfg.visit_counts, warmup,
                                 cfg.sojourn_samples, seed);
        SojournRecord& rec = rep.records[i];
        rec.n = n;
        rec.samples = set.rows();
        rec.seed = seed;
        double rn = std::sqrt(static_cast<double>(n));
        rec.scaled.resize(static_cast<std::size_t>(set.rows()));
        for (Eigen::Index r = 0; r < set.rows(); ++r)
            rec.scaled[static_cast<std::size_t>(r)] = set.samples(r, 0) / rn;
        auto ms = batch_mean_se(rec.scaled);
        rec.scaled_mean = ms.mean;
        rec.se = ms.se;
        rec.ref_mean = ref_mean;
        rec.err = std::isnan(ref_mean) ? std::numeric_limits<double>::quiet_NaN()
                                       : std::abs(ms.mean - ref_mean);
    });
    return rep;
}

// ==== serialization and output ==============================================

namespace detail {

inline json vec_to_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

inline Vec vec_from_json(const json& a) {
    Vec v(static_cast<Eigen::Index>(a.size()));
    Eigen::Index i = 0;
    for (const auto& x : a) v[i++] = x.get<double>();
    return v;
}

inline json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Mat mat_from_json(const json& rows) {
    const auto r = static_cast<Eigen::Index>(rows.size());
    if (r == 0) return Mat(0, 0);
    const auto c = static_cast<Eigen::Index>(rows[0].size());
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    return m;
}

}  // namespace detail

inline json to_json(const InterchangeRecord& rec) {
    json j;
    j["n"] = rec.n;
    j["rho"] = detail::vec_to_json(rec.rho);
    j["samples"] = rec.samples;
    j["replications"] = rec.replications;
    j["seed"] = rec.seed;
    j["digest"] = rec.digest;
    j["scaled_mean"] = detail::vec_to_json(rec.scaled_mean);
    j["scaled_m2"] = detail::vec_to_json(rec.scaled_m2);
    j["scaled_cov"] = detail::mat_to_json(rec.scaled_cov);
    j["quantiles"] = detail::mat_to_json(rec.quantiles);
    j["reference"] = rec.reference;
    j["eta"] = detail::vec_to_json(rec.eta);
    j["ks"] = detail::vec_to_json(rec.ks);
    j["ks_se"] = rec.ks_se;
    j["joint_tail_gap"] = rec.joint_tail_gap;
    j["moment_err_p1"] = detail::vec_to_json(rec.moment_err_p1);
    j["moment_err_p2"] = detail::vec_to_json(rec.moment_err_p2);
    return j;
}

inline InterchangeRecord interchange_record_from_json(const json& j) {
    InterchangeRecord rec;
    rec.n = j.at("n").get<long>();
    rec.rho = detail::vec_from_json(j.at("rho"));
    rec.samples = j.at("samples").get<long>();
    rec.replications = j.at("replications").get<int>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.digest = j.at("digest").get<std::uint64_t>();
    rec.scaled_mean = detail::vec_from_json(j.at("scaled_mean"));
    rec.scaled_m2 = detail::vec_from_json(j.at("scaled_m2"));
    rec.scaled_cov = detail::mat_from_json(j.at("scaled_cov"));
    rec.quantiles = detail::mat_from_json(j.at("quantiles"));
    rec.reference = j.at("reference").get<std::string>();
    rec.eta = detail::vec_from_json(j.at("eta"));
    rec.ks = detail::vec_from_json(j.at("ks"));
    rec.ks_se = j.at("ks_se").get<double>();
    rec.joint_tail_gap = j.at("joint_tail_gap").get<double>();
    rec.moment_err_p1 = detail::vec_from_json(j.at("moment_err_p1"));
    rec.moment_err_p2 = detail::vec_from_json(j.at("moment_err_p2"));
    return rec;
}

inline json to_json(const SojournRecord& rec) {
    json j;
    j["n"] = rec.n;
    j["samples"] = rec.samples;
    j["seed"] = rec.seed;
    j["scaled_mean"] = rec.scaled_mean;
    j["se"] = rec.se;
    if (std::isnan(rec.ref_mean)) {
        j["ref_mean"] = nullptr;
        j["err"] = nullptr;
    } else {
        j["ref_mean"] = rec.ref_mean;
        j["err"] = rec.err;
    }
    return j;
}

inline SojournRecord sojourn_record_from_json(const json& j) {
    SojournRecord rec;
    rec.n = j.at("n").get<long>();
    rec.samples = j.at("samples").get<long>();
    rec.seed = j.at("seed").get<std::uint64_t>();
    rec.scaled_mean = j.at("scaled_mean").get<double>();
    rec.se = j.at("se").get<double>();
    if (j.at("ref_mean").is_null()) {
        rec.ref_mean = std::numeric_limits<double>::quiet_NaN();
        rec.err = std::numeric_limits<double>::quiet_NaN();
    } else {
        rec.ref_mean = j.at("ref_mean").get<double>();
        rec.err = j.at("err").get<double>();
    }
    return rec;
}

// Writes line-delimited records, per-station CDF comparison tables, and a
// human-readable summary into dir. Everything is formatted through the JSON
// shortest-round-trip printer, so repeated runs produce identical bytes.
inline void write_interchange(const InterchangeReport& rep, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream records(fs::path(dir) / "interchange_records.jsonl", std::ios::binary);
    for (const auto& rec : rep.records) records << to_json(rec).dump() << "\n";

    for (const auto& rec : rep.records) {
        for (Eigen::Index j = 0; j < rec.scaled.cols(); ++j) {
            std::vector<double> col(static_cast<std::size_t>(rec.scaled.rows()));
            for (Eigen::Index r = 0; r < rec.scaled.rows(); ++r)
                col[static_cast<std::size_t>(r)] = rec.scaled(r, j);
            std::sort(col.begin(), col.end());

            std::vector<double> ref;
            if (rec.reference != "product-form" && rec.ref_draws.cols() > j) {
                ref.resize(static_cast<std::size_t>(rec.ref_draws.rows()));
                for (Eigen::Index r = 0; r < rec.ref_draws.rows(); ++r)
                    ref[static_cast<std::size_t>(r)] = rec.ref_draws(r, j);
                std::sort(ref.begin(), ref.end());
            }
            auto ref_cdf = [&](double x) {
                if (rec.reference == "product-form") return 1.0 - std::exp(-rec.eta[j] * x);
                auto it = std::upper_bound(ref.begin(), ref.end(), x);
                return static_cast<double>(it - ref.begin()) / static_cast<double>(ref.size());
            };

            std::ostringstream name;
            name << "cdf_n" << rec.n << "_station" << j << ".tsv";
            std::ofstream tsv(fs::path(dir) / name.str(), std::ios::binary);
            tsv << "value\tempirical\treference\n";
            std::size_t stride = std::max<std::size_t>(1, col.size() / 2000);
            for (std::size_t r = stride - 1; r < col.size(); r += stride)
                tsv << json(col[r]).dump() << "\t"
                    << json(static_cast<double>(r + 1) / static_cast<double>(col.size())).dump()
                    << "\t" << json(ref_cdf(col[r])).dump() << "\n";
        }
    }

    std::ofstream sum(fs::path(dir) / "interchange_summary.txt", std::ios::binary);
    sum << "interchange experiment: " << rep.name << "\n";
    sum << "master seed: " << rep.master_seed << "\n\n";
    for (const auto& rec : rep.records) {
        sum << "n=" << rec.n << "  samples=" << rec.samples << "  reference=" << rec.reference
            << "\n";
        for (Eigen::Index j = 0; j < rec.ks.size(); ++j)
            sum << "  station " << j << ": sup-CDF distance " << json(rec.ks[j]).dump()
                << "  mean " << json(rec.scaled_mean[j]).dump() << "  second moment "
                << json(rec.scaled_m2[j]).dump() << "\n";
        sum << "  joint tail gap " << json(rec.joint_tail_gap).dump() << "\n";
    }
    sum << "\ndistances decrease along the n-list: " << (rep.distances_decrease ? "yes" : "no")
        << " (margin " << json(rep.slope_margin).dump() << " pooled standard errors)\n";
}

inline void write_sojourn(const SojournReport& rep, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    std::ofstream records(fs::path(dir) / "sojourn_records.jsonl", std::ios::binary);
    for (const auto& rec : rep.records) records << to_json(rec).dump() << "\n";

    std::ofstream sum(fs::path(dir) / "sojourn_summary.txt", std::ios::binary);
    sum << "sojourn experiment: " << rep.name << "  station " << rep.station << "  visits [";
    for (std::size_t j = 0; j < rep.visits.size(); ++j)
        sum << (j ? "," : "") << rep.visits[j];
    sum << "]\nmaster seed: " << rep.master_seed << "\n\n";
    for (const auto& rec : rep.records) {
        sum << "n=" << rec.n << "  samples=" << rec.samples << "  scaled mean "
            << json(rec.scaled_mean).dump() << " +- " << json(rec.se).dump();
        if (!std::isnan(rec.ref_mean))
            sum << "  limit " << json(rec.ref_mean).dump() << "  error "
                << json(rec.err).dump();
        sum << "\n";
    }
}

}  // namespace qnet
