#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"
#include "qnet/network.hpp"
#include "qnet/rng.hpp"
#include "qnet/simulation.hpp"
#include "qnet/stats.hpp"

namespace qnet {

// ==== drift certificates for black-box Markov samplers ======================
//
// A transition sampler evolves a state for a given duration under a given
// seed. Drift estimation probes a finite, user-chosen set of states and
// reports confidence-qualified certificates over that set; nothing here is a
// proof about the full state space. All per-sample seeds derive from
// (seed, probe index, sample index), so drift estimates and the exponential
// functionals below can be computed from the same underlying randomness.

using TransitionSampler = std::function<Vec(const Vec&, double, std::uint64_t)>;
using StateFunctional = std::function<double(const Vec&)>;

enum class DriftKind { additive, geometric };

struct ProbeDrift {
    Vec state;
    double phi0 = 0.0;    // value of the functional at the probe
    MeanSe change;        // additive: Phi' - Phi; geometric: Phi' / Phi
    double ucb = 0.0;     // mean + halfwidth at the stated confidence
    bool certified = false;
};

struct DriftCertificate {
    DriftKind kind = DriftKind::additive;
    double t0 = 0.0;
    double gamma = 0.0;   // additive: drift <= -gamma; geometric: ratio <= gamma < 1
    double K = 0.0;       // certificate covers probed states with phi0 > K
    double confidence = 0.95;
    long samples_per_state = 0;
    std::vector<ProbeDrift> probes;
};

// Increments of the functional across one transition, one row per probe
// state. Collected once and reused for every theta considered.
struct IncrementSample {
    std::vector<Vec> states;
    std::vector<double> phi0;
    Mat delta;  // probes x samples
    double t0 = 0.0;
};

struct LFunctionals {
    double theta = 0.0;
    double t0 = 0.0;
    double L1 = 0.0;   // max over probes of mean exp(theta * delta)
    double L2 = 0.0;   // max over probes of mean delta^2 exp(theta * max(delta, 0))
    double phi_t0 = 0.0;  // the geometric-route potential; equals L1 here
};

namespace detail {

inline void check_probe_args(std::size_t n_probes, long samples, double t0) {
    if (n_probes == 0) throw Error("invalid-argument", "need at least one probe state");
    if (samples < 2) throw Error("invalid-argument", "need at least two samples per state");
    if (!(t0 > 0.0)) throw Error("invalid-argument", "drift time must be positive");
}

}  // namespace detail

inline IncrementSample collect_increments(const TransitionSampler& sampler,
                                          const StateFunctional& phi, double t0,
                                          const std::vector<Vec>& probe_states,
                                          long samples_per_state, std::uint64_t seed) {
    detail::check_probe_args(probe_states.size(), samples_per_state, t0);
    IncrementSample inc;
    inc.t0 = t0;
    inc.states = probe_states;
    inc.phi0.resize(probe_states.size());
    inc.delta.resize(static_cast<Eigen::Index>(probe_states.size()), samples_per_state);
    for (std::size_t i = 0; i < probe_states.size(); ++i) {
        double p0 = phi(probe_states[i]);
        if (!(p0 >= 0.0)) throw Error("invalid-argument", "functional must be nonnegative");
        inc.phi0[i] = p0;
        for (long s = 0; s < samples_per_state; ++s) {
            std::uint64_t sub = derive_seed(seed, StreamKind::probe,
                                            static_cast<std::uint64_t>(i),
                                            static_cast<std::uint64_t>(s));
            Vec next = sampler(probe_states[i], t0, sub);
            inc.delta(static_cast<Eigen::Index>(i), s) = phi(next) - p0;
        }
    }
    return inc;
}

// Scans certificate candidates over suffixes of the probes ordered by their
// functional value: excluding the lowest k probes sets the exception level K
// at the highest excluded value (or one unit below the lowest probe when
// nothing is excluded). Among candidates it keeps the strongest drift,
// breaking ties toward the smaller K.
inline DriftCertificate estimate_drift(const TransitionSampler& sampler,
                                       const StateFunctional& phi, double t0,
                                       const std::vector<Vec>& probe_states,
                                       long samples_per_state, std::uint64_t seed,
                                       DriftKind kind = DriftKind::additive,
                                       double confidence = 0.95) {
    IncrementSample inc =
        collect_increments(sampler, phi, t0, probe_states, samples_per_state, seed);
    const auto n = probe_states.size();
    double z = normal_quantile(0.5 + 0.5 * confidence);

    DriftCertificate cert;
    cert.kind = kind;
    cert.t0 = t0;
    cert.confidence = confidence;
    cert.samples_per_state = samples_per_state;
    cert.probes.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ProbeDrift& p = cert.probes[i];
        p.state = inc.states[i];
        p.phi0 = inc.phi0[i];
        std::vector<double> vals(static_cast<std::size_t>(samples_per_state));
        for (long s = 0; s < samples_per_state; ++s) {
            double d = inc.delta(static_cast<Eigen::Index>(i), s);
            if (kind == DriftKind::additive) {
                vals[static_cast<std::size_t>(s)] = d;
            } else {
                if (!(p.phi0 > 0.0))
                    throw Error("invalid-argument",
                                "geometric drift needs positive functional values at probes");
                vals[static_cast<std::size_t>(s)] = (p.phi0 + d) / p.phi0;
            }
        }
        p.change = mean_se(vals);
        p.ucb = p.change.mean + z * p.change.se;
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return cert.probes[a].phi0 < cert.probes[b].phi0;
    });

    bool found = false;
    double best_gamma = 0.0, best_K = 0.0;
    std::size_t best_from = n;
    double worst = -std::numeric_limits<double>::infinity();
    // walk suffixes from the largest probe downward so `worst` accumulates
    for (std::size_t k = n; k-- > 0;) {
        worst = std::max(worst, cert.probes[order[k]].ucb);
        double gamma_k, K_k = k == 0 ? cert.probes[order[0]].phi0 - 1.0
                                     : cert.probes[order[k - 1]].phi0;
        bool ok;
        if (kind == DriftKind::additive) {
            gamma_k = -worst;
            ok = gamma_k > 0.0;
        } else {
            gamma_k = worst;
            ok = gamma_k < 1.0 && gamma_k > 0.0;
        }
        if (!ok) continue;
        bool better = !found ||
                      (kind == DriftKind::additive ? gamma_k >= best_gamma - 1e-15
                                                   : gamma_k <= best_gamma + 1e-15);
        if (better) {
            found = true;
            best_gamma = gamma_k;
            best_K = K_k;
            best_from = k;
        }
    }
    if (!found)
        throw Error("no-certificate",
                    "no probed level exhibits the required drift at this confidence");

    cert.gamma = best_gamma;
    cert.K = best_K;
    for (std::size_t k = best_from; k < n; ++k) cert.probes[order[k]].certified = true;
    return cert;
}

// Exponential moment functionals of the collected increments. Estimates are
// maxima over the probed states, hence lower bounds for the true suprema.
inline LFunctionals l_functionals(const IncrementSample& inc, double theta) {
    if (!(theta > 0.0)) throw Error("invalid-argument", "theta must be positive");
    const auto rows = inc.delta.rows();
    const auto cols = inc.delta.cols();
    long overflow = 0;
    double l1 = 0.0, l2 = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
        double acc1 = 0.0, acc2 = 0.0;
        for (Eigen::Index s = 0; s < cols; ++s) {
            double d = inc.delta(i, s);
            if (theta * d > 700.0) {
                ++overflow;
                continue;
            }
            acc1 += std::exp(theta * d);
            acc2 += d * d * std::exp(theta * std::max(d, 0.0));
        }
        l1 = std::max(l1, acc1 / static_cast<double>(cols));
        l2 = std::max(l2, acc2 / static_cast<double>(cols));
    }
    if (static_cast<double>(overflow) > 0.001 * static_cast<double>(rows * cols))
        throw Error("theta-too-large", "exponential moments overflow at this theta");
    LFunctionals out;
    out.theta = theta;
    out.t0 = inc.t0;
    out.L1 = l1;
    out.L2 = l2;
    out.phi_t0 = l1;
    return out;
}

inline LFunctionals estimate_L_functionals(const TransitionSampler& sampler,
                                           const StateFunctional& phi, double theta,
                                           double t0, const std::vector<Vec>& probe_states,
                                           long samples_per_state, std::uint64_t seed) {
    return l_functionals(
        collect_increments(sampler, phi, t0, probe_states, samples_per_state, seed), theta);
}

// Largest theta whose second functional satisfies theta * L2(theta) <= gamma,
// found by doubling then bisection on the fixed increment sample. Small theta
// always works because L2 tends to the plain second moment.
inline LFunctionals select_theta(const IncrementSample& inc, double gamma) {
    if (!(gamma > 0.0)) throw Error("invalid-argument", "gamma must be positive");
    auto feasible = [&](double th, LFunctionals* out) {
        try {
            LFunctionals l = l_functionals(inc, th);
            if (out) *out = l;
            return th * l.L2 <= gamma;
        } catch (const Error& e) {
            if (e.code() == "theta-too-large") return false;
            throw;
        }
    };
    double lo = 0.0;
    double hi = 1e-6;
    LFunctionals at_lo;
    if (!feasible(hi, &at_lo))
        throw Error("no-certificate", "condition fails even at vanishing theta");
    while (feasible(2.0 * hi, nullptr)) {
        hi *= 2.0;
        if (hi > 1e12) break;
    }
    lo = hi;
    hi *= 2.0;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (lo + hi);
        if (feasible(mid, nullptr))
            lo = mid;
        else
            hi = mid;
    }
    LFunctionals out;
    feasible(lo, &out);
    return out;
}

// Stationary moment bound from a geometric certificate: phi_t0 * K / (1 - gamma).
inline double moment_bound(const DriftCertificate& cert, double phi_t0) {
    if (cert.kind != DriftKind::geometric)
        throw Error("invalid-certificate", "moment bound needs a geometric certificate");
    if (!(cert.gamma > 0.0 && cert.gamma < 1.0))
        throw Error("invalid-certificate", "geometric rate must lie in (0,1)");
    if (!std::isfinite(phi_t0) || phi_t0 < 0.0)
        throw Error("invalid-argument", "potential value must be finite and nonnegative");
    return phi_t0 * cert.K / (1.0 - cert.gamma);
}

// Stationary tail bound from an additive certificate and compatible
// exponential functionals: (1 - gamma theta / 2)^{-1} L1 exp(-theta (s - K)),
// valid once theta L2 <= gamma holds. The consistency consequence
// gamma theta <= 1 is checked as well even though the first condition
// implies it for functionals measured on the certified states.
inline double tail_bound(const DriftCertificate& cert, const LFunctionals& L, double s) {
    if (cert.kind != DriftKind::additive)
        throw Error("invalid-certificate", "tail bound needs an additive certificate");
    if (std::abs(L.t0 - cert.t0) > 1e-12 * (1.0 + std::abs(cert.t0)))
        throw Error("invalid-argument", "functionals were estimated at a different drift time");
    if (!(s > cert.K)) throw Error("threshold-below-K", "threshold must exceed the exception level");
    if (!(L.theta * L.L2 <= cert.gamma))
        throw Error("condition-28-failed", "theta * L2 exceeds the certified drift");
    if (!(cert.gamma * L.theta <= 1.0))
        throw Error("condition-28-failed", "gamma * theta exceeds one");
    double val = L.L1 * std::exp(-L.theta * (s - cert.K)) / (1.0 - 0.5 * cert.gamma * L.theta);
    return std::min(1.0, std::max(0.0, val));
}

// ==== adapters and the workload drift check =================================

// Queue-length transition sampler for an open network: evolve the station
// counts for duration t0. States are rounded to integer counts.
inline TransitionSampler gjn_transition_sampler(const NetworkSpec& net,
                                                std::uint64_t max_events = 100'000'000) {
    if (!net.derived) throw Error("invalid-argument", "network must be validated first");
    return [net, max_events](const Vec& state, double t0, std::uint64_t seed) {
        SimOptions opt;
        opt.horizon = t0;
        opt.seed = seed;
        opt.max_events = max_events;
        opt.initial_q.resize(static_cast<std::size_t>(state.size()));
        for (Eigen::Index j = 0; j < state.size(); ++j) {
            double v = std::round(state[j]);
            if (v < 0.0) throw Error("invalid-argument", "queue states must be nonnegative");
            opt.initial_q[static_cast<std::size_t>(j)] = static_cast<long>(v);
        }
        auto tr = simulate(net, opt);
        Vec out(state.size());
        for (Eigen::Index j = 0; j < state.size(); ++j)
            out[j] = static_cast<double>(tr.final_q[static_cast<std::size_t>(j)]);
        return out;
    };
}

// The proof recipe behind the workload drift check needs a constant bounding
// the mean free-process deviation by C2 sqrt(t). The constant is estimated
// here from simulated deviations of the critical base network: the centered
// free process has zero drift, so the observed sup of |w'X(t) - w'X(0)| /
// sqrt(t) over a unit grid, averaged over replications and padded by two
// standard errors, stands in for the constant the theory leaves implicit.
struct WorkloadDriftRecipe {
    double c2_hat = 0.0;   // empirical deviation constant
    double rate = 0.0;     // min_j mu_j kappa_j, the workload drain rate scale
    double t0 = 0.0;       // drift time making C2 sqrt(t) - rate * t <= -1
    double c0 = 0.0;       // region constant: probes need w'z > c0 sqrt(n)
};

inline WorkloadDriftRecipe workload_drift_recipe(const HeavyTrafficSequence& seq,
                                                 double horizon = 400.0, int replications = 48,
                                                 std::uint64_t seed = 2026) {
    if (!(horizon >= 16.0)) throw Error("invalid-argument", "deviation horizon too short");
    if (replications < 8) throw Error("invalid-argument", "need at least eight replications");
    const NetworkSpec& net = seq.base;
    const int J = net.dim();
    Vec w = net.weights;
    Mat ipt = Mat::Identity(J, J) - net.routing.transpose();

    std::vector<double> devs;
    devs.reserve(static_cast<std::size_t>(replications));
    for (int r = 0; r < replications; ++r) {
        SimOptions opt;
        opt.horizon = horizon;
        opt.seed = derive_seed(seed, StreamKind::pilot, static_cast<std::uint64_t>(r));
        opt.log_busy_grid = true;
        for (double g = 1.0; g <= horizon + 1e-9; g += 1.0) opt.output_grid.push_back(g);
        auto tr = simulate(net, opt);
        double worst = 0.0;
        for (std::size_t i = 0; i < tr.sampled.t.size(); ++i) {
            double t = tr.sampled.t[i];
            Vec y(J);
            for (int j = 0; j < J; ++j)
                y[j] = net.mu[j] * (t - tr.sampled_busy(static_cast<Eigen::Index>(i), j));
            Vec x = tr.sampled.values.row(static_cast<Eigen::Index>(i)).transpose() - ipt * y;
            worst = std::max(worst, std::abs(w.dot(x)) / std::sqrt(t));
        }
        devs.push_back(worst);
    }
    auto ms = mean_se(devs);

    WorkloadDriftRecipe rec;
    rec.c2_hat = ms.mean + 2.0 * ms.se;
    rec.rate = seq.kappa.cwiseProduct(net.mu).minCoeff();
    double root = (rec.c2_hat + std::sqrt(rec.c2_hat * rec.c2_hat + 4.0 * rec.rate)) /
                  (2.0 * rec.rate);
    rec.t0 = root * root;
    rec.c0 = rec.c2_hat * std::sqrt(rec.t0) + 1.0;
    return rec;
}

struct WorkloadProbeResult {
    Vec state;
    double workload = 0.0;  // w'z at the probe
    MeanSe change;          // w'Q(n t0) - w'z across replications
    double ucb = 0.0;
    bool pass = false;
};

struct WorkloadDriftReport {
    long n = 0;
    double t0 = 0.0, c0 = 0.0;
    double required = 0.0;  // drift must be <= -sqrt(n)
    double confidence = 0.95;
    std::vector<WorkloadProbeResult> probes;
    bool pass = false;
};

// Empirical check that scaled workload drifts down at rate sqrt(n) from
// every probe outside the c0 sqrt(n) region, for one sequence member.
inline WorkloadDriftReport workload_drift_check(const HeavyTrafficSequence& seq, long n,
                                                double t0, double c0,
                                                const std::vector<Vec>& probe_states,
                                                long samples, std::uint64_t seed,
                                                double confidence = 0.95,
                                                std::uint64_t max_events = 400'000'000) {
    if (probe_states.empty()) throw Error("invalid-argument", "need at least one probe state");
    if (samples < 2) throw Error("invalid-argument", "need at least two samples per probe");
    if (!(t0 > 0.0) || n < 1) throw Error("invalid-argument", "need t0 > 0 and n >= 1");

    NetworkSpec member = heavy_traffic_member(seq, n);
    Vec w = member.weights;
    double rn = std::sqrt(static_cast<double>(n));
    double z = normal_quantile(0.5 + 0.5 * confidence);

    WorkloadDriftReport rep;
    rep.n = n;
    rep.t0 = t0;
    rep.c0 = c0;
    rep.required = -rn;
    rep.confidence = confidence;
    rep.pass = true;

    for (std::size_t i = 0; i < probe_states.size(); ++i) {
        const Vec& state = probe_states[i];
        if (state.size() != w.size())
            throw Error("dimension-mismatch", "probe state has wrong length");
        double wz = w.dot(state);
        if (!(wz > c0 * rn))
            throw Error("invalid-argument",
                        "probe lies inside the c0 sqrt(n) region; drift is only claimed outside");

        WorkloadProbeResult res;
        res.state = state;
        res.workload = wz;
        std::vector<double> changes(static_cast<std::size_t>(samples));
        for (long s = 0; s < samples; ++s) {
            SimOptions opt;
            opt.horizon = static_cast<double>(n) * t0;
            opt.seed = derive_seed(seed, StreamKind::probe, static_cast<std::uint64_t>(i),
                                   static_cast<std::uint64_t>(s));
            opt.max_events = max_events;
            opt.initial_q.resize(static_cast<std::size_t>(state.size()));
            for (Eigen::Index j = 0; j < state.size(); ++j)
                opt.initial_q[static_cast<std::size_t>(j)] =
                    static_cast<long>(std::round(state[j]));
            auto tr = simulate(member, opt);
            double wq = 0.0;
            for (Eigen::Index j = 0; j < w.size(); ++j)
                wq += w[j] * static_cast<double>(tr.final_q[static_cast<std::size_t>(j)]);
            changes[static_cast<std::size_t>(s)] = wq - wz;
        }
        res.change = mean_se(changes);
        res.ucb = res.change.mean + z * res.change.se;
        res.pass = res.ucb <= -rn;
        rep.pass = rep.pass && res.pass;
        rep.probes.push_back(std::move(res));
    }
    return rep;
}

}  // namespace qnet
