#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/path.hpp"
#include "qnet/rng.hpp"
#include "qnet/samples.hpp"

namespace qnet {

enum class EventKind { arrival = 0, completion = 1 };

// ==== event engine ==========================================================
//
// FIFO single-server stations, renewal external arrivals, service drawn when
// a job reaches the server, independent routing draw per completed service.
// Simultaneous events fire in a fixed order: earlier time first, completions
// before arrivals at equal times, lower station index first within a kind.
// Every stochastic primitive owns a derived substream, so a run is a pure
// function of (model, initial state, seed) regardless of host or threading.
//
// Busy time is accrued per busy period (closed periods plus an open stub), so
// between consecutive events the increment of busy_time_at() is either
// exactly zero (idle) or the inter-event gap up to one rounding unit of the
// period length (busy). Queue-length and counter bookkeeping is integral and
// therefore exact.

class GjnEngine {
public:
    static constexpr double inf = std::numeric_limits<double>::infinity();

    GjnEngine(const NetworkSpec& net, std::uint64_t seed, std::vector<long> q0 = {})
        : net_(&net), J_(net.dim()) {
        if (!net.derived) throw Error("invalid-argument", "network must be validated first");
        if (q0.empty()) q0.assign(static_cast<std::size_t>(J_), 0);
        if (static_cast<int>(q0.size()) != J_)
            throw Error("dimension-mismatch", "initial state has wrong length");

        cum_route_.resize(static_cast<std::size_t>(J_ * J_));
        for (int i = 0; i < J_; ++i) {
            double c = 0.0;
            for (int j = 0; j < J_; ++j) {
                c += net.routing(i, j);
                cum_route_[static_cast<std::size_t>(i * J_ + j)] = c;
            }
        }

        arr_s_.reserve(J_);
        svc_s_.reserve(J_);
        rte_s_.reserve(J_);
        for (int j = 0; j < J_; ++j) {
            auto u = static_cast<std::uint64_t>(j);
            arr_s_.emplace_back(derive_seed(seed, StreamKind::arrival, u));
            svc_s_.emplace_back(derive_seed(seed, StreamKind::service, u));
            rte_s_.emplace_back(derive_seed(seed, StreamKind::routing, u));
        }

        q_ = std::move(q0);
        ext_.assign(q_.size(), 0);
        done_.assign(q_.size(), 0);
        exits_.assign(q_.size(), 0);
        routed_.assign(static_cast<std::size_t>(J_ * J_), 0);
        accrued_ = Vec::Zero(J_);
        period_start_.assign(q_.size(), 0.0);
        next_arrival_.assign(q_.size(), inf);
        next_completion_.assign(q_.size(), inf);
        for (int j = 0; j < J_; ++j) {
            if (q_[static_cast<std::size_t>(j)] > 0) start_service(j);
            if (net.stations[j].arrival)
                next_arrival_[static_cast<std::size_t>(j)] =
                    net.stations[j].arrival->sample(arr_s_[static_cast<std::size_t>(j)]);
        }
    }

    // Track jobs so that external arrivals at one station can be matched
    // against a per-station visit-count pattern on exit. Call before stepping.
    void enable_tagging(int station, std::vector<long> visit_pattern) {
        tagging_ = true;
        tag_station_ = station;
        tag_h_ = std::move(visit_pattern);
        fifo_.assign(static_cast<std::size_t>(J_), {});
        for (int j = 0; j < J_; ++j)
            fifo_[static_cast<std::size_t>(j)].assign(q_[static_cast<std::size_t>(j)], -1);
    }

    double peek_next_time() const {
        double t = inf;
        for (double v : next_completion_) t = std::min(t, v);
        for (double v : next_arrival_) t = std::min(t, v);
        return t;
    }

    // Fire the next event if it happens at or before t_limit.
    bool step(double t_limit) {
        double tc = inf, ta = inf;
        int jc = -1, ja = -1;
        for (int j = 0; j < J_; ++j) {
            if (next_completion_[static_cast<std::size_t>(j)] < tc) {
                tc = next_completion_[static_cast<std::size_t>(j)];
                jc = j;
            }
            if (next_arrival_[static_cast<std::size_t>(j)] < ta) {
                ta = next_arrival_[static_cast<std::size_t>(j)];
                ja = j;
            }
        }
        bool completion = tc <= ta;
        double te = completion ? tc : ta;
        if (!(te <= t_limit)) return false;

        t_ = te;
        ++events_;
        if (completion)
            fire_completion(jc);
        else
            fire_arrival(ja);
        return true;
    }

    // state and counters
    double now() const { return t_; }
    std::uint64_t events() const { return events_; }
    const std::vector<long>& queue() const { return q_; }
    const std::vector<long>& external_counts() const { return ext_; }
    const std::vector<long>& completion_counts() const { return done_; }
    const std::vector<long>& exit_counts() const { return exits_; }
    const std::vector<long>& routed_counts() const { return routed_; }  // row-major J x J

    // cumulative busy time of station j at a time in [now, next event)
    double busy_time_at(int j, double when) const {
        auto u = static_cast<std::size_t>(j);
        return accrued_[j] + (q_[u] > 0 ? when - period_start_[u] : 0.0);
    }

    int last_station() const { return last_station_; }
    EventKind last_kind() const { return last_kind_; }

    // matched tagged jobs: (external arrival time, sojourn duration)
    const std::vector<std::pair<double, double>>& matches() const { return matches_; }

private:
    void start_service(int j) {
        auto u = static_cast<std::size_t>(j);
        next_completion_[u] = t_ + net_->stations[j].service.sample(svc_s_[u]);
    }

    void enter(int j, int tag) {
        auto u = static_cast<std::size_t>(j);
        if (q_[u] == 0) {
            period_start_[u] = t_;
            start_service(j);
        }
        ++q_[u];
        if (tagging_) {
            fifo_[u].push_back(tag);
            if (tag >= 0) ++tags_[static_cast<std::size_t>(tag)].visits[u];
        }
    }

    void leave(int j) {
        auto u = static_cast<std::size_t>(j);
        --q_[u];
        if (q_[u] > 0)
            start_service(j);
        else {
            next_completion_[u] = inf;
            accrued_[j] += t_ - period_start_[u];
        }
    }

    void fire_arrival(int j) {
        auto u = static_cast<std::size_t>(j);
        last_station_ = j;
        last_kind_ = EventKind::arrival;
        ++ext_[u];
        int tag = -1;
        if (tagging_ && j == tag_station_) tag = new_tag();
        enter(j, tag);
        next_arrival_[u] = t_ + net_->stations[j].arrival->sample(arr_s_[u]);
    }

    void fire_completion(int j) {
        auto u = static_cast<std::size_t>(j);
        last_station_ = j;
        last_kind_ = EventKind::completion;
        ++done_[u];

        int tag = -1;
        if (tagging_) {
            tag = fifo_[u].front();
            fifo_[u].pop_front();
        }
        leave(j);

        double draw = rte_s_[u].uniform();
        int dest = -1;
        for (int k = 0; k < J_; ++k) {
            if (draw <= cum_route_[static_cast<std::size_t>(j * J_ + k)]) {
                dest = k;
                break;
            }
        }
        if (dest >= 0) {
            ++routed_[static_cast<std::size_t>(j * J_ + dest)];
            enter(dest, tag);
        } else {
            ++exits_[u];
            if (tag >= 0) finish_tag(tag);
        }
    }

    int new_tag() {
        int id;
        if (!free_tags_.empty()) {
            id = free_tags_.back();
            free_tags_.pop_back();
            auto& tg = tags_[static_cast<std::size_t>(id)];
            tg.t_in = t_;
            std::fill(tg.visits.begin(), tg.visits.end(), 0);
        } else {
            id = static_cast<int>(tags_.size());
            tags_.push_back({t_, std::vector<long>(static_cast<std::size_t>(J_), 0)});
        }
        return id;
    }

    void finish_tag(int id) {
        auto& tg = tags_[static_cast<std::size_t>(id)];
        if (tg.visits == tag_h_) matches_.emplace_back(tg.t_in, t_ - tg.t_in);
        free_tags_.push_back(id);
    }

    struct Tag {
        double t_in;
        std::vector<long> visits;
    };

    const NetworkSpec* net_;
    int J_;
    std::vector<double> cum_route_;
    std::vector<RandomStream> arr_s_, svc_s_, rte_s_;

    double t_ = 0.0;
    std::uint64_t events_ = 0;
    std::vector<long> q_, ext_, done_, exits_, routed_;
    Vec accrued_;
    std::vector<double> period_start_, next_arrival_, next_completion_;
    int last_station_ = -1;
    EventKind last_kind_ = EventKind::arrival;

    bool tagging_ = false;
    int tag_station_ = -1;
    std::vector<long> tag_h_;
    std::vector<std::deque<int>> fifo_;
    std::vector<Tag> tags_;
    std::vector<int> free_tags_;
    std::vector<std::pair<double, double>> matches_;
};

// ==== trajectory-level runs =================================================

struct EventRecord {
    double t;
    int station;
    EventKind kind;
    std::vector<long> q;  // queue lengths right after the event
};

// counters right after an event, for conservation-law checks
struct EventCounters {
    std::vector<long> external, completed, routed;  // routed is row-major J x J
    Vec busy;
};

struct SimOptions {
    double horizon = 0.0;
    std::uint64_t seed = 1;
    std::vector<long> initial_q;       // empty means start empty
    std::vector<double> output_grid;   // sample times for the recorded path
    bool log_busy_grid = false;        // also record busy times on the grid
    bool log_events = false;
    bool log_counters = false;         // implies log_events
    std::uint64_t max_events = 100'000'000;
};

struct Trajectory {
    std::vector<EventRecord> events;
    std::vector<EventCounters> counters;  // parallel to events when requested
    Path sampled;                         // on the output grid when requested
    Mat sampled_busy;                     // grid x station busy times when requested
    std::vector<long> final_q;
    Vec busy;                             // per-station busy time at the horizon
    std::vector<long> arrivals, completions, exits;
    double end_time = 0.0;
    std::uint64_t n_events = 0;
};

inline Trajectory simulate(const NetworkSpec& net, const SimOptions& opt) {
    if (!net.derived) throw Error("invalid-argument", "network must be validated first");
    if (!(opt.horizon > 0.0)) throw Error("invalid-argument", "horizon must be positive");
    for (long v : opt.initial_q)
        if (v < 0) throw Error("invalid-argument", "initial queue lengths must be >= 0");
    for (std::size_t i = 0; i < opt.output_grid.size(); ++i) {
        double g = opt.output_grid[i];
        if (g < 0.0 || g > opt.horizon || (i > 0 && g <= opt.output_grid[i - 1]))
            throw Error("invalid-argument", "output grid must increase within [0, horizon]");
    }

    // crude expected-event count; the hard counter below is the real guard
    double load = net.alpha.sum() + net.lambda.sum() + net.mu.sum();
    double start_mass = 0.0;
    for (long v : opt.initial_q) start_mass += static_cast<double>(v);
    if (opt.horizon * load + 4.0 * start_mass > 1.5 * static_cast<double>(opt.max_events))
        throw Error("horizon-too-long", "run would exceed the event budget");

    GjnEngine eng(net, opt.seed, opt.initial_q);
    Trajectory tr;
    const bool log_ev = opt.log_events || opt.log_counters;
    const int J = net.dim();

    std::size_t gi = 0;
    Mat grid_vals(static_cast<Eigen::Index>(opt.output_grid.size()), J);
    Mat grid_busy(opt.log_busy_grid ? static_cast<Eigen::Index>(opt.output_grid.size()) : 0, J);
    while (true) {
        double tn = eng.peek_next_time();
        while (gi < opt.output_grid.size() && opt.output_grid[gi] < tn) {
            for (int j = 0; j < J; ++j) {
                grid_vals(static_cast<Eigen::Index>(gi), j) =
                    static_cast<double>(eng.queue()[static_cast<std::size_t>(j)]);
                if (opt.log_busy_grid)
                    grid_busy(static_cast<Eigen::Index>(gi), j) =
                        eng.busy_time_at(j, opt.output_grid[gi]);
            }
            ++gi;
        }
        if (!eng.step(opt.horizon)) break;
        if (eng.events() > opt.max_events)
            throw Error("horizon-too-long", "event budget exhausted at t=" +
                                                std::to_string(eng.now()));
        if (log_ev) {
            tr.events.push_back({eng.now(), eng.last_station(), eng.last_kind(), eng.queue()});
            if (opt.log_counters) {
                EventCounters c;
                c.external = eng.external_counts();
                c.completed = eng.completion_counts();
                c.routed = eng.routed_counts();
                c.busy = Vec(J);
                for (int j = 0; j < J; ++j) c.busy[j] = eng.busy_time_at(j, eng.now());
                tr.counters.push_back(std::move(c));
            }
        }
    }

    if (!opt.output_grid.empty()) {
        // sample times as given, not necessarily a from-zero path
        tr.sampled.t = opt.output_grid;
        tr.sampled.values = std::move(grid_vals);
        tr.sampled.interp = Interp::piecewise_constant;
        if (opt.log_busy_grid) tr.sampled_busy = std::move(grid_busy);
    }
    tr.final_q = eng.queue();
    tr.busy = Vec(J);
    for (int j = 0; j < J; ++j) tr.busy[j] = eng.busy_time_at(j, opt.horizon);
    tr.arrivals = eng.external_counts();
    tr.completions = eng.completion_counts();
    tr.exits = eng.exit_counts();
    tr.end_time = opt.horizon;
    tr.n_events = eng.events();
    return tr;
}

// ==== conservation diagnostics ==============================================

// Replays a fully logged trajectory against the balance laws it must satisfy:
//
//   * integer balance: queue = initial + external + routed in - completed,
//     checked exactly (all quantities are counts);
//   * free-process reconstruction: with Y_j = mu_j (t - B_j), the combination
//     X + (I - P') Y rebuilt from logged primitives must reproduce the queue.
//     The identity is algebraic in the logged values, so the residual is pure
//     evaluation roundoff;
//   * monotone pushing: Y never decreases (up to one rounding unit);
//   * complementarity: a station that was busy over an interval contributes
//     no pushing, so the q-weighted positive increments of Y stay tiny.
struct ConservationReport {
    bool integer_balance_ok = true;
    double max_identity_gap = 0.0;
    double min_y_increment = 0.0;
    double max_complementarity = 0.0;
};

inline ConservationReport conservation_report(const NetworkSpec& net,
                                              const std::vector<long>& initial_q,
                                              const Trajectory& tr) {
    if (tr.counters.size() != tr.events.size())
        throw Error("invalid-argument", "counter logging was not enabled for this run");
    const int J = net.dim();
    std::vector<long> q0 = initial_q;
    if (q0.empty()) q0.assign(static_cast<std::size_t>(J), 0);

    ConservationReport rep;
    Vec prev_y = Vec::Zero(J);
    std::vector<long> prev_q = q0;
    Vec comp = Vec::Zero(J);
    for (std::size_t i = 0; i < tr.events.size(); ++i) {
        const auto& ev = tr.events[i];
        const auto& c = tr.counters[i];
        double t = ev.t;
        for (int j = 0; j < J; ++j) {
            auto u = static_cast<std::size_t>(j);
            long in = 0;
            for (int k = 0; k < J; ++k) in += c.routed[static_cast<std::size_t>(k * J + j)];
            long balance = q0[u] + c.external[u] + in - c.completed[u];
            if (balance != ev.q[u]) rep.integer_balance_ok = false;

            double yj = net.mu[j] * (t - c.busy[j]);
            double xj = static_cast<double>(q0[u]) +
                        (static_cast<double>(c.external[u]) - net.alpha[j] * t);
            double centering = net.alpha[j] - net.mu[j];
            for (int k = 0; k < J; ++k) {
                auto rk = static_cast<std::size_t>(k * J + j);
                xj += static_cast<double>(c.routed[rk]) -
                      net.routing(k, j) * static_cast<double>(c.completed[k]);
                xj += net.routing(k, j) *
                      (static_cast<double>(c.completed[k]) - net.mu[k] * c.busy[k]);
                centering += net.routing(k, j) * net.mu[k];
            }
            xj -= static_cast<double>(c.completed[u]) - net.mu[j] * c.busy[j];
            xj += centering * t;

            double rebuilt = xj + yj;
            for (int k = 0; k < J; ++k)
                rebuilt -= net.routing(k, j) * net.mu[k] * (t - c.busy[k]);
            rep.max_identity_gap =
                std::max(rep.max_identity_gap, std::abs(rebuilt - static_cast<double>(ev.q[u])));

            double dy = yj - prev_y[j];
            rep.min_y_increment = std::min(rep.min_y_increment, dy);
            comp[j] += static_cast<double>(prev_q[u]) * std::max(dy, 0.0);
            prev_y[j] = yj;
        }
        prev_q = ev.q;
    }
    rep.max_complementarity = comp.size() ? comp.maxCoeff() : 0.0;
    return rep;
}

// ==== stationary sampling ===================================================

// Time for the workload to forget its start, by the worst station's slack.
inline double relaxation_scale(const NetworkSpec& net) {
    if (!net.stable()) throw Error("refuse-unstable", "some station has utilization >= 1");
    return 1.0 / (net.mu.array() * (1.0 - net.rho.array())).minCoeff();
}

inline double default_warmup(const NetworkSpec& net) { return 50.0 * relaxation_scale(net); }
inline double default_spacing(const NetworkSpec& net) { return 5.0 * relaxation_scale(net); }

// Spaced reads of the queue-length vector from one long run per replication.
// Sample k of replication r is taken at warmup + k * spacing, k = 0..n-1,
// with replication r seeded by a substream of the master seed.
inline StationarySampleSet stationary_sample(const NetworkSpec& net, double warmup,
                                             long n_samples, double spacing,
                                             std::uint64_t seed, int replications = 1,
                                             std::uint64_t max_events = 100'000'000) {
    if (!net.stable()) throw Error("refuse-unstable", "some station has utilization >= 1");
    if (n_samples < 1 || spacing <= 0.0 || warmup < 0.0 || replications < 1)
        throw Error("invalid-argument", "need n_samples >= 1, spacing > 0, warmup >= 0");

    const int J = net.dim();
    StationarySampleSet out;
    out.kind = "queue-length";
    out.warmup = warmup;
    out.spacing = spacing;
    out.replications = replications;
    out.seed = seed;
    out.model_digest = network_digest(net);
    out.samples.resize(static_cast<Eigen::Index>(n_samples) * replications, J);
    out.rep_of_row.resize(static_cast<std::size_t>(n_samples) * replications);

    SimOptions opt;
    opt.horizon = warmup + static_cast<double>(n_samples - 1) * spacing;
    if (opt.horizon <= 0.0) opt.horizon = std::max(warmup, spacing);
    opt.max_events = max_events;
    opt.output_grid.resize(static_cast<std::size_t>(n_samples));
    for (long k = 0; k < n_samples; ++k)
        opt.output_grid[static_cast<std::size_t>(k)] = warmup + static_cast<double>(k) * spacing;

    for (int rep = 0; rep < replications; ++rep) {
        opt.seed = derive_seed(seed, StreamKind::replication, static_cast<std::uint64_t>(rep));
        auto tr = simulate(net, opt);
        for (long k = 0; k < n_samples; ++k) {
            auto row = static_cast<Eigen::Index>(rep) * n_samples + k;
            out.samples.row(row) = tr.sampled.values.row(static_cast<Eigen::Index>(k));
            out.rep_of_row[static_cast<std::size_t>(row)] = rep;
        }
    }
    return out;
}

// ==== tagged sojourns =======================================================

// Can a job entering at `station` realize exactly the visit counts h before
// leaving? Depth-first search over (current station, remaining visits), with
// transitions along positive routing probabilities and a positive exit
// probability required at the end.
inline bool visits_feasible(const NetworkSpec& net, int station, const std::vector<long>& h) {
    const int J = net.dim();
    if (station < 0 || station >= J) return false;
    if (static_cast<int>(h.size()) != J) return false;
    long total = 0;
    for (long v : h) {
        if (v < 0) return false;
        total += v;
    }
    if (total == 0 || h[static_cast<std::size_t>(station)] < 1) return false;
    if (total > 10000) throw Error("invalid-argument", "visit pattern too long to check");

    std::vector<double> exit_p(static_cast<std::size_t>(J));
    for (int i = 0; i < J; ++i) exit_p[static_cast<std::size_t>(i)] = 1.0 - net.routing.row(i).sum();

    std::map<std::pair<int, std::vector<long>>, bool> memo;
    std::function<bool(int, std::vector<long>&)> can = [&](int j, std::vector<long>& rem) {
        // entering j consumes one visit
        if (rem[static_cast<std::size_t>(j)] < 1) return false;
        --rem[static_cast<std::size_t>(j)];
        auto key = std::make_pair(j, rem);
        auto it = memo.find(key);
        bool ok;
        if (it != memo.end()) {
            ok = it->second;
        } else {
            long left = 0;
            for (long v : rem) left += v;
            if (left == 0) {
                ok = exit_p[static_cast<std::size_t>(j)] > 1e-15;
            } else {
                ok = false;
                for (int k = 0; k < J && !ok; ++k)
                    if (net.routing(j, k) > 0.0 && rem[static_cast<std::size_t>(k)] > 0)
                        ok = can(k, rem);
            }
            memo.emplace(key, ok);
        }
        ++rem[static_cast<std::size_t>(j)];
        return ok;
    };
    std::vector<long> rem = h;
    return can(station, rem);
}

// Sojourn times of externally arriving jobs at `station` whose realized
// per-station visit counts equal h exactly. One long run; jobs arriving
// before the warmup are matched but not reported.
inline StationarySampleSet sojourn_times(const NetworkSpec& net, int station,
                                         const std::vector<long>& h, double warmup,
                                         long n_samples, std::uint64_t seed,
                                         std::uint64_t max_events = 400'000'000) {
    if (!net.stable()) throw Error("refuse-unstable", "some station has utilization >= 1");
    if (n_samples < 1 || warmup < 0.0)
        throw Error("invalid-argument", "need n_samples >= 1 and warmup >= 0");
    if (station < 0 || station >= net.dim() || !net.stations[station].arrival)
        throw Error("infeasible-visits", "station has no external arrivals to tag");
    if (!visits_feasible(net, station, h))
        throw Error("infeasible-visits", "no routing realization produces these visit counts");

    GjnEngine eng(net, seed);
    eng.enable_tagging(station, h);
    std::size_t scanned = 0;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_samples));
    while (static_cast<long>(out.size()) < n_samples) {
        if (!eng.step(GjnEngine::inf))
            throw Error("horizon-too-long", "event stream ended before enough matches");
        if (eng.events() > max_events)
            throw Error("horizon-too-long", "event budget exhausted before enough matches");
        const auto& m = eng.matches();
        for (; scanned < m.size() && static_cast<long>(out.size()) < n_samples; ++scanned)
            if (m[scanned].first >= warmup) out.push_back(m[scanned].second);
    }

    StationarySampleSet s;
    s.kind = "sojourn";
    s.warmup = warmup;
    s.spacing = 0.0;
    s.replications = 1;
    s.seed = seed;
    s.model_digest = network_digest(net);
    s.samples.resize(static_cast<Eigen::Index>(out.size()), 1);
    for (std::size_t i = 0; i < out.size(); ++i)
        s.samples(static_cast<Eigen::Index>(i), 0) = out[i];
    s.rep_of_row.assign(out.size(), 0);
    return s;
}

}  // namespace qnet
