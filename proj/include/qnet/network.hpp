#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qnet/distributions.hpp"
#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"

namespace qnet {

inline constexpr int kMaxStations = 64;

struct StationSpec {
    std::optional<DistributionSpec> arrival;  // absent: no external arrivals here
    DistributionSpec service;
};

// Open multiclass-free queueing network: renewal external arrivals at a
// subset of stations, i.i.d. services, independent probabilistic routing.
// The primitive fields (stations, routing) define the model; everything
// below them is derived by validate_network() and should be treated as
// read-only output.
struct NetworkSpec {
    std::vector<StationSpec> stations;
    Mat routing;  // J x J, entry (i, j) = probability of moving i -> j

    // Derived:
    Vec alpha;         // external arrival rates (zero where no stream)
    Vec scv_arrival;   // interarrival scv (zero where no stream)
    Vec mu;            // service rates
    Vec scv_service;   // service scv
    Vec lambda;        // effective arrival rates, lambda = alpha + P' lambda
    Vec rho;           // traffic intensities lambda_j / mu_j
    Vec weights;       // workload weights (I - P)^{-1} 1, each >= 1
    bool derived = false;

    int dim() const { return static_cast<int>(stations.size()); }
    double bottleneck() const { return rho.maxCoeff(); }
    bool stable() const { return derived && bottleneck() < 1.0; }
};

// Routing validation: entries in [0, 1], row sums <= 1, and spectral radius
// strictly below one so that every job eventually leaves. The spectral
// condition is certified without an eigensolver: for a nonnegative matrix,
// the max row sum of P^k bounds rho(P)^k, so after 13 repeated squarings
// ||P^8192 1||_inf < 1 - 1e-5 proves rho(P) < 1 - 1.2e-9, while any
// rho(P) >= 1 keeps the row sums at or above 1 and is rejected.
inline void check_routing(const Mat& P) {
    const auto J = P.rows();
    if (J == 0 || P.cols() != J)
        throw Error("invalid-routing", "routing matrix must be square and non-empty");
    if (J > kMaxStations)
        throw Error("invalid-routing", "more than 64 stations");
    for (Eigen::Index i = 0; i < J; ++i) {
        double row = 0.0;
        for (Eigen::Index j = 0; j < J; ++j) {
            double p = P(i, j);
            if (!(p >= 0.0 && p <= 1.0))
                throw Error("invalid-routing", "entry (" + std::to_string(i) + ", " +
                                                   std::to_string(j) + ") outside [0, 1]");
            row += p;
        }
        if (row > 1.0 + 1e-12)
            throw Error("invalid-routing", "row " + std::to_string(i) + " sums to " +
                                               std::to_string(row) + " > 1");
    }
    Mat B = P;
    for (int k = 0; k < 13; ++k) B = B * B;
    double contraction = (B * Vec::Ones(J)).maxCoeff();
    if (!(contraction < 1.0 - 1e-5))
        throw Error("non-convergent-routing",
                    "routing matrix keeps mass circulating (spectral radius too close to 1)");
}

/// Effective arrival rates: the unique solution of lambda = alpha + P' lambda.
inline Vec solve_traffic(const Vec& alpha, const Mat& P) {
    check_routing(P);
    if (alpha.size() != P.rows())
        throw Error("dimension-mismatch", "alpha and routing matrix disagree");
    const auto J = P.rows();
    Vec lambda = solve_refined(Mat::Identity(J, J) - P.transpose(), alpha);
    double resid = (lambda - alpha - P.transpose() * lambda).norm();
    if (!(resid <= 1e-10 * (1.0 + lambda.norm())))
        throw Error("non-convergent-routing", "traffic equations did not resolve");
    return lambda;
}

/// Workload weights w = (I - P)^{-1} 1: expected total work a job entering
/// each station still brings to the system. Always componentwise >= 1.
inline Vec workload_weights(const Mat& P) {
    const auto J = P.rows();
    return solve_refined(Mat::Identity(J, J) - P, Vec::Ones(J));
}

// Validate primitives and fill in all derived quantities.
inline NetworkSpec validate_network(NetworkSpec net) {
    const int J = net.dim();
    if (J == 0) throw Error("invalid-routing", "network has no stations");
    check_routing(net.routing);
    if (net.routing.rows() != J)
        throw Error("dimension-mismatch", "routing matrix does not match station count");

    net.alpha = Vec::Zero(J);
    net.scv_arrival = Vec::Zero(J);
    net.mu = Vec::Zero(J);
    net.scv_service = Vec::Zero(J);
    for (int j = 0; j < J; ++j) {
        const auto& st = net.stations[j];
        if (st.arrival) {
            st.arrival->validate();
            net.alpha[j] = 1.0 / st.arrival->mean();
            net.scv_arrival[j] = st.arrival->scv();
        }
        st.service.validate();
        net.mu[j] = 1.0 / st.service.mean();
        net.scv_service[j] = st.service.scv();
    }
    net.lambda = solve_traffic(net.alpha, net.routing);
    net.rho = net.lambda.cwiseQuotient(net.mu);
    net.weights = workload_weights(net.routing);
    net.derived = true;
    return net;
}

// ==== heavy-traffic sequences ===============================================
//
// A sequence of networks indexed by n, sharing services and routing, whose
// arrival streams are thinned so that utilizations approach one like
// rho_j^n = 1 - kappa_j / sqrt(n). The user supplies per-arrival-stream
// thinning weights kappa0 (positive exactly where an external stream exists);
// member n stretches the interarrival distribution at station j by
// 1 / (1 - kappa0_j / sqrt(n)). Because the base network is critical
// (lambda = mu), the induced utilization gaps are exactly
//
//     kappa = M (I - P')^{-1} diag(alpha) kappa0,
//
// with M the diagonal matrix of mean service times 1/mu_j, so both
// advertised limits hold identically in n, not just asymptotically.
struct HeavyTrafficSequence {
    NetworkSpec base;  // critical: lambda = mu componentwise
    Vec kappa0;        // thinning weight per station (zero where no stream)
    Vec kappa;         // derived utilization gap coefficients, all > 0
};

inline HeavyTrafficSequence make_heavy_traffic_sequence(NetworkSpec base, Vec kappa0) {
    if (!base.derived) base = validate_network(std::move(base));
    const int J = base.dim();
    if (kappa0.size() != J) throw Error("dimension-mismatch", "kappa0 has wrong length");

    double crit = (base.lambda - base.mu).cwiseAbs().maxCoeff();
    if (!(crit <= 1e-10 * (1.0 + base.mu.cwiseAbs().maxCoeff())))
        throw Error("not-critical", "base network must satisfy lambda = mu");

    for (int j = 0; j < J; ++j) {
        bool has_stream = base.alpha[j] > 0.0;
        if (has_stream && !(kappa0[j] > 0.0))
            throw Error("degenerate-member",
                        "kappa0 must be positive at stations with external arrivals");
        if (!has_stream && kappa0[j] != 0.0)
            throw Error("degenerate-member",
                        "kappa0 must be zero at stations without external arrivals");
    }

    HeavyTrafficSequence seq;
    seq.kappa = solve_refined(Mat::Identity(J, J) - base.routing.transpose(),
                              base.alpha.cwiseProduct(kappa0))
                    .cwiseQuotient(base.mu);
    if (!(seq.kappa.minCoeff() > 0.0))
        throw Error("degenerate-member", "derived kappa is not strictly positive");
    seq.base = std::move(base);
    seq.kappa0 = std::move(kappa0);
    return seq;
}

// Member n of the sequence: arrival streams thinned, everything else shared.
inline NetworkSpec heavy_traffic_member(const HeavyTrafficSequence& seq, long n) {
    if (n < 1) throw Error("degenerate-member", "index n must be >= 1");
    double rn = std::sqrt(static_cast<double>(n));
    NetworkSpec net = seq.base;
    net.derived = false;
    for (int j = 0; j < net.dim(); ++j) {
        if (!net.stations[j].arrival) continue;
        double thin = 1.0 - seq.kappa0[j] / rn;
        if (!(thin > 0.0))
            throw Error("degenerate-member",
                        "n too small: arrival stream " + std::to_string(j) + " thinned away");
        net.stations[j].arrival = net.stations[j].arrival->scaled(1.0 / thin);
    }
    net = validate_network(std::move(net));
    if (!(net.rho.maxCoeff() < 1.0))
        throw Error("degenerate-member", "member is not stable");
    return net;
}

// ==== digest ================================================================

inline void hash_mix(std::uint64_t& h, std::uint64_t v) {
    // FNV-1a over the 8 bytes of v
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
    }
}

inline void hash_mix(std::uint64_t& h, double v) { hash_mix(h, std::bit_cast<std::uint64_t>(v)); }

// Order-sensitive content hash of the primitive parameters. Stored in sample
// metadata and experiment records so artifacts can be traced to the exact
// network they came from.
inline std::uint64_t network_digest(const NetworkSpec& net) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    hash_mix(h, static_cast<std::uint64_t>(net.dim()));
    for (const auto& st : net.stations) {
        hash_mix(h, static_cast<std::uint64_t>(st.arrival ? 1 : 0));
        if (st.arrival) {
            hash_mix(h, static_cast<std::uint64_t>(st.arrival->family));
            hash_mix(h, st.arrival->a);
            hash_mix(h, st.arrival->b);
            hash_mix(h, st.arrival->c);
        }
        hash_mix(h, static_cast<std::uint64_t>(st.service.family));
        hash_mix(h, st.service.a);
        hash_mix(h, st.service.b);
        hash_mix(h, st.service.c);
    }
    for (Eigen::Index i = 0; i < net.routing.rows(); ++i)
        for (Eigen::Index j = 0; j < net.routing.cols(); ++j) hash_mix(h, net.routing(i, j));
    return h;
}

}  // namespace qnet
