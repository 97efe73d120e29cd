#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "qnet/lyapunov.hpp"

using namespace qnet;
using Catch::Matchers::WithinAbs;

namespace {

NetworkSpec mm1(double alpha, double mu) {
    NetworkSpec net;
    net.stations.push_back(
        {DistributionSpec::exponential(alpha), DistributionSpec::exponential(mu)});
    net.routing = Mat::Zero(1, 1);
    return validate_network(std::move(net));
}

std::vector<Vec> scalar_probes(std::initializer_list<double> xs) {
    std::vector<Vec> out;
    for (double x : xs) out.push_back(Vec::Constant(1, x));
    return out;
}

const StateFunctional first_coord = [](const Vec& x) { return x[0]; };

// drains one unit of potential per unit time, stopping at zero
const TransitionSampler drain_chain = [](const Vec& x, double t0, std::uint64_t) {
    return Vec::Constant(1, std::max(x[0] - t0, 0.0));
};

}  // namespace

TEST_CASE("deterministic drain certifies its exact drift") {
    auto cert = estimate_drift(drain_chain, first_coord, 5.0, scalar_probes({10, 20, 40}), 16, 3);
    REQUIRE(cert.kind == DriftKind::additive);
    REQUIRE(cert.gamma == 5.0);
    REQUIRE(cert.K >= 5.0);
    for (const auto& p : cert.probes) {
        REQUIRE(p.change.se == 0.0);
        REQUIRE(p.certified);
    }
}

TEST_CASE("half-loaded queue drifts down by the service surplus") {
    auto net = mm1(0.5, 1.0);
    auto sampler = gjn_transition_sampler(net);
    auto cert = estimate_drift(sampler, first_coord, 100.0, scalar_probes({50, 100, 200}), 300,
                               2024);
    // mean change from high states is -(mu - lambda) t0 = -50
    REQUIRE(cert.gamma > 44.0);
    REQUIRE(cert.gamma < 53.0);
    REQUIRE(cert.K < 200.0);
    for (const auto& p : cert.probes)
        if (p.certified) REQUIRE(p.ucb <= -cert.gamma);
}

TEST_CASE("overloaded queue yields no certificate") {
    auto net = mm1(1.5, 1.0);
    auto sampler = gjn_transition_sampler(net);
    REQUIRE(testutil::error_code_of([&] {
                estimate_drift(sampler, first_coord, 50.0, scalar_probes({20, 50, 100}), 60, 5);
            }) == "no-certificate");
}

TEST_CASE("frozen chain gives unit first functional and zero second") {
    const TransitionSampler frozen = [](const Vec& x, double, std::uint64_t) { return x; };
    auto l = estimate_L_functionals(frozen, first_coord, 3.0, 1.0, scalar_probes({7}), 50, 1);
    REQUIRE(l.L1 == 1.0);
    REQUIRE(l.L2 == 0.0);
    REQUIRE(l.phi_t0 == 1.0);
}

TEST_CASE("fair walk matches its closed-form exponential moments") {
    const TransitionSampler walk = [](const Vec& x, double, std::uint64_t seed) {
        RandomStream rs(seed);
        return Vec::Constant(1, rs.uniform() < 0.5 ? x[0] + 1.0 : x[0] - 1.0);
    };
    double theta = 0.5;
    auto l = estimate_L_functionals(walk, first_coord, theta, 1.0, scalar_probes({10}), 20000, 9);
    REQUIRE_THAT(l.L1, WithinAbs(std::cosh(theta), 0.02));
    REQUIRE_THAT(l.L2, WithinAbs(0.5 * (std::exp(theta) + 1.0), 0.02));
}

TEST_CASE("exploding increments are rejected rather than overflowed") {
    const TransitionSampler boom = [](const Vec& x, double, std::uint64_t) {
        return Vec::Constant(1, x[0] + 2000.0);
    };
    REQUIRE(testutil::error_code_of([&] {
                estimate_L_functionals(boom, first_coord, 1.0, 1.0, scalar_probes({1}), 10, 1);
            }) == "theta-too-large");
}

TEST_CASE("moment bound substitutes the formula and guards its inputs") {
    DriftCertificate cert;
    cert.kind = DriftKind::geometric;
    cert.t0 = 1.0;
    cert.gamma = 0.5;
    cert.K = 10.0;
    REQUIRE(moment_bound(cert, 2.0) == 40.0);
    cert.gamma = 0.9;
    REQUIRE_THAT(moment_bound(cert, 2.0), WithinAbs(200.0, 1e-10));

    // increasing in K and in gamma
    DriftCertificate larger_K = cert;
    larger_K.K = 12.0;
    REQUIRE(moment_bound(larger_K, 2.0) > moment_bound(cert, 2.0));
    DriftCertificate larger_g = cert;
    larger_g.gamma = 0.95;
    REQUIRE(moment_bound(larger_g, 2.0) > moment_bound(cert, 2.0));

    cert.gamma = 1.0;
    REQUIRE(testutil::error_code_of([&] { moment_bound(cert, 2.0); }) == "invalid-certificate");
    cert.kind = DriftKind::additive;
    cert.gamma = 0.5;
    REQUIRE(testutil::error_code_of([&] { moment_bound(cert, 2.0); }) == "invalid-certificate");
}

TEST_CASE("tail bound substitutes the formula and guards its inputs") {
    DriftCertificate cert;
    cert.kind = DriftKind::additive;
    cert.t0 = 1.0;
    cert.gamma = 1.0;
    cert.K = 5.0;
    LFunctionals l;
    l.theta = 0.1;
    l.t0 = 1.0;
    l.L1 = 2.0;
    l.L2 = 5.0;
    double v = tail_bound(cert, l, 15.0);
    REQUIRE_THAT(v, WithinAbs(2.0 * std::exp(-1.0) / 0.95, 1e-12));

    REQUIRE(tail_bound(cert, l, 20.0) < tail_bound(cert, l, 15.0));
    REQUIRE(tail_bound(cert, l, 6.0) <= 1.0);

    LFunctionals bad = l;
    bad.L2 = 20.0;
    REQUIRE(testutil::error_code_of([&] { tail_bound(cert, bad, 15.0); }) ==
            "condition-28-failed");
    REQUIRE(testutil::error_code_of([&] { tail_bound(cert, l, 3.0); }) == "threshold-below-K");
    LFunctionals off = l;
    off.t0 = 2.0;
    REQUIRE(testutil::error_code_of([&] { tail_bound(cert, off, 15.0); }) == "invalid-argument");
    DriftCertificate geo = cert;
    geo.kind = DriftKind::geometric;
    REQUIRE(testutil::error_code_of([&] { tail_bound(geo, l, 15.0); }) == "invalid-certificate");
}

TEST_CASE("truncated birth-death chain: bound dominates the exact mean") {
    // births with probability 0.3, deaths 0.7, reflected at 0 and 30;
    // detailed balance gives a truncated geometric stationary law
    const long cap = 30;
    const TransitionSampler chain = [cap](const Vec& x, double t0, std::uint64_t seed) {
        RandomStream rs(seed);
        long v = static_cast<long>(std::round(x[0]));
        long steps = static_cast<long>(std::round(t0));
        for (long s = 0; s < steps; ++s) {
            if (rs.uniform() < 0.3)
                v = std::min(v + 1, cap);
            else
                v = std::max(v - 1, 0L);
        }
        return Vec::Constant(1, static_cast<double>(v));
    };
    const StateFunctional phi = [](const Vec& x) { return x[0] + 1.0; };

    std::vector<Vec> probes;
    for (long v = 0; v <= cap; ++v) probes.push_back(Vec::Constant(1, static_cast<double>(v)));

    auto cert = estimate_drift(chain, phi, 20.0, probes, 250, 77, DriftKind::geometric);
    REQUIRE(cert.gamma > 0.0);
    REQUIRE(cert.gamma < 1.0);

    // the growth-ratio potential is the worst ratio seen anywhere
    double phi_t0 = 0.0;
    for (const auto& p : cert.probes) phi_t0 = std::max(phi_t0, p.ucb);
    double bound = moment_bound(cert, phi_t0);

    double r = 0.3 / 0.7;
    double norm = 0.0, mean = 0.0, w = 1.0;
    for (long v = 0; v <= cap; ++v, w *= r) {
        norm += w;
        mean += static_cast<double>(v) * w;
    }
    double exact = mean / norm + 1.0;
    REQUIRE(bound >= exact);
}

TEST_CASE("tail bound certificate pipeline dominates the geometric tail") {
    auto net = mm1(0.8, 1.0);
    auto sampler = gjn_transition_sampler(net);
    double t0 = 25.0;
    auto probes = scalar_probes({30, 60, 100});
    auto inc = collect_increments(sampler, first_coord, t0, probes, 400, 1234);
    auto cert = estimate_drift(sampler, first_coord, t0, probes, 400, 1234);
    REQUIRE(cert.gamma > 3.0);

    auto l = select_theta(inc, cert.gamma);
    REQUIRE(l.theta > 0.0);
    REQUIRE(l.theta * l.L2 <= cert.gamma);
    // consistency consequence, and the second functional floors at gamma^2
    REQUIRE(cert.gamma * l.theta <= 1.0);
    REQUIRE(l.L2 >= 0.9 * cert.gamma * cert.gamma);

    double prev = 2.0;
    for (double s = cert.K + 1.0; s <= cert.K + 50.0; s += 1.0) {
        double b = tail_bound(cert, l, s);
        REQUIRE(b >= std::pow(0.8, s));
        REQUIRE(b <= prev);
        prev = b;
    }
}

TEST_CASE("vanishing gamma admits no exponential certificate") {
    const TransitionSampler walk = [](const Vec& x, double, std::uint64_t seed) {
        RandomStream rs(seed);
        return Vec::Constant(1, rs.uniform() < 0.5 ? x[0] + 1.0 : x[0] - 1.0);
    };
    auto inc = collect_increments(walk, first_coord, 1.0, scalar_probes({5}), 100, 4);
    REQUIRE(testutil::error_code_of([&] { select_theta(inc, 1e-20); }) == "no-certificate");
}

TEST_CASE("probe argument validation") {
    REQUIRE(testutil::error_code_of([&] {
                estimate_drift(drain_chain, first_coord, 5.0, {}, 16, 1);
            }) == "invalid-argument");
    REQUIRE(testutil::error_code_of([&] {
                estimate_drift(drain_chain, first_coord, 5.0, scalar_probes({10}), 1, 1);
            }) == "invalid-argument");
    REQUIRE(testutil::error_code_of([&] {
                estimate_drift(drain_chain, first_coord, 0.0, scalar_probes({10}), 16, 1);
            }) == "invalid-argument");
    REQUIRE(testutil::error_code_of([&] {
                estimate_drift(drain_chain, first_coord, 5.0, scalar_probes({0}), 16, 1,
                               DriftKind::geometric);
            }) == "invalid-argument");
}

TEST_CASE("workload recipe produces usable constants for the critical queue") {
    auto seq = make_heavy_traffic_sequence(mm1(1.0, 1.0), Vec::Constant(1, 1.0));
    auto rec = workload_drift_recipe(seq, 200.0, 32, 11);
    REQUIRE(rec.rate == 1.0);
    REQUIRE(rec.c2_hat > 0.5);
    REQUIRE(rec.c2_hat < 8.0);
    // t0 solves c2 sqrt(t) - rate t = -1 at the positive root
    REQUIRE_THAT(rec.rate * rec.t0 - rec.c2_hat * std::sqrt(rec.t0), WithinAbs(1.0, 1e-9));
    REQUIRE_THAT(rec.c0, WithinAbs(rec.c2_hat * std::sqrt(rec.t0) + 1.0, 1e-12));
}

TEST_CASE("workload drifts down at rate sqrt(n) outside the region") {
    auto seq = make_heavy_traffic_sequence(mm1(1.0, 1.0), Vec::Constant(1, 1.0));
    auto rec = workload_drift_recipe(seq, 200.0, 32, 11);
    long n = 100;
    double rn = std::sqrt(static_cast<double>(n));
    std::vector<Vec> probes;
    for (double f : {1.2, 1.5, 2.0})
        probes.push_back(Vec::Constant(1, std::ceil(f * rec.c0 * rn)));

    auto rep = workload_drift_check(seq, n, rec.t0, rec.c0, probes, 48, 303);
    REQUIRE(rep.pass);
    for (const auto& p : rep.probes) {
        REQUIRE(p.pass);
        REQUIRE(p.ucb <= -rn);
    }

    REQUIRE(testutil::error_code_of([&] {
                workload_drift_check(seq, n, rec.t0, rec.c0,
                                     {Vec::Constant(1, 0.5 * rec.c0 * rn)}, 8, 1);
            }) == "invalid-argument");
}

TEST_CASE("two-station workload drift passes at a larger index") {
    NetworkSpec net;
    net.stations.push_back(
        {DistributionSpec::exponential(1.0), DistributionSpec::exponential(1.0)});
    net.stations.push_back({std::nullopt, DistributionSpec::exponential(1.0)});
    net.routing = Mat::Zero(2, 2);
    net.routing(0, 1) = 1.0;
    auto seq = make_heavy_traffic_sequence(validate_network(std::move(net)), [] {
        Vec k(2);
        k << 1.0, 0.0;
        return k;
    }());
    auto rec = workload_drift_recipe(seq, 200.0, 24, 19);
    long n = 400;
    double rn = 20.0;
    std::vector<Vec> probes;
    for (double f : {1.2, 2.0}) {
        double k = std::ceil(f * rec.c0 * rn / 3.0);  // weights are (2, 1)
        probes.push_back(Vec::Constant(2, k));
    }
    auto rep = workload_drift_check(seq, n, rec.t0, rec.c0, probes, 24, 307);
    REQUIRE(rep.pass);
}
