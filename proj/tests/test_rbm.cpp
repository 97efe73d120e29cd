#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "helpers.hpp"
#include "qnet/rbm.hpp"
#include "qnet/stats.hpp"

using namespace qnet;

namespace {

NetworkSpec critical_tandem() {
    NetworkSpec net;
    net.stations.push_back({DistributionSpec::exponential(1.0), DistributionSpec::exponential(1.0)});
    net.stations.push_back({std::nullopt, DistributionSpec::exponential(1.0)});
    net.routing = Mat::Zero(2, 2);
    net.routing(0, 1) = 1.0;
    return validate_network(std::move(net));
}

NetworkSpec critical_mm1() {
    NetworkSpec net;
    net.stations.push_back({DistributionSpec::exponential(1.0), DistributionSpec::exponential(1.0)});
    net.routing = Mat::Zero(1, 1);
    return validate_network(std::move(net));
}

}  // namespace

TEST_CASE("tandem diffusion parameters match the hand computation") {
    auto seq = make_heavy_traffic_sequence(critical_tandem(), Vec{{1.0, 0.0}});
    auto spec = rbm_params(seq);

    Mat expected(2, 2);
    expected << 2.0, -1.0, -1.0, 2.0;
    REQUIRE((spec.gamma - expected).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(spec.beta[0] == -1.0);
    REQUIRE(spec.beta[1] == 0.0);
    REQUIRE(spec.stable);
    REQUIRE(spec.product_form);

    Vec eta = product_form_rates(spec);
    REQUIRE(std::abs(eta[0] - 1.0) < 1e-12);
    REQUIRE(std::abs(eta[1] - 1.0) < 1e-12);
    REQUIRE((eta - spec.eta).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("deterministic first-stage service breaks the product form") {
    NetworkSpec net;
    net.stations.push_back({DistributionSpec::exponential(1.0), DistributionSpec::deterministic(1.0)});
    net.stations.push_back({std::nullopt, DistributionSpec::exponential(1.0)});
    net.routing = Mat::Zero(2, 2);
    net.routing(0, 1) = 1.0;
    auto spec = rbm_params(make_heavy_traffic_sequence(std::move(net), Vec{{1.0, 0.0}}));

    REQUIRE((spec.gamma - Mat::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE_FALSE(spec.product_form);
    Mat expected_residual(2, 2);
    expected_residual << 0.0, 1.0, 1.0, 0.0;
    REQUIRE((spec.skew_residual - expected_residual).cwiseAbs().maxCoeff() < 1e-12);

    bool threw = false;
    try {
        product_form_rates(spec);
    } catch (const NoProductFormError& e) {
        threw = true;
        REQUIRE((e.residual() - expected_residual).cwiseAbs().maxCoeff() < 1e-12);
    }
    REQUIRE(threw);
}

TEST_CASE("single-station diffusion parameters and rate") {
    auto seq = make_heavy_traffic_sequence(critical_mm1(), Vec{{1.0}});
    auto spec = rbm_params(seq);
    REQUIRE(spec.beta[0] == -1.0);
    REQUIRE(spec.gamma(0, 0) == 2.0);
    REQUIRE(spec.stable);
    REQUIRE(spec.product_form);

    // rate from the utilization gap and rate from the parameters alone
    Vec eta = product_form_rates(spec);
    REQUIRE(std::abs(eta[0] - 1.0) < 1e-12);
    REQUIRE(std::abs(spec.eta[0] - 1.0) < 1e-12);
}

TEST_CASE("drift identity links the sequence drag to the reflection geometry") {
    auto seq = make_heavy_traffic_sequence(critical_tandem(), Vec{{1.0, 0.0}});
    auto spec = rbm_params(seq);
    Mat ipt = Mat::Identity(2, 2) - spec.routing.transpose();
    Vec lhs = solve_refined(ipt, spec.beta);
    Vec rhs = -spec.kappa.cwiseProduct(spec.mu);
    REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("random exponential networks keep the product form") {
    RandomStream rs(derive_seed(404, StreamKind::experiment));
    for (int rep = 0; rep < 100; ++rep) {
        int J = 1 + static_cast<int>(rs.uniform() * 5.0);
        Mat P = testutil::random_substochastic(J, 0.8, rs);
        NetworkSpec net;
        net.routing = P;
        Vec alpha(J), kappa0(J);
        for (int j = 0; j < J; ++j) {
            alpha[j] = 0.2 + rs.uniform();
            kappa0[j] = 0.5 + 1.5 * rs.uniform();
        }
        Vec lambda = solve_traffic(alpha, P);
        for (int j = 0; j < J; ++j)
            net.stations.push_back({DistributionSpec::exponential(alpha[j]),
                                    DistributionSpec::exponential(lambda[j])});
        auto spec = rbm_params(make_heavy_traffic_sequence(std::move(net), kappa0));

        REQUIRE(spec.stable);
        REQUIRE(spec.product_form);
        Vec eta_meta = product_form_rates(spec);
        REQUIRE(eta_meta.minCoeff() > 0.0);
        double scale = eta_meta.cwiseAbs().maxCoeff();
        REQUIRE((eta_meta - spec.eta).cwiseAbs().maxCoeff() < 1e-10 * (1.0 + scale));

        Mat ipt = Mat::Identity(J, J) - P.transpose();
        Vec lhs = solve_refined(ipt, spec.beta);
        Vec rhs = -spec.kappa.cwiseProduct(spec.mu);
        REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + rhs.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("noise-free drift drains linearly") {
    auto spec = make_rbm_spec(Vec{{-1.0}}, Mat::Zero(1, 1), Mat::Zero(1, 1));
    auto sol = simulate_rbm(spec, Vec{{1.0}}, 2.0, 0.125, 9);
    REQUIRE(sol.converged);
    for (std::size_t i = 0; i < sol.q.t.size(); ++i) {
        double expect = std::max(1.0 - sol.q.t[i], 0.0);
        REQUIRE(std::abs(sol.q.values(static_cast<Eigen::Index>(i), 0) - expect) < 1e-12);
    }
}

TEST_CASE("simulated path satisfies the reflection conditions and replays") {
    auto seq = make_heavy_traffic_sequence(critical_tandem(), Vec{{1.0, 0.0}});
    auto spec = rbm_params(seq);
    auto sol = simulate_rbm(spec, Vec{{0.5, 0.5}}, 50.0, 0.02, 33);
    REQUIRE(sol.converged);
    REQUIRE(sol.q.values.minCoeff() >= -1e-10);
    REQUIRE(sol.y.values.row(0).cwiseAbs().maxCoeff() == 0.0);

    auto again = simulate_rbm(spec, Vec{{0.5, 0.5}}, 50.0, 0.02, 33);
    REQUIRE((sol.q.values - again.q.values).cwiseAbs().maxCoeff() == 0.0);
    auto other = simulate_rbm(spec, Vec{{0.5, 0.5}}, 50.0, 0.02, 34);
    REQUIRE((sol.q.values - other.q.values).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("scalar stationary sampler matches the exponential law") {
    auto seq = make_heavy_traffic_sequence(critical_mm1(), Vec{{1.0}});
    auto spec = rbm_params(seq);
    double relax = rbm_relaxation_scale(spec);
    REQUIRE(std::abs(relax - 2.0) < 1e-12);

    long n = 20000;
    auto set = rbm_stationary_sample(spec, 20.0 * relax, n, 5.0 * relax, 0.01, 71);
    auto col = set.column(0);
    auto ms = mean_se(col);
    REQUIRE(std::abs(ms.mean - 1.0) < 5.0 * ms.se + 1e-12);

    double d = ks_distance_exponential(col, 1.0);
    REQUIRE(d < ks_critical(0.01, n));
}

TEST_CASE("long path time average agrees with the stationary mean") {
    auto spec = make_rbm_spec(Vec{{-1.0}}, Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
    double step = 0.01;
    auto sol = simulate_rbm(spec, Vec{{0.0}}, 5000.0, step, 101);
    REQUIRE(sol.converged);
    const auto& q = sol.q;
    double acc = 0.0;
    for (std::size_t i = 1; i < q.t.size(); ++i) {
        double h = q.t[i] - q.t[i - 1];
        acc += 0.5 * h * (q.values(static_cast<Eigen::Index>(i), 0) +
                          q.values(static_cast<Eigen::Index>(i - 1), 0));
    }
    double avg = acc / q.t.back();
    // grid reflection under-lifts by about 0.58 sqrt(gamma h); allow for it plus noise
    REQUIRE(std::abs(avg - 1.0) < 0.6 * std::sqrt(2.0 * step) + 0.12);
}

TEST_CASE("two-station stationary sampler approximates independent exponentials") {
    auto seq = make_heavy_traffic_sequence(critical_tandem(), Vec{{1.0, 0.0}});
    auto spec = rbm_params(seq);
    double step = 0.005;
    long n = 4000;
    auto set = rbm_stationary_sample(spec, 40.0, n, 10.0, step, 55);
    REQUIRE(set.rows() == n);
    REQUIRE(set.cols() == 2);

    double bias_allow = 0.6 * std::sqrt(2.0 * step);
    for (int j = 0; j < 2; ++j) {
        auto col = set.column(j);
        auto ms = mean_se(col);
        REQUIRE(std::abs(ms.mean - 1.0) < bias_allow + 5.0 * ms.se);
        double d = ks_distance_exponential(col, 1.0);
        REQUIRE(d < bias_allow + ks_critical(0.01, n));
    }

    auto c0 = set.column(0);
    auto c1 = set.column(1);
    auto m0 = mean_se(c0);
    auto m1 = mean_se(c1);
    double cov = 0.0, v0 = 0.0, v1 = 0.0;
    for (long i = 0; i < n; ++i) {
        double a = c0[static_cast<std::size_t>(i)] - m0.mean;
        double b = c1[static_cast<std::size_t>(i)] - m1.mean;
        cov += a * b;
        v0 += a * a;
        v1 += b * b;
    }
    double corr = cov / std::sqrt(v0 * v1);
    REQUIRE(std::abs(corr) < 0.06);
}

TEST_CASE("stationary sampler replays bit for bit") {
    auto seq = make_heavy_traffic_sequence(critical_tandem(), Vec{{1.0, 0.0}});
    auto spec = rbm_params(seq);
    auto a = rbm_stationary_sample(spec, 10.0, 200, 5.0, 0.05, 7);
    auto b = rbm_stationary_sample(spec, 10.0, 200, 5.0, 0.05, 7);
    REQUIRE((a.samples - b.samples).cwiseAbs().maxCoeff() == 0.0);
    auto c = rbm_stationary_sample(spec, 10.0, 200, 5.0, 0.05, 8);
    REQUIRE((a.samples - c.samples).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("diffusion guards reject bad requests") {
    REQUIRE(testutil::error_code_of([] {
                auto spec = make_rbm_spec(Vec{{1.0}}, Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
                rbm_stationary_sample(spec, 1.0, 10, 1.0, 0.1, 1);
            }) == "refuse-unstable");
    REQUIRE(testutil::error_code_of([] {
                auto spec = make_rbm_spec(Vec{{1.0}}, Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
                product_form_rates(spec);
            }) == "unstable");
    REQUIRE(testutil::error_code_of([] {
                Mat g(2, 2);
                g << 1.0, 2.0, 2.0, 1.0;
                make_rbm_spec(Vec{{-1.0, -1.0}}, g, Mat::Zero(2, 2));
            }) == "invalid-covariance");
    REQUIRE(testutil::error_code_of([] {
                Mat g(2, 2);
                g << 1.0, 0.5, -0.5, 1.0;
                make_rbm_spec(Vec{{-1.0, -1.0}}, g, Mat::Zero(2, 2));
            }) == "invalid-covariance");
    REQUIRE(testutil::error_code_of([] {
                auto spec = make_rbm_spec(Vec{{-1.0}}, Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
                simulate_rbm(spec, Vec{{-0.5}}, 1.0, 0.1, 1);
            }) == "invalid-argument");
    REQUIRE(testutil::error_code_of([] {
                auto spec = make_rbm_spec(Vec{{-1.0}}, Mat::Constant(1, 1, 2.0), Mat::Zero(1, 1));
                simulate_rbm(spec, Vec{{0.0, 0.0}}, 1.0, 0.1, 1);
            }) == "dimension-mismatch");

    // a sequence struct assembled by hand must still carry a critical base
    HeavyTrafficSequence seq;
    seq.base = NetworkSpec{};
    seq.base.stations.push_back(
        {DistributionSpec::exponential(0.5), DistributionSpec::exponential(1.0)});
    seq.base.routing = Mat::Zero(1, 1);
    seq.base = validate_network(std::move(seq.base));
    seq.kappa0 = Vec{{1.0}};
    seq.kappa = Vec{{1.0}};
    REQUIRE(testutil::error_code_of([&] { rbm_params(seq); }) == "not-critical");
}
