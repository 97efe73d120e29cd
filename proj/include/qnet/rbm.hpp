#pragma once

#include <cmath>
#include <utility>

#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"
#include "qnet/network.hpp"
#include "qnet/rng.hpp"
#include "qnet/samples.hpp"
#include "qnet/skorohod.hpp"

namespace qnet {

// ==== reflected Brownian motion on the orthant ==============================

// Parameters of the diffusion limit: drift beta, covariance gamma, and the
// reflection geometry I - P' inherited from the routing matrix. kappa and mu
// travel along as metadata when the parameters came from a heavy-traffic
// sequence; they are empty for hand-built instances.
struct RbmSpec {
    Vec beta;
    Mat gamma;
    Mat routing;
    bool stable = false;        // all components of (I - P')^{-1} beta negative
    bool product_form = false;  // the covariance satisfies the skew-symmetry identity
    Vec eta;                    // stationary marginal rates when product_form && stable
    Mat skew_residual;          // 2 gamma - [(I-P') D^{-1} L + L D^{-1} (I-P)]
    Vec kappa, mu;              // sequence metadata, possibly empty

    int dim() const { return static_cast<int>(beta.size()); }
};

class NoProductFormError : public Error {
public:
    explicit NoProductFormError(Mat residual)
        : Error("no-product-form",
                "covariance fails the skew-symmetry identity; residual attached"),
          residual_(std::move(residual)) {}
    const Mat& residual() const noexcept { return residual_; }

private:
    Mat residual_;
};

namespace detail {

// skew-symmetry identity right-hand side and the stationary rates it implies
inline Mat skew_rhs(const Mat& P, const Mat& gamma) {
    const auto J = P.rows();
    Vec dinv(J), lam(J);
    for (Eigen::Index j = 0; j < J; ++j) {
        dinv[j] = 1.0 / (1.0 - P(j, j));
        lam[j] = gamma(j, j);
    }
    Mat ip = Mat::Identity(J, J) - P;
    Mat dl = dinv.cwiseProduct(lam).asDiagonal();
    return ip.transpose() * dl + dl * ip;
}

inline void finish_rbm_spec(RbmSpec& spec) {
    const int J = spec.dim();
    if (spec.gamma.rows() != J || spec.routing.rows() != J)
        throw Error("dimension-mismatch", "beta, gamma and routing sizes disagree");
    check_routing(spec.routing);
    if ((spec.gamma - spec.gamma.transpose()).cwiseAbs().maxCoeff() > 1e-12)
        throw Error("invalid-covariance", "covariance must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(spec.gamma);
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw Error("invalid-covariance", "covariance has a genuinely negative eigenvalue");

    Vec b = solve_refined(Mat::Identity(J, J) - spec.routing.transpose(), spec.beta);
    spec.stable = b.maxCoeff() < 0.0;

    Mat rhs = skew_rhs(spec.routing, spec.gamma);
    spec.skew_residual = 2.0 * spec.gamma - rhs;
    double rel = spec.skew_residual.norm() / std::max(2.0 * spec.gamma.norm(), 1e-300);
    spec.product_form = rel <= 1e-9;

    if (spec.product_form && spec.stable) {
        spec.eta = Vec(J);
        for (int j = 0; j < J; ++j)
            spec.eta[j] = -2.0 * (1.0 - spec.routing(j, j)) * b[j] / spec.gamma(j, j);
    } else {
        spec.eta = Vec();
    }
}

}  // namespace detail

inline RbmSpec make_rbm_spec(Vec beta, Mat gamma, Mat routing) {
    RbmSpec spec;
    spec.beta = std::move(beta);
    spec.gamma = std::move(gamma);
    spec.routing = std::move(routing);
    detail::finish_rbm_spec(spec);
    return spec;
}

// Diffusion parameters of a heavy-traffic sequence. The drift is the limit of
// the scaled arrival-rate perturbation; the covariance aggregates routing
// noise and the squared variation coefficients of every primitive stream.
inline RbmSpec rbm_params(const HeavyTrafficSequence& seq) {
    NetworkSpec revalidated;
    if (!seq.base.derived) revalidated = validate_network(seq.base);
    const NetworkSpec& net = seq.base.derived ? seq.base : revalidated;
    const int J = net.dim();
    double crit = (net.lambda - net.mu).cwiseAbs().maxCoeff();
    if (!(crit <= 1e-10 * (1.0 + net.mu.cwiseAbs().maxCoeff())))
        throw Error("not-critical", "sequence base must run at full utilization");

    RbmSpec spec;
    spec.beta = -net.alpha.cwiseProduct(seq.kappa0);
    spec.gamma = Mat::Zero(J, J);
    const Mat& P = net.routing;
    for (int k = 0; k < J; ++k) {
        for (int l = k; l < J; ++l) {
            double g = 0.0;
            for (int j = 0; j < J; ++j) {
                double dkl = k == l ? 1.0 : 0.0;
                double djk = j == k ? 1.0 : 0.0;
                double djl = j == l ? 1.0 : 0.0;
                g += net.mu[j] * (P(j, k) * (dkl - P(j, l)) +
                                  net.scv_service[j] * (P(j, k) - djk) * (P(j, l) - djl));
            }
            if (k == l) g += net.alpha[k] * net.scv_arrival[k];
            spec.gamma(k, l) = g;
            spec.gamma(l, k) = g;
        }
    }
    spec.routing = P;
    spec.kappa = seq.kappa;
    spec.mu = net.mu;
    detail::finish_rbm_spec(spec);
    return spec;
}

// Stationary marginal rates: each component of a product-form reflected
// diffusion is exponential with rate eta_j. Computed from the parameters
// alone; when sequence metadata is present the equivalent utilization-gap
// form is used and the two must agree.
inline Vec product_form_rates(const RbmSpec& spec) {
    if (!spec.stable) throw Error("unstable", "no stationary law: drift does not drain");
    if (!spec.product_form) throw NoProductFormError(spec.skew_residual);
    if (spec.kappa.size() > 0 && spec.mu.size() > 0) {
        Vec eta(spec.dim());
        for (int j = 0; j < spec.dim(); ++j)
            eta[j] = 2.0 * (1.0 - spec.routing(j, j)) * spec.mu[j] * spec.kappa[j] /
                     spec.gamma(j, j);
        return eta;
    }
    return spec.eta;
}

// ==== path simulation =======================================================

// Discretized Brownian path started at z0, pushed through the same grid
// reflection used everywhere else. Increments are N(beta h, gamma h) via a
// symmetric factor of gamma; component j of the driving noise draws from its
// own substream.
inline ReflectionSolution simulate_rbm(const RbmSpec& spec, const Vec& z0, double horizon,
                                       double step, std::uint64_t seed) {
    const int J = spec.dim();
    if (z0.size() != J) throw Error("dimension-mismatch", "start point has wrong length");
    if (z0.minCoeff() < 0.0) throw Error("invalid-argument", "start point must be nonnegative");
    double min_eig = 0.0;
    Mat factor = psd_sqrt_factor(spec.gamma, &min_eig);
    if (min_eig < -1e-10)
        throw Error("invalid-covariance", "covariance has a genuinely negative eigenvalue");

    Path w;
    w.t = make_grid(horizon, step);
    w.interp = Interp::piecewise_linear;
    const auto n = static_cast<Eigen::Index>(w.t.size());
    w.values.resize(n, J);
    w.values.row(0) = z0.transpose();

    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j)
        streams.emplace_back(derive_seed(seed, StreamKind::diffusion, static_cast<std::uint64_t>(j)));

    Vec xi(J);
    for (Eigen::Index i = 1; i < n; ++i) {
        double h = w.t[static_cast<std::size_t>(i)] - w.t[static_cast<std::size_t>(i - 1)];
        for (int j = 0; j < J; ++j) xi[j] = streams[static_cast<std::size_t>(j)].normal();
        w.values.row(i) = w.values.row(i - 1) +
                          (spec.beta * h + std::sqrt(h) * (factor * xi)).transpose();
    }
    return reflect(w, spec.routing);
}

// ==== stationary sampling ===================================================

namespace detail {

// One exact transition of the scalar reflected diffusion over dt, using the
// running-maximum decomposition: with G the Gaussian displacement and M the
// max of the bridge from 0, the new state is max(z + G, M).
inline double rbm1d_exact_step(double z, double beta, double gamma, double dt,
                               RandomStream& rs) {
    double g = beta * dt + std::sqrt(gamma * dt) * rs.normal();
    double lu = std::log(rs.uniform());
    double m = 0.5 * (g + std::sqrt(g * g - 2.0 * gamma * dt * lu));
    return std::max(z + g, m);
}

}  // namespace detail

inline double rbm_relaxation_scale(const RbmSpec& spec) {
    Vec b = solve_refined(Mat::Identity(spec.dim(), spec.dim()) - spec.routing.transpose(),
                          spec.beta);
    double scale = 0.0;
    for (int j = 0; j < spec.dim(); ++j)
        scale = std::max(scale, spec.gamma(j, j) / (b[j] * b[j]));
    return scale;
}

inline double rbm_default_step(const RbmSpec& spec) {
    Vec b = solve_refined(Mat::Identity(spec.dim(), spec.dim()) - spec.routing.transpose(),
                          spec.beta);
    return 0.01 / b.cwiseAbs().minCoeff();
}

// Spaced stationary draws. The scalar case uses exact transitions between
// sample times, so its marginals carry no discretization bias and the step
// argument is irrelevant. Higher dimensions advance chunk by chunk on the
// step grid, restarting the reflection from the current state; the restart is
// exact, only the grid approximation of the driving path remains.
inline StationarySampleSet rbm_stationary_sample(const RbmSpec& spec, double warmup,
                                                 long n_samples, double spacing, double step,
                                                 std::uint64_t seed) {
    if (!spec.stable) throw Error("refuse-unstable", "drift does not drain the orthant");
    if (n_samples < 1 || spacing <= 0.0 || warmup < 0.0 || step <= 0.0)
        throw Error("invalid-argument", "need n_samples >= 1, spacing > 0, warmup >= 0, step > 0");
    const int J = spec.dim();

    StationarySampleSet out;
    out.kind = "queue-length";
    out.warmup = warmup;
    out.spacing = spacing;
    out.replications = 1;
    out.seed = seed;
    out.model_digest = 0;
    out.samples.resize(n_samples, J);
    out.rep_of_row.assign(static_cast<std::size_t>(n_samples), 0);

    if (J == 1) {
        RandomStream rs(derive_seed(seed, StreamKind::diffusion, 0));
        double beta = spec.beta[0], gamma = spec.gamma(0, 0);
        double z = 0.0;
        if (warmup > 0.0) z = detail::rbm1d_exact_step(z, beta, gamma, warmup, rs);
        out.samples(0, 0) = z;
        for (long k = 1; k < n_samples; ++k) {
            z = detail::rbm1d_exact_step(z, beta, gamma, spacing, rs);
            out.samples(k, 0) = z;
        }
        return out;
    }

    double min_eig = 0.0;
    Mat factor = psd_sqrt_factor(spec.gamma, &min_eig);
    if (min_eig < -1e-10)
        throw Error("invalid-covariance", "covariance has a genuinely negative eigenvalue");

    std::vector<RandomStream> streams;
    streams.reserve(static_cast<std::size_t>(J));
    for (int j = 0; j < J; ++j)
        streams.emplace_back(derive_seed(seed, StreamKind::diffusion, static_cast<std::uint64_t>(j)));

    Vec z = Vec::Zero(J);
    Vec xi(J);
    const double chunk_max = 4000.0 * step;
    auto evolve = [&](double span) {
        double left = span;
        while (left > 1e-12 * (1.0 + span)) {
            double len = std::min(left, chunk_max);
            Path w;
            w.t = make_grid(len, step);
            w.interp = Interp::piecewise_linear;
            const auto n = static_cast<Eigen::Index>(w.t.size());
            w.values.resize(n, J);
            w.values.row(0) = z.transpose();
            for (Eigen::Index i = 1; i < n; ++i) {
                double h = w.t[static_cast<std::size_t>(i)] - w.t[static_cast<std::size_t>(i - 1)];
                for (int j = 0; j < J; ++j) xi[j] = streams[static_cast<std::size_t>(j)].normal();
                w.values.row(i) = w.values.row(i - 1) +
                                  (spec.beta * h + std::sqrt(h) * (factor * xi)).transpose();
            }
            auto sol = reflect(w, spec.routing);
            // the stopping rule can leave coordinates a hair below zero
            z = sol.q.values.row(n - 1).transpose().cwiseMax(0.0);
            left -= len;
        }
    };

    if (warmup > 0.0) evolve(warmup);
    out.samples.row(0) = z.transpose();
    for (long k = 1; k < n_samples; ++k) {
        evolve(spacing);
        out.samples.row(k) = z.transpose();
    }
    return out;
}

}  // namespace qnet
