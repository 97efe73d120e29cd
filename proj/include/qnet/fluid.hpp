#pragma once

#include <cmath>
#include <optional>

#include "qnet/network.hpp"
#include "qnet/path.hpp"
#include "qnet/skorohod.hpp"

namespace qnet {

// Deterministic fluid picture of a network: content starts at z, drains along
// the constant free drift alpha - (I - P') mu, and is kept nonnegative by the
// same reflection map the stochastic model uses.
struct FluidSolution {
    Vec z;
    Vec drift;
    Path q;
    Path y;
    std::optional<double> drain_time;  // first grid time after which sup_j q_j stays <= tol
    double step = 0.0;
    double tol = 0.0;
};

// Worst-case emptying time of the fluid content: total work w'z drains at
// rate at least min_j mu_j (1 - rho_j) while anything is left.
inline double drain_time_bound(const NetworkSpec& net, const Vec& z) {
    if (!net.derived) throw Error("invalid-argument", "network must be validated first");
    if (z.size() != net.dim()) throw Error("dimension-mismatch", "state has wrong length");
    if (z.minCoeff() < 0.0) throw Error("invalid-argument", "state must be nonnegative");
    double slack = (net.mu.array() * (1.0 - net.rho.array())).minCoeff();
    if (!(slack > 0.0))
        throw Error("unstable-no-bound", "no positive service slack at the bottleneck");
    return net.weights.dot(z) / slack;
}

inline FluidSolution fluid_solve(const NetworkSpec& net, const Vec& z, double horizon = -1.0,
                                 double step = -1.0) {
    if (!net.derived) throw Error("invalid-argument", "network must be validated first");
    if (z.size() != net.dim()) throw Error("dimension-mismatch", "state has wrong length");
    if (z.minCoeff() < 0.0) throw Error("invalid-argument", "state must be nonnegative");

    const int J = net.dim();
    FluidSolution sol;
    sol.z = z;
    sol.drift = net.alpha - (Mat::Identity(J, J) - net.routing.transpose()) * net.mu;

    if (step <= 0.0 || horizon <= 0.0) {
        // defaults need a finite drain bound, i.e. a stable network
        double bound = drain_time_bound(net, z);
        if (step <= 0.0) step = std::max(0.01 * bound, 1e-4);
        if (horizon <= 0.0) horizon = std::max(1.25 * bound, 8.0 * step);
    }

    Path x;
    x.t = make_grid(horizon, step);
    x.interp = Interp::piecewise_linear;
    x.values.resize(x.size(), J);
    for (int i = 0; i < x.size(); ++i) x.values.row(i) = (z + x.t[i] * sol.drift).transpose();

    auto refl = reflect(x, net.routing);
    sol.q = std::move(refl.q);
    sol.y = std::move(refl.y);
    sol.step = step;
    sol.tol = 1e-8 * (1.0 + z.cwiseAbs().maxCoeff());

    // last grid index where anything exceeds the drain tolerance
    int last_busy = -1;
    for (int i = sol.q.size() - 1; i >= 0; --i) {
        if (sol.q.values.row(i).maxCoeff() > sol.tol) {
            last_busy = i;
            break;
        }
    }
    if (last_busy < 0)
        sol.drain_time = 0.0;
    else if (last_busy + 1 < sol.q.size())
        sol.drain_time = sol.q.t[last_busy + 1];
    else
        sol.drain_time = std::nullopt;  // still draining at the horizon
    return sol;
}

}  // namespace qnet
