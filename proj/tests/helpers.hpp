#pragma once

// Shared helpers for the unit suite: error-code capture and random model
// generators used by several test files.

#include <string>

#include "qnet/errors.hpp"
#include "qnet/network.hpp"
#include "qnet/path.hpp"
#include "qnet/rng.hpp"

namespace testutil {

template <class F>
std::string error_code_of(F&& f) {
    try {
        f();
    } catch (const qnet::Error& e) {
        return e.code();
    }
    return "<no error>";
}

inline qnet::Mat random_substochastic(int J, double max_row_sum, qnet::RandomStream& rs) {
    qnet::Mat P(J, J);
    for (int i = 0; i < J; ++i) {
        double row = 0.0;
        for (int j = 0; j < J; ++j) {
            P(i, j) = rs.uniform();
            row += P(i, j);
        }
        double target = max_row_sum * rs.uniform();
        for (int j = 0; j < J; ++j) P(i, j) *= target / row;
    }
    return P;
}

// Stable by construction: utilizations are drawn in [lo, hi] and service
// rates are backed out from the resulting flows.
inline qnet::NetworkSpec random_stable_network(int max_stations, qnet::RandomStream& rs,
                                               double rho_lo = 0.3, double rho_hi = 0.9) {
    using namespace qnet;
    int J = 1 + static_cast<int>(rs.uniform() * max_stations) % max_stations;
    Mat P = random_substochastic(J, 0.85, rs);
    Vec alpha = Vec::Zero(J);
    for (int j = 0; j < J; ++j)
        if (j == 0 || rs.uniform() < 0.7) alpha[j] = 0.2 + rs.uniform();
    Vec lambda = solve_traffic(alpha, P);

    NetworkSpec net;
    net.routing = P;
    for (int j = 0; j < J; ++j) {
        double rho = rho_lo + (rho_hi - rho_lo) * rs.uniform();
        double mu = lambda[j] / rho;
        StationSpec st;
        if (alpha[j] > 0.0) st.arrival = DistributionSpec::exponential(alpha[j]);
        st.service = rs.uniform() < 0.3 ? DistributionSpec::erlang(2, 2.0 * mu)
                                        : DistributionSpec::exponential(mu);
        net.stations.push_back(st);
    }
    return validate_network(std::move(net));
}

// Step path: x(0) uniform in [0, start_max], then n random jumps in [-1, 1].
inline qnet::Path random_step_path(int n_jumps, double start_max, qnet::RandomStream& rs,
                                   int dim = 1) {
    qnet::Path x;
    x.interp = qnet::Interp::piecewise_constant;
    x.t.resize(n_jumps + 1);
    x.values.resize(n_jumps + 1, dim);
    double t = 0.0;
    for (int i = 0; i <= n_jumps; ++i) {
        x.t[i] = t;
        t += 0.1 + rs.uniform();
        for (int j = 0; j < dim; ++j)
            x.values(i, j) = i == 0 ? start_max * rs.uniform()
                                    : x.values(i - 1, j) + 2.0 * rs.uniform() - 1.0;
    }
    return x;
}

}  // namespace testutil
