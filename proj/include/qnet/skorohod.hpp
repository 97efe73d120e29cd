#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"
#include "qnet/network.hpp"
#include "qnet/path.hpp"

namespace qnet {

// ==== oblique reflection on a grid ==========================================
//
// Given a free path x with x(0) >= 0 and a routing matrix P, find (q, y) with
//
//     q(t) = x(t) + (I - P') y(t) >= 0,
//     y nondecreasing, y(0) = 0, and y_j flat whenever q_j > 0.
//
// The solver iterates the fixed point
//
//     y_j(t_i)  <-  max(0, max_{s <= t_i} [ (P' y)_j(s) - x_j(s) ])
//
// from y = 0. Iterates increase componentwise toward the solution and the
// contraction rate is the largest routing row sum. All quantities live on the
// input grid; for step and piecewise-linear inputs the running maxima at grid
// points are exact, since segment extrema sit at the knots.

struct ReflectionSolution {
    Path q;             // reflected path, same grid and interp tag as the input
    Path y;             // cumulative pushing at each boundary
    int iterations = 0;
    double residual = 0.0;  // sup-norm change of y in the last sweep
    bool converged = true;
};

namespace detail {

// clamped running maximum down each column of (py - x)
inline void pushing_sweep(const Mat& x, const Mat& py, Mat& out) {
    const auto n = x.rows();
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double acc = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < n; ++i) {
            acc = std::max(acc, py(i, j) - x(i, j));
            out(i, j) = std::max(acc, 0.0);
        }
    }
}

inline int iteration_cap(const Mat& P, double tol) {
    double sigma = (P * Vec::Ones(P.rows())).maxCoeff();
    sigma = std::clamp(sigma, 0.01, 0.99);
    double per_decade = std::log(tol) / std::log(sigma);
    return std::max(100, 10 * static_cast<int>(std::ceil(per_decade)));
}

}  // namespace detail

inline ReflectionSolution reflect(
    const Path& x, const Mat& P, double tol = 1e-10,
    const std::function<void(const Mat&)>& on_iterate = nullptr) {
    x.validate();
    check_routing(P);
    if (P.rows() != x.dim())
        throw Error("dimension-mismatch", "path components and routing matrix disagree");
    if (x.values.row(0).minCoeff() < 0.0)
        throw Error("invalid-argument", "free path must start nonnegative");
    if (!(tol > 0.0)) throw Error("invalid-argument", "tolerance must be positive");

    const auto n = x.values.rows();
    const auto J = x.values.cols();
    // Stopping at a y-change of delta leaves q no lower than -delta times the
    // largest column sum of P, so shrink the internal target to make the
    // advertised floor q >= -tol hold exactly.
    const double col_gain = std::max(1.0, P.colwise().sum().maxCoeff());
    const double stop_tol = tol / col_gain;
    const int cap = detail::iteration_cap(P, stop_tol);

    Mat y = Mat::Zero(n, J), py(n, J), next(n, J);
    ReflectionSolution sol;
    sol.converged = false;
    while (sol.iterations < cap) {
        py.noalias() = y * P;
        detail::pushing_sweep(x.values, py, next);
        sol.residual = (next - y).cwiseAbs().maxCoeff();
        y.swap(next);
        ++sol.iterations;
        if (on_iterate) on_iterate(y);
        if (sol.residual <= stop_tol) {
            sol.converged = true;
            break;
        }
    }

    sol.y.t = x.t;
    sol.y.interp = x.interp;
    sol.y.values = std::move(y);
    sol.q.t = x.t;
    sol.q.interp = x.interp;
    sol.q.values = x.values + sol.y.values * (Mat::Identity(J, J) - P);
    return sol;
}

// Scalar case in closed form: y(t) = max(0, max_{s <= t} -x(s)).
inline ReflectionSolution reflect_1d(const Path& x) {
    x.validate();
    if (x.dim() != 1) throw Error("dimension-mismatch", "one-component path required");
    if (x.values(0, 0) < 0.0)
        throw Error("invalid-argument", "free path must start nonnegative");
    const auto n = x.values.rows();
    ReflectionSolution sol;
    sol.y.t = x.t;
    sol.y.interp = x.interp;
    sol.y.values.resize(n, 1);
    double acc = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
        acc = std::max(acc, -x.values(i, 0));
        sol.y.values(i, 0) = std::max(acc, 0.0);
    }
    sol.q.t = x.t;
    sol.q.interp = x.interp;
    sol.q.values = x.values + sol.y.values;
    sol.iterations = 0;
    sol.residual = 0.0;
    return sol;
}

// Diagnostics for tests and downstream sanity checks.
struct ReflectionCheck {
    double min_q = 0.0;             // most negative reflected value
    double min_y_increment = 0.0;   // most negative pushing increment
    double y_at_zero = 0.0;         // largest |y(0)|
    double identity_gap = 0.0;      // sup |q - x - (I - P') y|
    double complementarity = 0.0;   // largest sum_i q_j(t_i) dy_j(t_i)
    double max_y_increment = 0.0;
};

inline ReflectionCheck check_reflection(const Path& x, const Mat& P,
                                        const ReflectionSolution& sol) {
    const auto n = x.values.rows();
    const auto J = x.values.cols();
    ReflectionCheck c;
    c.min_q = sol.q.values.minCoeff();
    c.y_at_zero = sol.y.values.row(0).cwiseAbs().maxCoeff();
    Mat gap = sol.q.values - x.values - sol.y.values * (Mat::Identity(J, J) - P);
    c.identity_gap = gap.cwiseAbs().maxCoeff();
    c.min_y_increment = 0.0;
    for (Eigen::Index j = 0; j < J; ++j) {
        double comp = 0.0;
        for (Eigen::Index i = 1; i < n; ++i) {
            double dy = sol.y.values(i, j) - sol.y.values(i - 1, j);
            c.min_y_increment = std::min(c.min_y_increment, dy);
            c.max_y_increment = std::max(c.max_y_increment, dy);
            comp += sol.q.values(i, j) * dy;
        }
        c.complementarity = std::max(c.complementarity, comp);
    }
    return c;
}

}  // namespace qnet
