#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "qnet/errors.hpp"
#include "qnet/linalg.hpp"

namespace qnet {

enum class Interp { piecewise_constant, piecewise_linear };

// A vector-valued function of time sampled on a strictly increasing grid that
// starts at zero. values is (grid points) x (components); column j is the
// full time series of component j, so per-component sweeps touch contiguous
// memory. The interp tag says how to read the path between grid points:
// right-continuous steps or straight segments.
struct Path {
    std::vector<double> t;
    Mat values;
    Interp interp = Interp::piecewise_constant;

    int dim() const { return static_cast<int>(values.cols()); }
    int size() const { return static_cast<int>(t.size()); }

    void validate() const {
        if (t.empty()) throw Error("invalid-argument", "path has no grid points");
        if (t.front() != 0.0) throw Error("invalid-argument", "path grid must start at 0");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1]))
                throw Error("invalid-argument", "path grid must be strictly increasing");
        if (values.rows() != static_cast<Eigen::Index>(t.size()))
            throw Error("dimension-mismatch", "grid and value rows disagree");
        if (values.cols() < 1) throw Error("dimension-mismatch", "path has no components");
    }

    // Value of component j at an arbitrary time within the grid span.
    double eval(double time, int j) const {
        if (time <= t.front()) return values(0, j);
        if (time >= t.back()) return values(size() - 1, j);
        auto it = std::upper_bound(t.begin(), t.end(), time);
        auto hi = static_cast<Eigen::Index>(it - t.begin());
        if (interp == Interp::piecewise_constant) return values(hi - 1, j);
        double t0 = t[hi - 1], t1 = t[hi];
        double f = (time - t0) / (t1 - t0);
        return (1.0 - f) * values(hi - 1, j) + f * values(hi, j);
    }
};

inline std::vector<double> make_grid(double horizon, double step) {
    if (!(horizon > 0.0) || !(step > 0.0))
        throw Error("invalid-argument", "horizon and step must be positive");
    auto n = static_cast<std::size_t>(std::ceil(horizon / step - 1e-9));
    std::vector<double> t(n + 1);
    for (std::size_t i = 0; i <= n; ++i) t[i] = std::min(horizon, static_cast<double>(i) * step);
    t.back() = horizon;
    return t;
}

// Plain text: a tagged header line, then one row per grid point.
inline void export_path(std::ostream& os, const Path& p) {
    os << "# path interp=" << (p.interp == Interp::piecewise_constant ? "constant" : "linear")
       << " dim=" << p.dim() << " points=" << p.size() << "\n";
    os.precision(17);
    for (int i = 0; i < p.size(); ++i) {
        os << p.t[i];
        for (int j = 0; j < p.dim(); ++j) os << '\t' << p.values(i, j);
        os << '\n';
    }
}

inline Path import_path(std::istream& is) {
    std::string tag, interp_kv, dim_kv, pts_kv;
    is >> tag >> tag >> interp_kv >> dim_kv >> pts_kv;
    auto value_of = [](const std::string& kv) { return kv.substr(kv.find('=') + 1); };
    Path p;
    p.interp = value_of(interp_kv) == "constant" ? Interp::piecewise_constant
                                                 : Interp::piecewise_linear;
    int dim = std::stoi(value_of(dim_kv));
    int pts = std::stoi(value_of(pts_kv));
    if (dim < 1 || pts < 1) throw Error("invalid-argument", "malformed path header");
    p.t.resize(pts);
    p.values.resize(pts, dim);
    for (int i = 0; i < pts; ++i) {
        is >> p.t[i];
        for (int j = 0; j < dim; ++j) is >> p.values(i, j);
    }
    if (!is) throw Error("invalid-argument", "truncated path data");
    p.validate();
    return p;
}

}  // namespace qnet
