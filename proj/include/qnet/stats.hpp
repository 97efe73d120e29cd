#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "qnet/errors.hpp"

namespace qnet {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
    MeanSe r;
    r.n = xs.size();
    if (r.n == 0) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(r.n);
    if (r.n < 2) return r;
    double v = 0.0;
    for (double x : xs) v += (x - r.mean) * (x - r.mean);
    v /= static_cast<double>(r.n - 1);
    r.se = std::sqrt(v / static_cast<double>(r.n));
    return r;
}

// Standard error for a correlated series via non-overlapping batch means.
inline MeanSe batch_mean_se(const std::vector<double>& xs, std::size_t n_batches = 30) {
    if (xs.size() < 2 * n_batches) return mean_se(xs);
    std::size_t len = xs.size() / n_batches;
    std::vector<double> batches(n_batches, 0.0);
    for (std::size_t b = 0; b < n_batches; ++b) {
        double s = 0.0;
        for (std::size_t i = b * len; i < (b + 1) * len; ++i) s += xs[i];
        batches[b] = s / static_cast<double>(len);
    }
    MeanSe r = mean_se(batches);
    r.n = xs.size();
    return r;
}

// Inverse standard normal CDF (Acklam's rational approximation, |error| < 1.2e-9).
inline double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw Error("invalid-argument", "quantile needs p in (0, 1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1.0 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > phigh) {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

// ==== Kolmogorov-Smirnov distances ==========================================

// sup_x |F_hat(x) - F(x)| for a sorted sample against a reference CDF.
// Valid with ties: at a repeated value the empirical CDF simply jumps higher.
inline double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw Error("invalid-argument", "empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double f = cdf(sample[i]);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - f);
        d = std::max(d, f - static_cast<double>(i) / n);
    }
    return d;
}

inline double ks_distance_exponential(const std::vector<double>& sample, double rate) {
    return ks_distance(sample, [rate](double x) { return x <= 0.0 ? 0.0 : 1.0 - std::exp(-rate * x); });
}

// Variant for a reference that is itself a step function with atoms on the
// sample's lattice (integer-valued data): both CDFs are flat between lattice
// points, so only right-limits at distinct values matter, plus whatever
// reference mass sits strictly below the smallest observation.
inline double ks_distance_lattice(std::vector<double> sample,
                                  const std::function<double(double)>& cdf,
                                  double lattice_gap = 1.0) {
    if (sample.empty()) throw Error("invalid-argument", "empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = cdf(sample.front() - lattice_gap);
    for (std::size_t i = 0; i < sample.size(); ++i) {
        if (i + 1 == sample.size() || sample[i + 1] != sample[i])
            d = std::max(d, std::abs((static_cast<double>(i) + 1.0) / n - cdf(sample[i])));
    }
    return d;
}

// Two-sample version: sup over the merged support of the CDF gap.
inline double ks_distance_two_sample(std::vector<double> xs, std::vector<double> ys) {
    if (xs.empty() || ys.empty()) throw Error("invalid-argument", "empty sample");
    std::sort(xs.begin(), xs.end());
    std::sort(ys.begin(), ys.end());
    const double nx = static_cast<double>(xs.size()), ny = static_cast<double>(ys.size());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    while (i < xs.size() && j < ys.size()) {
        double t = std::min(xs[i], ys[j]);
        while (i < xs.size() && xs[i] <= t) ++i;
        while (j < ys.size() && ys[j] <= t) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
    }
    return d;
}

// Asymptotic one-sample critical value at level alpha: c(alpha) / sqrt(n),
// c(alpha) = sqrt(-ln(alpha / 2) / 2). At 1% this is 1.6276 / sqrt(n).
inline double ks_critical(double alpha, std::size_t n) {
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) / std::sqrt(static_cast<double>(n));
}

inline double ks_critical_two_sample(double alpha, std::size_t n, std::size_t m) {
    double nn = static_cast<double>(n), mm = static_cast<double>(m);
    return std::sqrt(-std::log(alpha / 2.0) / 2.0) * std::sqrt((nn + mm) / (nn * mm));
}

// ==== byte hashing ==========================================================

// FNV-1a over raw bytes; used to compare simulation artifacts for
// bit-identical reproducibility.
inline std::uint64_t fnv1a(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 0xcbf29ce484222325ull) {
    return fnv1a(s.data(), s.size(), h);
}

inline std::uint64_t fnv1a(const std::vector<double>& v, std::uint64_t h = 0xcbf29ce484222325ull) {
    return v.empty() ? h : fnv1a(v.data(), v.size() * sizeof(double), h);
}

}  // namespace qnet
