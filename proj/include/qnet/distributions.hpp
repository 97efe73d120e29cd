#pragma once

#include <cmath>
#include <string>

#include "qnet/errors.hpp"
#include "qnet/rng.hpp"

namespace qnet {

enum class DistFamily { exponential, erlang, hyperexp2, deterministic, uniform };

inline const char* family_name(DistFamily f) {
    switch (f) {
        case DistFamily::exponential: return "exponential";
        case DistFamily::erlang: return "erlang";
        case DistFamily::hyperexp2: return "hyperexp2";
        case DistFamily::deterministic: return "deterministic";
        case DistFamily::uniform: return "uniform";
    }
    return "?";
}

// A nonnegative sampling distribution with closed-form first two moments.
// Parameter slots (a, b, c) by family:
//
//     exponential    a = rate
//     erlang         a = shape (integral, >= 1), b = rate
//     hyperexp2      a = weight on the first branch, b = rate1, c = rate2
//     deterministic  a = value
//     uniform        a = low, b = high
//
// Use the named constructors; raw slot access is for serialization only.
struct DistributionSpec {
    DistFamily family = DistFamily::exponential;
    double a = 1.0;
    double b = 0.0;
    double c = 0.0;

    static DistributionSpec exponential(double rate) {
        return {DistFamily::exponential, rate, 0.0, 0.0};
    }
    static DistributionSpec erlang(int shape, double rate) {
        return {DistFamily::erlang, static_cast<double>(shape), rate, 0.0};
    }
    static DistributionSpec hyperexp2(double p, double rate1, double rate2) {
        return {DistFamily::hyperexp2, p, rate1, rate2};
    }
    static DistributionSpec deterministic(double value) {
        return {DistFamily::deterministic, value, 0.0, 0.0};
    }
    static DistributionSpec uniform(double low, double high) {
        return {DistFamily::uniform, low, high, 0.0};
    }

    void validate() const {
        switch (family) {
            case DistFamily::exponential:
                if (!(a > 0.0)) fail("rate must be positive");
                break;
            case DistFamily::erlang:
                if (!(a >= 1.0) || a != std::floor(a)) fail("shape must be an integer >= 1");
                if (!(b > 0.0)) fail("rate must be positive");
                break;
            case DistFamily::hyperexp2:
                if (!(a >= 0.0 && a <= 1.0)) fail("weight must lie in [0, 1]");
                if (!(b > 0.0) || !(c > 0.0)) fail("both rates must be positive");
                break;
            case DistFamily::deterministic:
                if (!(a > 0.0)) fail("value must be positive");
                break;
            case DistFamily::uniform:
                if (!(a >= 0.0) || !(b > a)) fail("need 0 <= low < high");
                break;
        }
        if (!(mean() > 0.0)) fail("mean must be positive");
    }

    double mean() const {
        switch (family) {
            case DistFamily::exponential: return 1.0 / a;
            case DistFamily::erlang: return a / b;
            case DistFamily::hyperexp2: return a / b + (1.0 - a) / c;
            case DistFamily::deterministic: return a;
            case DistFamily::uniform: return 0.5 * (a + b);
        }
        return 0.0;
    }

    double variance() const {
        switch (family) {
            case DistFamily::exponential: return 1.0 / (a * a);
            case DistFamily::erlang: return a / (b * b);
            case DistFamily::hyperexp2: {
                double m = mean();
                double m2 = 2.0 * a / (b * b) + 2.0 * (1.0 - a) / (c * c);
                return m2 - m * m;
            }
            case DistFamily::deterministic: return 0.0;
            case DistFamily::uniform: {
                double w = b - a;
                return w * w / 12.0;
            }
        }
        return 0.0;
    }

    // Squared coefficient of variation.
    double scv() const {
        double m = mean();
        return variance() / (m * m);
    }

    // Draw count per sample is fixed per family (erlang: shape draws,
    // hyperexp2: two, deterministic: zero), keeping substreams reproducible.
    double sample(RandomStream& rs) const {
        switch (family) {
            case DistFamily::exponential:
                return -std::log(rs.uniform()) / a;
            case DistFamily::erlang: {
                double s = 0.0;
                for (int i = 0; i < static_cast<int>(a); ++i) s += -std::log(rs.uniform());
                return s / b;
            }
            case DistFamily::hyperexp2: {
                double u = rs.uniform();
                double e = -std::log(rs.uniform());
                return u <= a ? e / b : e / c;
            }
            case DistFamily::deterministic:
                return a;
            case DistFamily::uniform:
                return a + (b - a) * rs.uniform();
        }
        return 0.0;
    }

    // Stretch time by the given factor (> 0): mean scales by it, scv is
    // unchanged. Used to thin arrival streams along a heavy-traffic sequence.
    DistributionSpec scaled(double time_factor) const {
        DistributionSpec d = *this;
        switch (family) {
            case DistFamily::exponential: d.a /= time_factor; break;
            case DistFamily::erlang: d.b /= time_factor; break;
            case DistFamily::hyperexp2:
                d.b /= time_factor;
                d.c /= time_factor;
                break;
            case DistFamily::deterministic: d.a *= time_factor; break;
            case DistFamily::uniform:
                d.a *= time_factor;
                d.b *= time_factor;
                break;
        }
        return d;
    }

    std::string to_string() const {
        std::string s = family_name(family);
        s += "(" + std::to_string(a);
        if (family == DistFamily::erlang || family == DistFamily::hyperexp2 ||
            family == DistFamily::uniform)
            s += ", " + std::to_string(b);
        if (family == DistFamily::hyperexp2) s += ", " + std::to_string(c);
        return s + ")";
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw Error("invalid-distribution", std::string(family_name(family)) + ": " + why);
    }
};

}  // namespace qnet
