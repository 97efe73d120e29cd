#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace qnet {

// ==== seed derivation ========================================================
//
// Every random quantity draws from its own substream, and a substream seed is
// a pure function of the master seed and a (kind, a, b) label:
//
//     s = mix(master ^ C0); s = mix(s ^ (kind + C1)); s = mix(s ^ (a + C2));
//     s = mix(s ^ (b + C3))
//
// so a given label maps to the same stream no matter which other streams are
// in use, which thread asks first, or how a larger run is chunked. Labels:
//
//     (arrival,    station)           interarrival times
//     (service,    station)           service durations
//     (routing,    station)           routing decisions
//     (diffusion,  component)         Brownian increments
//     (experiment, n, replication)    per-work-item master seeds
//     (probe,      index, rep)        drift / functional probe transitions
//     (pilot,      index, rep)        auxiliary calibration runs

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

enum class StreamKind : std::uint64_t {
    arrival = 1,
    service = 2,
    routing = 3,
    diffusion = 4,
    experiment = 5,
    probe = 6,
    pilot = 7,
    replication = 8,
};

inline constexpr std::uint64_t derive_seed(std::uint64_t master, StreamKind kind,
                                           std::uint64_t a = 0, std::uint64_t b = 0) {
    std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc909ull);
    s = splitmix64(s ^ (static_cast<std::uint64_t>(kind) + 0x9e3779b97f4a7c15ull));
    s = splitmix64(s ^ (a + 0x3c6ef372fe94f82bull));
    s = splitmix64(s ^ (b + 0xa54ff53a5f1d36f1ull));
    return s;
}

// One substream. mt19937_64 output is fully specified by the standard, so a
// fixed seed reproduces bit-identical draws on any platform. Uniforms map the
// top 53 bits into (0, 1]; the closed right end keeps log(u) finite.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(uniform()) / rate; }

    // Box-Muller, both branches cached, no rejection: draw count per call is
    // deterministic, which matters for substream reproducibility.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double r = std::sqrt(-2.0 * std::log(uniform()));
        double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace qnet
