#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "ltsmdiff/mat.hpp"

namespace ltsm {

/// Deterministic random source. Gaussian draws use Box-Muller on top of
/// mt19937_64 (no spare caching) so the full state is the engine state and
/// sequences reproduce bitwise across runs of the same binary.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Independent stream keyed by (seed, stream). Used so e.g. ensemble
    /// members draw order-independent noise.
    static Rng derive(std::uint64_t seed, std::uint64_t stream) {
        return Rng(mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1)));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Standard normal draw.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    std::uint64_t next_u64() { return engine_(); }

    Mat normal_mat(int rows, int cols, double stddev = 1.0) {
        Mat m(rows, cols);
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = stddev * normal();
        return m;
    }

    std::string state() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

private:
    static constexpr double kPi = 3.14159265358979323846;

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::mt19937_64 engine_;
};

}  // namespace ltsm
