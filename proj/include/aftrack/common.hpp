#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace aftrack {

// Double throughout: the finite-difference gradient checks need the headroom,
// and desk-scale maps are small enough that the memory cost does not matter.
using Real = double;

inline void check(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

/// Deterministic random source. mt19937_64 has a standard-mandated bit
/// sequence, and all value mappings are hand-rolled so a seed reproduces
/// the same stream on any platform / standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform in [0, 1).
    Real uniform() { return static_cast<Real>(eng_() >> 11) * 0x1.0p-53; }

    Real uniform(Real lo, Real hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    int uniform_int(int n) {
        check(n > 0, "Rng::uniform_int: n must be positive");
        return static_cast<int>(uniform() * n) % n;
    }

    /// Standard normal via Box-Muller (cached pair for determinism).
    Real normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        Real u1 = uniform();
        Real u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const Real r = std::sqrt(-2.0 * std::log(u1));
        const Real a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    Real normal(Real mean, Real stddev) { return mean + stddev * normal(); }

    /// Independent substream; `tag` decorrelates streams forked from one seed.
    Rng fork(std::uint64_t tag) {
        std::uint64_t z = eng_() + 0x9e3779b97f4a7c15ull * (tag + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return Rng(z ^ (z >> 31));
    }

private:
    std::mt19937_64 eng_;
    Real spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace aftrack
