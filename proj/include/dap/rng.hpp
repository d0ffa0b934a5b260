#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dap {

// Deterministic PRNG based on the splitmix64 finalizer. The algorithm is
// fixed so that a reimplementation in another language can reproduce the
// exact value stream from the same seed.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : seed_(seed), state_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller; consumes exactly two draws per call.
    double normal() {
        double u1 = 1.0 - next_double(); // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    // Uniform integer in [0, n) via Lemire multiply-shift.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
    }

    // Fisher-Yates, consumes size()-1 draws.
    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    // Child generator with a decorrelated seed; used to give independent
    // per-session / per-driver streams that stay reproducible from the
    // master seed.
    SeededRng derive(std::uint64_t stream) const {
        SeededRng mixer(seed_ ^ (0xA24BAED4963EE407ULL + stream * 0x9E3779B97F4A7C15ULL));
        return SeededRng(mixer.next_u64());
    }

private:
    std::uint64_t seed_;
    std::uint64_t state_;
};

} // namespace dap
