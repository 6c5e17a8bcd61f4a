#ifndef DRUGREC_RNG_HPP
#define DRUGREC_RNG_HPP

#include <cstdint>
#include <string_view>
#include <vector>

namespace drugrec {

/// Splittable deterministic generator (splitmix64 core).
///
/// Every stochastic component takes an explicit Rng so that a single
/// top-level seed fully determines a run. Named splits derive independent
/// sub-streams ("data", "init", "shuffle", "dropout", "bootstrap", ...)
/// without advancing the parent, so components stay independently
/// reproducible. All derived quantities avoid std::*_distribution, whose
/// output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

    /// Child stream keyed by name; does not advance this generator.
    Rng split(std::string_view stream) const {
        return Rng(mix(state_ ^ fnv1a(stream)));
    }

    /// Child stream keyed by index (e.g. per-epoch, per-round).
    Rng split(std::uint64_t salt) const {
        return Rng(mix(state_ ^ mix(salt + 0x1D8AF066u)));
    }

    std::uint64_t next_u64() {
        state_ += kGolden;
        return mix(state_);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    /// Uniform index in [0, n). n must be nonzero.
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(next_u64() % n);
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30;
        z *= 0xBF58476D1CE4E5B9ull;
        z ^= z >> 27;
        z *= 0x94D049BB133111EBull;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t fnv1a(std::string_view s) {
        std::uint64_t h = 0xCBF29CE484222325ull;
        for (char c : s) {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001B3ull;
        }
        return h;
    }

    std::uint64_t state_;
};

} // namespace drugrec

#endif
