#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace chromo {

namespace detail {

// splitmix64 finalizer, used to turn (seed, purpose) into a well-mixed stream seed.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace detail

// Deterministic RNG. All pipeline randomness flows from one root seed;
// named child streams keep the stages decoupled so that, e.g., changing the
// number of training epochs does not disturb data generation.
//
// Normal deviates use Box-Muller on top of mt19937_64 rather than
// std::normal_distribution, whose output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : seed_(seed), eng_(detail::mix64(seed)) {}

    static uint64_t derive(uint64_t root, std::string_view purpose) {
        return detail::mix64(root ^ detail::fnv1a(purpose));
    }

    // Independent child stream named by purpose.
    Rng child(std::string_view purpose) const { return Rng(derive(seed_, purpose)); }
    Rng child(std::string_view purpose, uint64_t index) const {
        return Rng(detail::mix64(derive(seed_, purpose) + 0x632be59bd9b4e019ull * (index + 1)));
    }

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Inclusive integer range.
    int64_t randint(int64_t lo, int64_t hi) {
        uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(eng_() % span);
    }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Fisher-Yates; deterministic given the stream state.
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(randint(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t seed_;
    std::mt19937_64 eng_;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace chromo
