#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace skewscope {

/// Counter-based generator: every draw is a pure function of
/// (seed, entity, sequence), so the order in which entities are visited
/// never changes the values they receive.
class CounterRng {
public:
    static constexpr std::string_view kId = "splitmix64-counter";

    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    [[nodiscard]] std::uint64_t seed() const { return seed_; }

    [[nodiscard]] std::uint64_t bits(std::uint64_t entity, std::uint64_t seq) const {
        return mix(mix(seed_ ^ (entity * 0x9E3779B97F4A7C15ULL)) + seq * 0xD1B54A32D192ED03ULL);
    }

    /// Uniform in [0, 1).
    [[nodiscard]] double uniform(std::uint64_t entity, std::uint64_t seq) const {
        return static_cast<double>(bits(entity, seq) >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n); n must be > 0.
    [[nodiscard]] std::uint64_t below(std::uint64_t entity, std::uint64_t seq, std::uint64_t n) const {
        return static_cast<std::uint64_t>(uniform(entity, seq) * static_cast<double>(n)) % n;
    }

    /// Exponential with the given mean.
    [[nodiscard]] double exponential(std::uint64_t entity, std::uint64_t seq, double mean) const {
        return -mean * std::log1p(-uniform(entity, seq));
    }

    /// Bernoulli draw.
    [[nodiscard]] bool chance(std::uint64_t entity, std::uint64_t seq, double p) const {
        return uniform(entity, seq) < p;
    }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t seed_;
};

/// Builds an entity key from a purpose tag and up to three small ids.
constexpr std::uint64_t entity_key(std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0,
                                   std::uint64_t c = 0) {
    return (purpose << 56) ^ (a << 36) ^ (b << 18) ^ c;
}

}  // namespace skewscope
