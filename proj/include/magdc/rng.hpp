#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace magdc {

std::uint64_t splitmix64(std::uint64_t x);

// Sub-seed for an independent stream: splitmix64(seed ^ splitmix64(stream + 1)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

// Stream identifiers used with derive_seed.
namespace streams {
inline constexpr std::uint64_t phantom = 1;
inline constexpr std::uint64_t split = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t shuffle = 4;  // + epoch index
}  // namespace streams

// mt19937_64 engine with distributions written out here, because the standard
// distributions are implementation-defined and would break cross-platform determinism.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }
    // [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Unbiased integer in [0, n) by rejection.
    std::uint64_t below(std::uint64_t n);
    // Box-Muller, no cached second variate.
    double normal();

    template <typename T>
    void shuffle(std::span<T> values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace magdc
