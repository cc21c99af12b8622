#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace leprompter {

/// Counter-based generator: output i is splitmix64(seed + (i+1)·γ).
/// Every draw is defined by integer arithmetic only, so streams are
/// identical across platforms and standard libraries.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t next_u64();
    /// Uniform integer in [lo, hi], unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    /// Uniform real in [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller (consumes two draws).
    double normal();

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), in draw order (partial Fisher-Yates).
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

std::uint64_t splitmix64(std::uint64_t x);
/// Seed for an independent sub-stream keyed by a string (scene id, purpose tag).
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key);

} // namespace leprompter
