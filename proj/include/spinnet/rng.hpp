#pragma once

#include <cmath>
#include <cstdint>

namespace spinnet {

namespace detail {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

}  // namespace detail

// Counter-based generator: draw k of stream `key` is a bijective mix of
// key + k * golden. No sequencing state beyond the counter, so replicas and
// purposes get their own streams via split() and never overlap.
class CounterRng {
  public:
    CounterRng() = default;
    explicit CounterRng(std::uint64_t key) : key_(key) {}

    // Child stream labelled by tag; deterministic in (key, tag).
    CounterRng split(std::uint64_t tag) const {
        return CounterRng(detail::mix64(key_ ^ detail::mix64(tag + detail::kGolden)));
    }

    std::uint64_t next_u64() { return detail::mix64(key_ + (++counter_) * detail::kGolden); }

    // Uniform on [0,1), 53 bits.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double next_exponential(double rate) {
        return -std::log1p(-next_uniform()) / rate;
    }

    // Uniform integer in [0, bound).
    std::int64_t next_below(std::int64_t bound) {
        return static_cast<std::int64_t>(next_uniform() * static_cast<double>(bound));
    }

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

}  // namespace spinnet
