#pragma once

// Counter-based random streams. A stream is a (seed, stream id) key plus a
// draw counter, so any draw can be reproduced from three integers and
// replicates never share state.

#include <cstdint>
#include <span>

#include "crm/error.hpp"

namespace crm {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter), key_(detail::splitmix64(seed ^ detail::splitmix64(stream))) {}

  std::uint64_t next_u64() noexcept { return detail::splitmix64(key_ + detail::splitmix64(counter_++)); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  /// Index drawn from unnormalised non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    if (!(total > 0.0)) throw Error(ErrorCode::InvalidConfig, "categorical weights must have positive total");
    double u = uniform() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.size() - 1;
  }

  /// An independent stream keyed off this one's seed.
  RandomStream substream(std::uint64_t id) const noexcept {
    return RandomStream(detail::splitmix64(seed_ + 0x632be59bd9b4e019ULL * (stream_ + 1)), id);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  std::uint64_t counter() const noexcept { return counter_; }

  friend bool operator==(const RandomStream& x, const RandomStream& y) noexcept {
    return x.seed_ == y.seed_ && x.stream_ == y.stream_ && x.counter_ == y.counter_;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t key_ = detail::splitmix64(detail::splitmix64(0));
};

}  // namespace crm
