#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace satmetro {

/// SplitMix64 finalizer; used to derive independent RNG stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` under `master`; distinct indices give
/// statistically independent streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

class Fnv1a {
public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void update(double v) {
    char buf[sizeof v];
    std::memcpy(buf, &v, sizeof v);
    update(std::string_view(buf, sizeof buf));
  }
  void update(std::int64_t v) {
    char buf[sizeof v];
    std::memcpy(buf, &v, sizeof v);
    update(std::string_view(buf, sizeof buf));
  }
  std::uint64_t digest() const { return state_; }

private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

} // namespace satmetro
