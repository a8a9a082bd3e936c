#pragma once

// Deterministic random number utilities. std::mt19937_64 output is pinned by
// the standard, but the <random> distributions are not, so bounded draws and
// shuffles are implemented here to keep every platform byte-identical.

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace clarify {

inline std::uint64_t hash_combine64(std::uint64_t h, std::uint64_t v) {
  // FNV-1a style fold, used for deriving child seeds and content digests.
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 12) + (h >> 4);
  return h;
}

// Portable 64-bit FNV-1a over bytes; std::hash is not pinned across standard
// libraries, so content digests go through this instead.
inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 14695981039346656037ULL) {
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform integer in [lo, hi], inclusive. Lemire reduction, rejection-free
  // bias is negligible for simulation purposes and fully deterministic.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const auto wide = static_cast<unsigned __int128>(next_u64()) * span;
    return lo + static_cast<int>(wide >> 64);
  }

  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  bool chance(double p) { return uniform01() < p; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<std::size_t>(
        uniform_int(0, static_cast<int>(v.size()) - 1))];
  }

  // Independent child stream, e.g. per-episode or per-environment.
  Rng child(std::uint64_t tag) const {
    return Rng(hash_combine64(base_seed_mix(), tag));
  }

 private:
  std::uint64_t base_seed_mix() const {
    // Mixes the engine's current position into the child seed so repeated
    // child(tag) calls at different points yield different streams.
    std::mt19937_64 copy = engine_;
    return copy();
  }

  std::mt19937_64 engine_;
};

}  // namespace clarify
