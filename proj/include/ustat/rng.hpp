#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <string_view>

namespace ustat {

using Rng = std::mt19937_64;

/// One element of a seed-derivation path: either a text label or an index.
class SeedLabel {
 public:
  SeedLabel(std::string_view text) : text_(text) {}
  SeedLabel(const char* text) : text_(text) {}
  SeedLabel(const std::string& text) : text_(text) {}
  SeedLabel(std::uint64_t index) : text_("#" + std::to_string(index)) {}
  SeedLabel(int index) : SeedLabel(static_cast<std::uint64_t>(index)) {}
  SeedLabel(long index) : SeedLabel(static_cast<std::uint64_t>(index)) {}
  SeedLabel(unsigned index) : SeedLabel(static_cast<std::uint64_t>(index)) {}

  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic keyed hash of (master, label path).
///
/// Each label is absorbed as FNV-1a over its bytes (with a length prefix,
/// so paths are unambiguous) and the running state is re-mixed with
/// SplitMix64 after every label. The output behaves like a uniform 64-bit
/// value, so for k derived seeds the collision probability is about
/// k^2 / 2^65 (under 3e-8 for a million streams). An empty path returns
/// mix64(master).
std::uint64_t derive_seed(std::uint64_t master, std::span<const SeedLabel> path);
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<SeedLabel> path);

/// Uniform draw on the open interval (0,1) from the top 53 bits.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<SeedLabel> path) {
  return Rng(derive_seed(master, path));
}

/// Runs body(i) for i in [0, count). Work is split into contiguous blocks
/// over `threads` workers; callers write into per-index slots so results
/// never depend on the thread count.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

}  // namespace ustat
