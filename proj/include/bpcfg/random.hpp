#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace bpcfg {

using Rng = std::mt19937_64;

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Hashes a seed and a path of integers into an independent stream seed.
// Streams are keyed by what they are for (run seed, iteration, sentence),
// never by the order in which they happen to be consumed.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t p : path) h = mix64(h ^ mix64(p + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t seed,
                       std::initializer_list<std::uint64_t> path) {
  std::seed_seq seq{derive_seed(seed, path), derive_seed(~seed, path)};
  return Rng(seq);
}

// Uniform on [0, 1) with 53 random bits; independent of the standard
// library's generate_canonical details.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Stream tags used when deriving seeds.
namespace stream_tag {
inline constexpr std::uint64_t grammar = 1;
inline constexpr std::uint64_t sentence = 2;
}  // namespace stream_tag

}  // namespace bpcfg
