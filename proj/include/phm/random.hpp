#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace phm {

// splitmix64 step, used to derive independent stream seeds from a master seed.
// Scheduling order must never influence results, so every unit / training run /
// noise stream gets its own seed derived from (master, fixed path constants).
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t p : path) s = splitmix64(s ^ p);
  return s;
}

// Seed stream tags. Keep values stable: changing one silently reshuffles
// every downstream random draw.
namespace seed_tag {
inline constexpr std::uint64_t kUnit = 0x11;
inline constexpr std::uint64_t kProfile = 0x12;
inline constexpr std::uint64_t kDegradation = 0x13;
inline constexpr std::uint64_t kSensorNoise = 0x14;
inline constexpr std::uint64_t kTraining = 0x21;
inline constexpr std::uint64_t kInit = 0x22;
inline constexpr std::uint64_t kSplit = 0x23;
inline constexpr std::uint64_t kPerturb = 0x31;
inline constexpr std::uint64_t kSurrogate = 0x32;
}  // namespace seed_tag

inline std::mt19937_64 make_engine(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace phm
