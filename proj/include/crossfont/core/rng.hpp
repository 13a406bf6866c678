#pragma once

#include <cstdint>
#include <random>

namespace crossfont {

/// splitmix64 mixer: the basis for all derived seeds so that every stochastic
/// decision is a pure function of (root seed, purpose, step).
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t purpose, std::uint64_t step = 0) {
    return mix64(mix64(root ^ mix64(purpose)) ^ step);
}

/// Purpose tags keep independent random streams from colliding.
namespace seed_tag {
constexpr std::uint64_t kDataOrder = 0x01;
constexpr std::uint64_t kMask = 0x02;
constexpr std::uint64_t kInit = 0x03;
constexpr std::uint64_t kSplit = 0x04;
constexpr std::uint64_t kSynthJitter = 0x05;
constexpr std::uint64_t kGpEpsilon = 0x06;
constexpr std::uint64_t kRefPick = 0x07;
constexpr std::uint64_t kEval = 0x08;
constexpr std::uint64_t kConnect = 0x09;
constexpr std::uint64_t kCorpus = 0x0a;
}  // namespace seed_tag

inline std::mt19937_64 make_rng(std::uint64_t root, std::uint64_t purpose, std::uint64_t step = 0) {
    return std::mt19937_64(derive_seed(root, purpose, step));
}

}  // namespace crossfont
