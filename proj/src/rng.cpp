#include "smem/rng.hpp"

#include "smem/error.hpp"

namespace smem {

namespace {
constexpr uint64_t kMultiplier = 6364136223846793005ULL;
}

Rng::Rng(uint64_t seed, uint64_t stream)
    : state_(0), inc_((stream << 1u) | 1u), seed_(seed), stream_(stream) {
  next_u32();
  state_ += seed;
  next_u32();
}

uint32_t Rng::next_u32() {
  uint64_t old = state_;
  state_ = old * kMultiplier + inc_;
  uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
  uint32_t rot = static_cast<uint32_t>(old >> 59u);
  return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
}

double Rng::next_double() {
  return static_cast<double>(next_u32()) * 0x1p-32;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * next_double();
}

int Rng::next_int(int n) {
  if (n <= 0) {
    throw Error(ErrorKind::kUsage, "next_int requires a positive bound, got " + std::to_string(n));
  }
  // Lemire multiply-shift map; bias below n/2^32 and fully deterministic.
  return static_cast<int>((static_cast<uint64_t>(next_u32()) * static_cast<uint64_t>(n)) >> 32u);
}

void Rng::shuffle(std::vector<int>& v) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
    int j = next_int(i + 1);
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
  }
}

}  // namespace smem
