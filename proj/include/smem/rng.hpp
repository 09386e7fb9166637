#pragma once

#include <cstdint>
#include <vector>

namespace smem {

// PCG-XSH-RR 64/32 (pcg32). 64-bit state, 32-bit output, stream selected
// through the increment. Identical (seed, stream) gives an identical
// sequence on every platform; run manifests record the seed.
class Rng {
 public:
  static constexpr const char* kAlgorithm = "pcg32-xsh-rr";

  explicit Rng(uint64_t seed, uint64_t stream = 0);

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

  uint32_t next_u32();
  // Uniform in [0, 1): next_u32 / 2^32.
  double next_double();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n), n > 0.
  int next_int(int n);
  // Fisher-Yates, descending index order.
  void shuffle(std::vector<int>& v);

 private:
  uint64_t state_;
  uint64_t inc_;
  uint64_t seed_;
  uint64_t stream_;
};

// Fixed stream ids so independent components draw independent sequences
// from one run seed.
namespace rng_stream {
constexpr uint64_t kInit = 1;
constexpr uint64_t kShuffle = 2;
constexpr uint64_t kDropout = 3;
constexpr uint64_t kTrainData = 4;
constexpr uint64_t kTestData = 5;
constexpr uint64_t kGradCheck = 6;
}  // namespace rng_stream

}  // namespace smem
