#pragma once

#include <array>
#include <cstdint>
#include <cstddef>
#include <span>
#include <vector>

namespace moreaufl {

// Randomness domains. Every consumer of randomness draws from its own domain
// so that, e.g., skipping client computation never perturbs client sampling.
enum class RngDomain : std::uint32_t {
  DataGen = 0,
  Partition = 1,
  Split = 2,
  Batch = 3,
  EvalBatch = 4,
  ClientSample = 5,
  Init = 6,
};

struct RngKey {
  std::uint64_t seed = 0;
  RngDomain domain = RngDomain::DataGen;
  std::uint32_t client = 0;
  std::uint32_t round = 0;
};

// Counter-based stream: Philox4x32-10 keyed by a hash of RngKey. Every output
// block is a pure function of (key, counter), so streams derived concurrently
// for different (client, round) pairs are order-independent and two streams
// with the same key replay identically. Normal variates use Box–Muller on
// consecutive uniforms; this choice is part of the golden-seed contract.
class RngStream {
 public:
  explicit RngStream(const RngKey& key);

  std::uint64_t next_u64();
  double next_double();       // uniform [0, 1)
  double next_double_open();  // uniform (0, 1]
  std::uint64_t below(std::uint64_t bound);  // uniform [0, bound), unbiased

  std::uint64_t block_counter() const { return counter_; }

 private:
  void refill();

  std::uint32_t key0_, key1_;
  std::uint32_t salt0_, salt1_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> out_{};
  int buffered_ = 0;
};

// k distinct indices in [0, n), every size-k subset equiprobable; sorted.
std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k,
                                                      RngStream& stream);

std::vector<std::uint32_t> random_permutation(std::uint32_t n, RngStream& stream);

// n i.i.d. N(mean, stddev^2) draws; stddev == 0 yields the mean exactly.
std::vector<double> draw_normal(double mean, double stddev, std::size_t count,
                                RngStream& stream);
void fill_normal(double mean, double stddev, std::span<double> out, RngStream& stream);

}  // namespace moreaufl
