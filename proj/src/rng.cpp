#include "moreaufl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace moreaufl {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace

RngStream::RngStream(const RngKey& key) {
  std::uint64_t h = mix64(key.seed + kGolden);
  h = mix64(h ^ (static_cast<std::uint64_t>(key.domain) + kGolden * 2));
  h = mix64(h ^ (static_cast<std::uint64_t>(key.client) + kGolden * 3));
  h = mix64(h ^ (static_cast<std::uint64_t>(key.round) + kGolden * 5));
  key0_ = static_cast<std::uint32_t>(h);
  key1_ = static_cast<std::uint32_t>(h >> 32);
  const std::uint64_t h2 = mix64(h + kGolden);
  salt0_ = static_cast<std::uint32_t>(h2);
  salt1_ = static_cast<std::uint32_t>(h2 >> 32);
}

void RngStream::refill() {
  std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
  std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
  std::uint32_t c2 = salt0_;
  std::uint32_t c3 = salt1_;
  std::uint32_t k0 = key0_;
  std::uint32_t k1 = key1_;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(0xD2511F53u, c0, hi0, lo0);
    mulhilo(0xCD9E8D57u, c2, hi1, lo1);
    const std::uint32_t n0 = hi1 ^ c1 ^ k0;
    const std::uint32_t n1 = lo1;
    const std::uint32_t n2 = hi0 ^ c3 ^ k1;
    const std::uint32_t n3 = lo0;
    c0 = n0;
    c1 = n1;
    c2 = n2;
    c3 = n3;
    k0 += 0x9E3779B9u;
    k1 += 0xBB67AE85u;
  }
  out_[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
  out_[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
  ++counter_;
  buffered_ = 2;
}

std::uint64_t RngStream::next_u64() {
  if (buffered_ == 0) refill();
  return out_[2 - buffered_--];
}

double RngStream::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::next_double_open() {
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
}

std::uint64_t RngStream::below(std::uint64_t bound) {
  if (bound == 0) throw std::invalid_argument("RngStream::below: bound must be positive");
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
  for (;;) {
    const std::uint64_t x = next_u64();
    if (x >= threshold) return x % bound;
  }
}

std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k,
                                                      RngStream& stream) {
  if (k == 0 || k > n) {
    throw std::invalid_argument("sample_without_replacement: need 0 < k <= n, got k=" +
                                std::to_string(k) + ", n=" + std::to_string(n));
  }
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < k; ++i) {
    const std::uint32_t j = i + static_cast<std::uint32_t>(stream.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::vector<std::uint32_t> random_permutation(std::uint32_t n, RngStream& stream) {
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i + 1 < n; ++i) {
    const std::uint32_t j = i + static_cast<std::uint32_t>(stream.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

void fill_normal(double mean, double stddev, std::span<double> out, RngStream& stream) {
  if (stddev < 0.0) throw std::invalid_argument("fill_normal: stddev must be >= 0");
  for (std::size_t i = 0; i < out.size(); i += 2) {
    const double u1 = stream.next_double_open();
    const double u2 = stream.next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    out[i] = mean + stddev * (r * std::cos(phi));
    if (i + 1 < out.size()) out[i + 1] = mean + stddev * (r * std::sin(phi));
  }
}

std::vector<double> draw_normal(double mean, double stddev, std::size_t count,
                                RngStream& stream) {
  std::vector<double> out(count);
  fill_normal(mean, stddev, out, stream);
  return out;
}

}  // namespace moreaufl
