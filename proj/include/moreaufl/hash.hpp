#pragma once

#include <cstdint>
#include <cstddef>
#include <string>

namespace moreaufl {

// FNV-1a 64-bit running hash; used as a content fingerprint for datasets and
// output files (not cryptographic).
class Fnv64 {
 public:
  void update(const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001B3ULL;
    }
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xCBF29CE484222325ULL;
};

}  // namespace moreaufl
