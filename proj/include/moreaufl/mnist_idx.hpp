#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "moreaufl/dataset.hpp"
#include "moreaufl/rng.hpp"

namespace moreaufl {

// IDX tensor (big-endian header, u8 payload). Supported magics:
// 0x00000801 (1-D labels) and 0x00000803 (3-D images).
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> serialize_idx(const IdxTensor& tensor);

// Reads a raw or gzip-compressed IDX file.
IdxTensor load_idx_file(const std::filesystem::path& path);

struct MnistPartitionOptions {
  std::uint32_t n_clients = 20;
  std::uint32_t labels_per_client = 2;
  std::uint32_t size_min = 1165;
  std::uint32_t size_max = 3834;
};

struct MnistPartitionResult {
  FederatedDataset dataset;
  std::vector<std::uint32_t> client_sizes;
  std::uint32_t leftover = 0;  // pool samples not assigned to any client
};

// Label-restricted heterogeneous partition over the full image pool
// (train + test IDX files concatenated): client i holds exactly
// labels_per_client labels ((2i mod 10, 2i+1 mod 10, ...)); client sizes are
// distinct draws from [size_min, size_max]; each client's local data is split
// 75/25 into train/test stratified by label; pixels are scaled to [0, 1].
MnistPartitionResult partition_mnist(const IdxTensor& images, const IdxTensor& labels,
                                     const MnistPartitionOptions& opts, std::uint64_t seed);

}  // namespace moreaufl
