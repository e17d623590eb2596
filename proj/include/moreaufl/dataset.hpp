#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "moreaufl/matrix.hpp"
#include "moreaufl/rng.hpp"

namespace moreaufl {

// Mini-batch of training samples.
struct Batch {
  Matrix features;                     // |D| x d
  std::vector<std::uint32_t> labels;   // class indices in [0, C)
};

// Per-client train/test split (features already scaled/generated).
struct ClientDataset {
  Matrix train_x;
  std::vector<std::uint32_t> train_y;
  Matrix test_x;
  std::vector<std::uint32_t> test_y;

  std::size_t train_size() const { return train_y.size(); }
  std::size_t test_size() const { return test_y.size(); }
};

struct FederatedDataset {
  std::uint32_t feature_dim = 0;
  std::uint32_t num_classes = 0;
  std::uint64_t data_seed = 0;
  std::string builder_desc;  // JSON echo of the generating parameters
  std::vector<ClientDataset> clients;
};

// Fresh-mini-batch sampler: within each epoch samples are drawn without
// replacement from a shuffled permutation keyed by (seed, Batch, client,
// epoch); at the epoch boundary the next keyed permutation continues the
// stream. The content of batch m is a pure function of (seed, client, m), so
// skipping earlier draws (lazy clients) cannot shift later ones.
class BatchSampler {
 public:
  BatchSampler() = default;
  BatchSampler(std::uint64_t seed, std::uint32_t client) : seed_(seed), client_(client) {}

  // Global batch index m -> row indices into the client's training set.
  // batch_size is clamped to the training-set size (warns once on stderr).
  std::vector<std::uint32_t> batch_indices(const ClientDataset& data, std::uint64_t m,
                                           std::uint32_t batch_size);
  void take(const ClientDataset& data, std::uint64_t m, std::uint32_t batch_size, Batch& out);

 private:
  const std::vector<std::uint32_t>& epoch_permutation(std::uint32_t n, std::uint64_t epoch);

  std::uint64_t seed_ = 0;
  std::uint32_t client_ = 0;
  std::uint64_t cached_epoch_ = ~0ULL;
  std::vector<std::uint32_t> perm_;
  bool warned_clamp_ = false;
};

// Copies the given training rows into a batch.
void gather_batch(const ClientDataset& data, const std::vector<std::uint32_t>& rows, Batch& out);

// Independent batch for evaluation-time personalization; drawn without
// replacement from the EvalBatch domain so evaluation cadence never perturbs
// training randomness.
Batch eval_batch(const ClientDataset& data, std::uint32_t batch_size, std::uint64_t seed,
                 std::uint32_t client, std::uint32_t round);

// Versioned binary container. Byte-stable across platforms (explicit
// little-endian encoding, fixed field order).
void save_dataset(const FederatedDataset& fd, const std::filesystem::path& path);
FederatedDataset load_dataset(const std::filesystem::path& path);

// Content hash of the canonical serialization, as a 16-digit hex string.
std::string dataset_hash(const FederatedDataset& fd);

}  // namespace moreaufl
