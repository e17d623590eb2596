#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include "json.hpp"

#include "moreaufl/dataset.hpp"
#include "moreaufl/federation.hpp"
#include "moreaufl/mnist_idx.hpp"
#include "moreaufl/model.hpp"
#include "moreaufl/synthetic.hpp"

namespace moreaufl {

struct MnistPartitionSource {
  std::filesystem::path images_train, labels_train, images_test, labels_test;
  MnistPartitionOptions options;
};

struct SyntheticSource {
  SyntheticParams params;
};

struct FileSource {
  std::filesystem::path path;
};

using DatasetSource = std::variant<MnistPartitionSource, SyntheticSource, FileSource>;

enum class AlgorithmName { PFedMe, FedAvg, PerFedAvg };

std::string to_string(AlgorithmName name);

// One experiment definition: a single nested JSON document, schema-validated
// with field-level error messages.
struct FederationConfig {
  AlgorithmName algorithm = AlgorithmName::PFedMe;

  std::string model_kind = "mlr";  // "mlr" | "dnn2"
  std::uint32_t hidden = 100;
  double reg = 1e-3;

  DatasetSource dataset = SyntheticSource{};

  std::uint32_t sampled = 1;       // S
  std::uint32_t rounds = 1;        // T
  std::uint32_t local_rounds = 1;  // R
  std::uint32_t k_inner = 5;       // K
  std::uint32_t batch_size = 20;
  std::uint32_t eval_every = 1;

  double lambda = 15.0;
  double eta = 0.01;
  double beta = 1.0;
  double nu = 0.0;
  double inner_lr = 0.1;

  double alpha_hat = 0.01;  // Per-FedAvg inner rate
  double beta_hat = 0.01;   // Per-FedAvg meta rate
  bool hessian_hvp = false;

  std::uint64_t seed = 1;
  std::uint64_t data_seed = 1;  // fixed across repeat seeds
  bool lazy_clients = false;

  nlohmann::json raw;  // parsed document, echoed into summaries

  std::uint32_t n_clients() const;
};

FederationConfig parse_config(const nlohmann::json& doc);
FederationConfig load_config_file(const std::filesystem::path& path);

FederatedDataset build_dataset(const FederationConfig& config);
ModelSpec build_model_spec(const FederationConfig& config, const FederatedDataset& data);
AlgorithmKind build_algorithm(const FederationConfig& config);
TrainOptions build_train_options(const FederationConfig& config, std::uint64_t run_seed,
                                 int threads);

// Fields a sweep may vary: R, K, batch_size, lambda, beta.
void apply_sweep_value(FederationConfig& config, const std::string& param, double value);

}  // namespace moreaufl
