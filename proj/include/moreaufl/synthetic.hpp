#pragma once

#include <cstdint>

#include "moreaufl/dataset.hpp"

namespace moreaufl {

// Non-i.i.d. synthetic classification generator. alpha_bar controls how much
// the per-client labeling models differ, beta_bar how much the per-client
// feature distributions differ; both are standard deviations of the
// client-level mean draws. Client sizes follow a clipped lognormal surrogate
// of a power law: clip(round(exp(N(4, 2))) + 50, size_min, size_max).
struct SyntheticParams {
  double alpha_bar = 0.5;
  double beta_bar = 0.5;
  std::uint32_t n_clients = 100;
  std::uint32_t feature_dim = 60;
  std::uint32_t num_classes = 10;
  std::uint32_t size_min = 250;
  std::uint32_t size_max = 25810;
};

// Per-client labeling model used during generation; retained so stored
// samples can be re-scored.
struct SyntheticClientModel {
  std::vector<double> w;  // classes x d, row-major
  std::vector<double> b;  // classes
};

struct SyntheticGenResult {
  FederatedDataset dataset;
  std::vector<SyntheticClientModel> models;
};

// Per client k: u_k ~ N(0, alpha_bar); labeling model entries W_k, b_k ~
// N(u_k, 1). B_k ~ N(0, beta_bar); feature means v_k[j] ~ N(B_k, 1); features
// x ~ N(v_k, diag(j^-1.2)). Labels y = argmax(W_k x + b_k). 75/25 train/test
// split per client.
SyntheticGenResult generate_synthetic_with_models(const SyntheticParams& params,
                                                  std::uint64_t seed);
FederatedDataset generate_synthetic(const SyntheticParams& params, std::uint64_t seed);

}  // namespace moreaufl
