#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "moreaufl/dataset.hpp"
#include "moreaufl/model.hpp"
#include "moreaufl/param_vector.hpp"
#include "moreaufl/prox.hpp"

namespace moreaufl {

// Local update rule: K-step inner solve of the proximal objective around the
// local model, then a step along the envelope gradient
// w <- w - eta * lambda * (w - theta_tilde).
struct PFedMeParams {
  double lambda = 15.0;
  double eta = 0.01;
  int k_inner = 5;
  double inner_lr = 0.1;
  double nu = 0.0;
  ProxMethod method = ProxMethod::GD;
};

// Plain local SGD.
struct FedAvgParams {
  double eta = 0.01;
};

// MAML-style meta step: theta = w - alpha_hat grad(w); then
// w <- w - beta_hat * grad(theta)                        (FirstOrder)
// w <- w - beta_hat * (I - alpha_hat H) grad(theta)      (HVP)
// with H-vector products by central differences of the batch gradient at w.
struct PerFedAvgParams {
  double alpha_hat = 0.01;
  double beta_hat = 0.01;
  enum class Hessian { FirstOrder, HVP } hessian = Hessian::FirstOrder;
};

using AlgorithmKind = std::variant<PFedMeParams, FedAvgParams, PerFedAvgParams>;

// Number of fresh mini-batches one local round consumes; fixed per algorithm
// so batch contents stay a pure function of (client, round, local round).
std::uint32_t batches_per_local_round(const AlgorithmKind& algorithm);

struct ClientState {
  std::uint32_t id = 0;
  ParamVector local_w;
  std::optional<ParamVector> personalized_theta;  // last inner solution
};

struct ServerState {
  ParamVector global_w;
  std::uint32_t round = 0;
};

struct RoundReport {
  std::uint32_t round = 0;
  double global_test_acc = 0.0;
  double personalized_test_acc = 0.0;
  double global_train_loss = 0.0;
  double personalized_train_loss = 0.0;
  std::uint64_t wall_ms = 0;  // informational; excluded from determinism
};

// One client's objective: its model spec plus its local data. Specs may differ
// across clients (quadratic federations) but must share one parameter layout.
struct ClientTask {
  ModelSpec spec;
  ClientDataset data;
};

struct LocalUpdateContext {
  const ModelSpec* spec = nullptr;
  const ClientDataset* data = nullptr;
  BatchSampler* sampler = nullptr;
  std::uint32_t batch_size = 0;
  std::uint32_t global_round = 0;  // t
  std::uint32_t local_rounds = 0;  // R
};

ClientState local_update_pfedme(ClientState client, const LocalUpdateContext& ctx,
                                const PFedMeParams& params);
ClientState local_update_fedavg(ClientState client, const LocalUpdateContext& ctx,
                                const FedAvgParams& params);
ClientState local_update_perfedavg(ClientState client, const LocalUpdateContext& ctx,
                                   const PerFedAvgParams& params);

// w <- (1 - beta) w + beta * mean(locals); locals must be passed in ascending
// client-id order so the reduction order is fixed.
ServerState aggregate(ServerState server, const std::vector<const ParamVector*>& locals,
                      double beta);

struct TrainOptions {
  AlgorithmKind algorithm;
  std::uint32_t rounds = 1;        // T
  std::uint32_t local_rounds = 1;  // R
  std::uint32_t sampled = 1;       // S
  double beta = 1.0;
  std::uint32_t batch_size = 20;
  std::uint32_t eval_every = 1;
  std::uint64_t seed = 1;
  int threads = 1;
  bool lazy_clients = false;       // skip local updates for unsampled clients
  std::optional<ParamVector> w0;   // default: init_params from the Init stream
  // Invoked after each evaluation; lets callers stream partial results to disk
  // so a divergence abort preserves what was computed.
  std::function<void(const RoundReport&)> on_report;
  // When set, receives the final global model.
  ParamVector* final_w_out = nullptr;
};

// Runs T communication rounds: broadcast, local updates on all clients (or
// only the sampled ones under lazy_clients; results are identical because
// client sampling and batch selection use independent RNG domains), uniform
// sampling of S clients, beta-mixed aggregation, and periodic evaluation.
// Reports carry the metrics of the model after the round they are labeled
// with. Quadratic federations report zero accuracies (no class scores).
std::vector<RoundReport> run_training(const std::vector<ClientTask>& tasks,
                                      const TrainOptions& opts);

// Mean over all C(N, S) subsets of || subset-mean(grads) - mean(grads) ||^2
// (exhaustive), paired with the closed form
// (N/S - 1)/(N - 1) * (1/N) sum ||g_i - mean||^2.
std::pair<double, double> sampling_variance_identity_check(
    const std::vector<ParamVector>& grads, std::uint32_t s);

}  // namespace moreaufl
