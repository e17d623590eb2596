#pragma once

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

#include "moreaufl/dataset.hpp"
#include "moreaufl/matrix.hpp"
#include "moreaufl/param_vector.hpp"
#include "moreaufl/rng.hpp"

namespace moreaufl {

// Multinomial logistic regression with softmax cross-entropy and an l2
// regularizer over all parameters (including the bias), which makes the
// objective reg-strongly convex. Layout: W (classes x input_dim, row-major)
// then b (classes).
struct MlrSpec {
  std::uint32_t input_dim = 0;
  std::uint32_t classes = 0;
  double reg = 1e-3;
};

// Two-layer ReLU network with a softmax output; the nonconvex case.
// Layout: W1 (hidden x input_dim), b1 (hidden), W2 (classes x hidden),
// b2 (classes). ReLU subgradient at 0 is taken as 0.
struct Dnn2Spec {
  std::uint32_t input_dim = 0;
  std::uint32_t hidden = 0;
  std::uint32_t classes = 0;
};

// Quadratic oracle 0.5 (x - center)' diag(curvature) (x - center); batches are
// ignored. Used to validate solvers against closed forms.
struct QuadraticSpec {
  std::vector<double> curvature;  // diagonal of A, all > 0 for strong convexity
  std::vector<double> center;     // a
};

struct ModelSpec {
  std::variant<MlrSpec, Dnn2Spec, QuadraticSpec> kind;
};

std::size_t param_count(const ModelSpec& spec);
// Hash of the structural layout (kind + dimensions); regularization and
// quadratic coefficients do not change the layout.
std::uint64_t layout_id(const ModelSpec& spec);
ParamVector zero_params(const ModelSpec& spec);
// Zeros for MLR and quadratic; uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) per
// layer for the two-layer network, drawn from the Init stream.
ParamVector init_params(const ModelSpec& spec, RngStream& init_stream);

double loss(const ModelSpec& spec, const ParamVector& params, const Matrix& features,
            const std::vector<std::uint32_t>& labels);
double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch);

void grad_into(const ModelSpec& spec, const ParamVector& params, const Matrix& features,
               const std::vector<std::uint32_t>& labels, ParamVector& out);
ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch);
void grad_into(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
               ParamVector& out);

// Per-row argmax of class scores; ties resolved to the lowest class index.
std::vector<std::uint32_t> predict(const ModelSpec& spec, const ParamVector& params,
                                   const Matrix& features);
std::size_t count_correct(const ModelSpec& spec, const ParamVector& params,
                          const Matrix& features, const std::vector<std::uint32_t>& labels);

// MLR -> reg; quadratic -> min curvature; two-layer network -> nullopt.
std::optional<double> strong_convexity_modulus(const ModelSpec& spec);

// Empirical counterparts of the gradient-noise and gradient-diversity bounds;
// estimated, never assumed.
struct DiversityDiagnostics {
  double gamma_f_sq_hat = 0.0;  // E ||grad_batch - grad_full||^2 per client/draw
  double sigma_f_sq_hat = 0.0;  // (1/N) sum ||grad_i - grad_avg||^2
};

// One client's objective; specs may differ across clients (quadratic oracles
// with per-client centers) as long as they share a parameter layout.
struct ClientObjective {
  const ModelSpec* spec = nullptr;
  const ClientDataset* data = nullptr;
};

DiversityDiagnostics estimate_diversity(const std::vector<ClientObjective>& clients,
                                        const ParamVector& params, std::uint32_t batch_size,
                                        std::uint32_t n_draws, RngStream& stream);

DiversityDiagnostics estimate_diversity(const ModelSpec& spec, const ParamVector& params,
                                        const FederatedDataset& data,
                                        std::uint32_t batch_size, std::uint32_t n_draws,
                                        RngStream& stream);

}  // namespace moreaufl
