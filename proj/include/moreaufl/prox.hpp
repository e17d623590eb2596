#pragma once

#include <functional>
#include <string>

#include "moreaufl/dataset.hpp"
#include "moreaufl/model.hpp"
#include "moreaufl/param_vector.hpp"

namespace moreaufl {

enum class ProxMethod { GD, Nesterov, ClosedForm };

struct ProxOptions {
  ProxMethod method = ProxMethod::GD;
  int max_grad_evals = 5;   // K
  double inner_lr = 0.1;
  double nu = 0.0;          // stop when ||grad h||^2 <= nu; 0 disables early stop
  double lambda = 1.0;      // penalty weight toward the anchor point
  // Condition-number estimate for the Nesterov momentum schedule
  // ((sqrt(kappa)-1)/(sqrt(kappa)+1)); 1 degenerates to plain GD.
  double kappa = 1.0;
};

struct ProxResult {
  ParamVector theta;
  int steps_used = 0;          // number of iterate updates (<= K)
  // Squared norm of the last evaluated gradient: at the returned iterate when
  // stopped by the nu tolerance, at the penultimate iterate when the step cap
  // was reached.
  double final_h_grad_sq = 0.0;
};

// grad of f(theta) + (lambda/2)||theta - anchor||^2, written into out.
using PenalizedGradFn = std::function<void(const ParamVector& theta, ParamVector& out)>;

// Gradient of the penalized batch objective at theta:
// grad f(theta; batch) + lambda (theta - anchor).
ParamVector h_grad(const ModelSpec& spec, const ParamVector& theta, const ParamVector& anchor,
                   const Batch& batch, double lambda);

// Iterative core shared by the model-backed path and test oracles. Runs at
// most K gradient evaluations of the chosen first-order method from init,
// stopping early once ||grad||^2 <= nu. Throws DivergenceError naming the
// offending step if a non-finite iterate or gradient appears.
ProxResult prox_minimize(const PenalizedGradFn& grad_fn, ParamVector init,
                         const ProxOptions& opts, const std::string& what);

// Approximately minimizes f(theta; batch) + (lambda/2)||theta - anchor||^2.
// ClosedForm is exact and only valid for quadratic specs.
ProxResult prox_solve(const ModelSpec& spec, const ParamVector& anchor, const Batch& batch,
                      const ProxOptions& opts, const ParamVector& init);

// lambda (w - theta_tilde): the envelope gradient estimate at w given an
// (approximate) inner solution.
ParamVector envelope_grad(const ParamVector& w, const ParamVector& theta_tilde, double lambda);

enum class CurvatureCase { StronglyConvex, NonconvexSmooth };

// Upper bound on E||theta_tilde - theta_hat||^2 for an inner solution meeting
// the nu tolerance with mini-batch gradient noise gamma_f_sq:
//   2/(lambda + mu)^2 (gamma^2/|D| + nu)    (strongly convex, modulus mu)
//   2/(lambda - L)^2  (gamma^2/|D| + nu)    (nonconvex L-smooth, lambda > L)
double delta_bound(double lambda, double mu_or_l, double gamma_f_sq, double batch_size,
                   double nu, CurvatureCase curvature);

}  // namespace moreaufl
