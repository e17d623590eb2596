#include "moreaufl/prox.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "moreaufl/errors.hpp"

namespace moreaufl {

ParamVector h_grad(const ModelSpec& spec, const ParamVector& theta, const ParamVector& anchor,
                   const Batch& batch, double lambda) {
  check_same_layout(theta, anchor);
  ParamVector g = grad(spec, theta, batch);
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] += lambda * (theta.data[i] - anchor.data[i]);
  }
  return g;
}

ProxResult prox_minimize(const PenalizedGradFn& grad_fn, ParamVector init,
                         const ProxOptions& opts, const std::string& what) {
  if (opts.max_grad_evals < 1) {
    throw std::invalid_argument("prox_minimize: K must be >= 1");
  }
  if (opts.inner_lr <= 0.0) {
    throw std::invalid_argument("prox_minimize: inner_lr must be > 0");
  }
  if (opts.nu < 0.0) {
    throw std::invalid_argument("prox_minimize: nu must be >= 0");
  }

  const bool nesterov = opts.method == ProxMethod::Nesterov;
  const double sqrt_kappa = std::sqrt(std::max(1.0, opts.kappa));
  const double momentum = nesterov ? (sqrt_kappa - 1.0) / (sqrt_kappa + 1.0) : 0.0;

  ParamVector theta = init;       // last accepted iterate
  ParamVector lookahead = init;   // gradient evaluation point (== theta for GD)
  ParamVector g;
  double grad_sq = 0.0;
  int steps = 0;
  for (int k = 0; k < opts.max_grad_evals; ++k) {
    grad_fn(lookahead, g);
    if (!is_finite(g)) {
      throw DivergenceError(what + ": non-finite gradient at inner step " +
                            std::to_string(k));
    }
    grad_sq = norm2_sq(g);
    if (grad_sq <= opts.nu) {
      return ProxResult{std::move(lookahead), steps, grad_sq};
    }
    if (nesterov) {
      ParamVector next = axpy(-opts.inner_lr, g, lookahead);
      if (!is_finite(next)) {
        throw DivergenceError(what + ": non-finite iterate at inner step " +
                              std::to_string(k));
      }
      // lookahead = next + momentum (next - theta)
      ParamVector la = next;
      axpy_inplace(momentum, sub(next, theta), la);
      theta = std::move(next);
      lookahead = std::move(la);
    } else {
      axpy_inplace(-opts.inner_lr, g, lookahead);
      if (!is_finite(lookahead)) {
        throw DivergenceError(what + ": non-finite iterate at inner step " +
                              std::to_string(k));
      }
    }
    ++steps;
  }
  if (nesterov) {
    return ProxResult{std::move(theta), steps, grad_sq};
  }
  return ProxResult{std::move(lookahead), steps, grad_sq};
}

ProxResult prox_solve(const ModelSpec& spec, const ParamVector& anchor, const Batch& batch,
                      const ProxOptions& opts, const ParamVector& init) {
  check_same_layout(anchor, init);
  if (opts.lambda <= 0.0) {
    throw std::invalid_argument("prox_solve: lambda must be > 0");
  }
  if (opts.method == ProxMethod::ClosedForm) {
    const auto* q = std::get_if<QuadraticSpec>(&spec.kind);
    if (q == nullptr) {
      throw std::invalid_argument("prox_solve: ClosedForm requires a quadratic spec");
    }
    // theta_hat = (A + lambda I)^{-1} (lambda w + A a), diagonal A.
    ParamVector theta = zero_params(spec);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      theta.data[i] = (opts.lambda * anchor.data[i] + q->curvature[i] * q->center[i]) /
                      (q->curvature[i] + opts.lambda);
    }
    ParamVector g = h_grad(spec, theta, anchor, batch, opts.lambda);
    return ProxResult{std::move(theta), 0, norm2_sq(g)};
  }
  const double lambda = opts.lambda;
  PenalizedGradFn grad_fn = [&spec, &anchor, &batch, lambda](const ParamVector& theta,
                                                             ParamVector& out) {
    grad_into(spec, theta, batch, out);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.data[i] += lambda * (theta.data[i] - anchor.data[i]);
    }
  };
  return prox_minimize(grad_fn, init, opts, "prox_solve");
}

ParamVector envelope_grad(const ParamVector& w, const ParamVector& theta_tilde,
                          double lambda) {
  check_same_layout(w, theta_tilde);
  ParamVector g = sub(w, theta_tilde);
  scale_inplace(lambda, g);
  return g;
}

double delta_bound(double lambda, double mu_or_l, double gamma_f_sq, double batch_size,
                   double nu, CurvatureCase curvature) {
  if (batch_size < 1.0) throw std::invalid_argument("delta_bound: batch size must be >= 1");
  if (gamma_f_sq < 0.0 || nu < 0.0) {
    throw std::invalid_argument("delta_bound: gamma^2 and nu must be >= 0");
  }
  double denom = 0.0;
  if (curvature == CurvatureCase::StronglyConvex) {
    denom = lambda + mu_or_l;
    if (denom <= 0.0) throw std::invalid_argument("delta_bound: requires lambda + mu > 0");
  } else {
    denom = lambda - mu_or_l;
    if (denom <= 0.0) throw std::invalid_argument("delta_bound: requires lambda > L");
  }
  return 2.0 / (denom * denom) * (gamma_f_sq / batch_size + nu);
}

}  // namespace moreaufl
