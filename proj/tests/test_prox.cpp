#include "doctest.h"

#include <cmath>
#include <limits>

#include "moreaufl/errors.hpp"
#include "moreaufl/model.hpp"
#include "moreaufl/prox.hpp"
#include "moreaufl/rng.hpp"

using namespace moreaufl;

namespace {

ModelSpec random_diag_quadratic(std::uint32_t dim, RngStream& stream) {
  QuadraticSpec q;
  for (std::uint32_t i = 0; i < dim; ++i) {
    q.curvature.push_back(0.2 + 4.0 * stream.next_double());
    q.center.push_back(4.0 * stream.next_double() - 2.0);
  }
  return ModelSpec{q};
}

ParamVector vec(const ModelSpec& spec, std::initializer_list<double> values) {
  ParamVector v = zero_params(spec);
  std::size_t i = 0;
  for (double x : values) v.data[i++] = x;
  return v;
}

Batch small_batch(std::uint32_t rows, std::uint32_t d, std::uint32_t classes,
                  RngStream& stream) {
  Batch b;
  b.features = Matrix(rows, d);
  for (double& v : b.features.values) v = 2.0 * stream.next_double() - 1.0;
  b.labels.resize(rows);
  for (auto& y : b.labels) y = static_cast<std::uint32_t>(stream.below(classes));
  return b;
}

}  // namespace

TEST_CASE("h_grad: penalty vanishes at the anchor") {
  RngStream stream(RngKey{200, RngDomain::DataGen, 0, 0});
  const ModelSpec spec{MlrSpec{3, 2, 0.0}};
  const Batch b = small_batch(4, 3, 2, stream);
  ParamVector w = zero_params(spec);
  for (double& v : w.data) v = stream.next_double();
  const ParamVector g = grad(spec, w, b);
  const ParamVector hg = h_grad(spec, w, w, b, 7.5);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(hg.data[i] == doctest::Approx(g.data[i]).epsilon(1e-15));
  }
}

TEST_CASE("h_grad: quadratic exact prox point has zero gradient") {
  const ModelSpec spec{QuadraticSpec{{1}, {0}}};
  const ParamVector theta = vec(spec, {1});
  const ParamVector w = vec(spec, {2});
  const ParamVector hg = h_grad(spec, theta, w, Batch{}, 1.0);
  CHECK(hg.data[0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("h_grad matches finite differences of the penalized objective") {
  RngStream stream(RngKey{201, RngDomain::DataGen, 0, 0});
  const ModelSpec spec{MlrSpec{4, 3, 0.01}};
  const Batch b = small_batch(5, 4, 3, stream);
  const double lambda = 2.5;
  ParamVector w = zero_params(spec), theta = zero_params(spec);
  for (double& v : w.data) v = stream.next_double() - 0.5;
  for (double& v : theta.data) v = stream.next_double() - 0.5;
  const ParamVector hg = h_grad(spec, theta, w, b, lambda);
  const double h = 1e-5;
  auto objective = [&](const ParamVector& t) {
    return loss(spec, t, b) + 0.5 * lambda * norm2_sq(sub(t, w));
  };
  for (std::size_t i = 0; i < theta.size(); ++i) {
    ParamVector plus = theta, minus = theta;
    plus.data[i] += h;
    minus.data[i] -= h;
    const double fd = (objective(plus) - objective(minus)) / (2.0 * h);
    const double denom = std::max({1.0, std::fabs(fd), std::fabs(hg.data[i])});
    CHECK(std::fabs(fd - hg.data[i]) / denom <= 1e-5);
  }
}

TEST_CASE("prox of a scalar quadratic: GD reaches lambda w/(lambda + mu)") {
  const ModelSpec spec{QuadraticSpec{{1}, {0}}};  // mu = 1
  ProxOptions opts;
  opts.method = ProxMethod::GD;
  opts.max_grad_evals = 500;
  opts.inner_lr = 0.5;
  opts.nu = 0.0;
  opts.lambda = 1.0;
  const ParamVector w = vec(spec, {2});
  const ProxResult res = prox_solve(spec, w, Batch{}, opts, w);
  CHECK(std::fabs(res.theta.data[0] - 1.0) <= 1e-8);
  CHECK(res.steps_used <= 500);
}

TEST_CASE("closed-form prox solves (A + lambda I) theta = lambda w + A a") {
  const ModelSpec spec{QuadraticSpec{{2}, {1}}};
  ProxOptions opts;
  opts.method = ProxMethod::ClosedForm;
  opts.lambda = 2.0;
  const ParamVector w = vec(spec, {0});
  const ProxResult res = prox_solve(spec, w, Batch{}, opts, w);
  CHECK(res.theta.data[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(res.steps_used == 0);
  CHECK(res.final_h_grad_sq <= 1e-28);
}

TEST_CASE("closed form rejects non-quadratic specs") {
  const ModelSpec spec{MlrSpec{2, 2, 0.0}};
  ProxOptions opts;
  opts.method = ProxMethod::ClosedForm;
  opts.lambda = 1.0;
  const ParamVector w = zero_params(spec);
  CHECK_THROWS_AS((void)prox_solve(spec, w, Batch{}, opts, w), std::invalid_argument);
}

TEST_CASE("nu = infinity returns init unchanged with zero steps") {
  const ModelSpec spec{QuadraticSpec{{1, 1}, {5, 5}}};
  ProxOptions opts;
  opts.max_grad_evals = 50;
  opts.inner_lr = 0.1;
  opts.nu = std::numeric_limits<double>::infinity();
  opts.lambda = 1.0;
  const ParamVector w = vec(spec, {2, -2});
  const ProxResult res = prox_solve(spec, w, Batch{}, opts, w);
  CHECK(res.theta.data == w.data);
  CHECK(res.steps_used == 0);
}

TEST_CASE("GD and Nesterov agree with the closed form on random quadratics") {
  RngStream stream(RngKey{202, RngDomain::DataGen, 0, 0});
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint32_t dim = 1 + static_cast<std::uint32_t>(stream.below(8));
    const ModelSpec spec = random_diag_quadratic(dim, stream);
    const auto& q = std::get<QuadraticSpec>(spec.kind);
    const double lambda = 0.5 + 3.0 * stream.next_double();
    double curv_max = 0.0, curv_min = 1e300;
    for (double a : q.curvature) {
      curv_max = std::max(curv_max, a);
      curv_min = std::min(curv_min, a);
    }

    ParamVector w = zero_params(spec);
    for (double& v : w.data) v = 4.0 * stream.next_double() - 2.0;

    ProxOptions closed;
    closed.method = ProxMethod::ClosedForm;
    closed.lambda = lambda;
    const ParamVector exact = prox_solve(spec, w, Batch{}, closed, w).theta;

    ProxOptions gd;
    gd.method = ProxMethod::GD;
    gd.max_grad_evals = 10000;
    gd.inner_lr = 1.0 / (curv_max + lambda);
    gd.nu = 1e-18;
    gd.lambda = lambda;
    const ProxResult r_gd = prox_solve(spec, w, Batch{}, gd, w);
    CHECK(norm2(sub(r_gd.theta, exact)) <= 1e-7);

    ProxOptions nesterov = gd;
    nesterov.method = ProxMethod::Nesterov;
    nesterov.kappa = (curv_max + lambda) / (curv_min + lambda);
    const ProxResult r_n = prox_solve(spec, w, Batch{}, nesterov, w);
    CHECK(norm2(sub(r_n.theta, exact)) <= 1e-7);
  }
}

TEST_CASE("GD with a safe step never increases the penalized objective") {
  RngStream stream(RngKey{203, RngDomain::DataGen, 0, 0});
  for (int trial = 0; trial < 10; ++trial) {
    const std::uint32_t dim = 1 + static_cast<std::uint32_t>(stream.below(6));
    const ModelSpec spec = random_diag_quadratic(dim, stream);
    const auto& q = std::get<QuadraticSpec>(spec.kind);
    const double lambda = 0.5 + 2.0 * stream.next_double();
    double curv_max = 0.0;
    for (double a : q.curvature) curv_max = std::max(curv_max, a);
    const double smoothness = curv_max + lambda;

    ParamVector w = zero_params(spec);
    for (double& v : w.data) v = 4.0 * stream.next_double() - 2.0;
    auto objective = [&](const ParamVector& t) {
      return loss(spec, t, Batch{}) + 0.5 * lambda * norm2_sq(sub(t, w));
    };

    ProxOptions opts;
    opts.method = ProxMethod::GD;
    opts.max_grad_evals = 1;
    opts.inner_lr = 1.0 / (lambda + smoothness);
    opts.lambda = lambda;
    ParamVector theta = w;
    double prev = objective(theta);
    for (int step = 0; step < 60; ++step) {
      theta = prox_solve(spec, w, Batch{}, opts, theta).theta;
      const double now = objective(theta);
      CHECK(now <= prev + 1e-12);
      prev = now;
    }
  }
}

TEST_CASE("divergent inner steps raise a divergence error naming the step") {
  const ModelSpec spec{QuadraticSpec{{4}, {0}}};
  ProxOptions opts;
  opts.max_grad_evals = 2000;
  opts.inner_lr = 1e154;  // overflows to inf within a few steps
  opts.lambda = 1.0;
  const ParamVector w = vec(spec, {1});
  CHECK_THROWS_AS((void)prox_solve(spec, w, Batch{}, opts, w), DivergenceError);
}

TEST_CASE("envelope gradient examples") {
  const ModelSpec spec{QuadraticSpec{{1}, {0}}};
  const ParamVector w = vec(spec, {2});
  // theta == w -> zero
  const ParamVector zero = envelope_grad(w, w, 3.0);
  CHECK(zero.data[0] == 0.0);
  // exact prox of mu=1, lambda=1 at w=2 is theta=1 -> grad = 1 = mu_F w
  const ParamVector g = envelope_grad(w, vec(spec, {1}), 1.0);
  CHECK(g.data[0] == doctest::Approx(1.0));
}

TEST_CASE("envelope gradient consistency: lambda mu/(lambda+mu) (w - a)") {
  RngStream stream(RngKey{204, RngDomain::DataGen, 0, 0});
  for (int trial = 0; trial < 25; ++trial) {
    const double mu = 0.2 + 3.0 * stream.next_double();
    const double a = 3.0 * stream.next_double() - 1.5;
    const double lambda = 0.3 + 4.0 * stream.next_double();
    const ModelSpec spec{QuadraticSpec{{mu}, {a}}};
    ProxOptions closed;
    closed.method = ProxMethod::ClosedForm;
    closed.lambda = lambda;
    ParamVector w = vec(spec, {5.0 * stream.next_double() - 2.5});
    const ParamVector theta = prox_solve(spec, w, Batch{}, closed, w).theta;
    const ParamVector g = envelope_grad(w, theta, lambda);
    const double expected = lambda * mu / (lambda + mu) * (w.data[0] - a);
    CHECK(std::fabs(g.data[0] - expected) <= 1e-10);
  }
}

TEST_CASE("envelope gradient matches finite differences of the envelope on MLR") {
  RngStream stream(RngKey{205, RngDomain::DataGen, 0, 0});
  const ModelSpec spec{MlrSpec{3, 2, 0.01}};
  const Batch b = small_batch(30, 3, 2, stream);
  const double lambda = 2.0;
  ProxOptions opts;
  opts.method = ProxMethod::GD;
  opts.max_grad_evals = 10000;
  opts.inner_lr = 0.05;
  opts.nu = 1e-22;
  opts.lambda = lambda;
  auto envelope = [&](const ParamVector& w) {
    const ParamVector theta = prox_solve(spec, w, b, opts, w).theta;
    return loss(spec, theta, b) + 0.5 * lambda * norm2_sq(sub(theta, w));
  };
  for (int trial = 0; trial < 3; ++trial) {
    ParamVector w = zero_params(spec);
    for (double& v : w.data) v = stream.next_double() - 0.5;
    const ParamVector theta = prox_solve(spec, w, b, opts, w).theta;
    const ParamVector g = envelope_grad(w, theta, lambda);
    const double h = 1e-5;
    for (std::size_t i = 0; i < w.size(); ++i) {
      ParamVector plus = w, minus = w;
      plus.data[i] += h;
      minus.data[i] -= h;
      const double fd = (envelope(plus) - envelope(minus)) / (2.0 * h);
      const double denom = std::max({1e-2, std::fabs(fd), std::fabs(g.data[i])});
      CHECK(std::fabs(fd - g.data[i]) / denom <= 1e-3);
    }
  }
}

TEST_CASE("envelope gradient is lambda-Lipschitz on MLR (with solve slack)") {
  RngStream stream(RngKey{206, RngDomain::DataGen, 0, 0});
  const ModelSpec spec{MlrSpec{3, 2, 0.01}};
  const Batch b = small_batch(25, 3, 2, stream);
  const double lambda = 1.5;
  ProxOptions opts;
  opts.method = ProxMethod::GD;
  opts.max_grad_evals = 10000;
  opts.inner_lr = 0.05;
  opts.nu = 1e-22;
  opts.lambda = lambda;
  for (int trial = 0; trial < 10; ++trial) {
    ParamVector w1 = zero_params(spec), w2 = zero_params(spec);
    for (double& v : w1.data) v = 2.0 * stream.next_double() - 1.0;
    for (double& v : w2.data) v = 2.0 * stream.next_double() - 1.0;
    const ParamVector g1 =
        envelope_grad(w1, prox_solve(spec, w1, b, opts, w1).theta, lambda);
    const ParamVector g2 =
        envelope_grad(w2, prox_solve(spec, w2, b, opts, w2).theta, lambda);
    CHECK(norm2(sub(g1, g2)) <= lambda * norm2(sub(w1, w2)) * (1.0 + 1e-2));
  }
}

TEST_CASE("delta_bound formula and argument errors") {
  CHECK(delta_bound(3.0, 1.0, 0.0, 8, 0.0, CurvatureCase::StronglyConvex) == 0.0);
  CHECK(delta_bound(1.0, 1.0, 4.0, 4, 0.0, CurvatureCase::StronglyConvex) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(delta_bound(3.0, 1.0, 0.0, 5, 2.0, CurvatureCase::NonconvexSmooth) ==
        doctest::Approx(1.0).epsilon(1e-15));
  CHECK_THROWS_AS((void)delta_bound(1.0, 2.0, 1.0, 4, 0.0, CurvatureCase::NonconvexSmooth),
                  std::invalid_argument);
}

TEST_CASE("inexact prox error stays within the delta bound (Monte Carlo)") {
  // Strongly convex quadratic with synthetic per-sample gradient noise of
  // known variance gamma^2; the mean squared distance to the exact prox point
  // over fresh mini-batches must respect the bound (one-sided).
  RngStream stream(RngKey{207, RngDomain::DataGen, 0, 0});
  const std::uint32_t dim = 4;
  const double mu = 1.3;
  const double gamma_sq = 2.0;
  const double lambda = 2.5;
  const std::uint32_t batch = 8;
  const double nu = 1e-10;

  const ModelSpec spec{QuadraticSpec{std::vector<double>(dim, mu),
                                     std::vector<double>(dim, 0.5)}};
  ParamVector w = zero_params(spec);
  for (double& v : w.data) v = 2.0 * stream.next_double() - 1.0;
  ProxOptions closed;
  closed.method = ProxMethod::ClosedForm;
  closed.lambda = lambda;
  const ParamVector exact = prox_solve(spec, w, Batch{}, closed, w).theta;

  ProxOptions opts;
  opts.method = ProxMethod::GD;
  opts.max_grad_evals = 2000;
  opts.inner_lr = 0.8 / (mu + lambda);
  opts.nu = nu;
  opts.lambda = lambda;

  const int trials = 1000;
  double mse = 0.0;
  const double per_coord_std = std::sqrt(gamma_sq / dim);
  for (int trial = 0; trial < trials; ++trial) {
    // Batch-mean noise vector: mean of |D| per-sample N(0, gamma^2/dim I) draws.
    ParamVector noise(w.layout_id, dim, 0.0);
    for (std::uint32_t s = 0; s < batch; ++s) {
      const auto eps = draw_normal(0.0, per_coord_std, dim, stream);
      for (std::uint32_t i = 0; i < dim; ++i) noise.data[i] += eps[i] / batch;
    }
    PenalizedGradFn grad_fn = [&](const ParamVector& theta, ParamVector& out) {
      grad_into(spec, theta, Batch{}, out);
      axpy_inplace(1.0, noise, out);
      for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] += lambda * (theta.data[i] - w.data[i]);
      }
    };
    const ProxResult res = prox_minimize(grad_fn, w, opts, "noisy prox");
    mse += norm2_sq(sub(res.theta, exact)) / trials;
  }
  const double bound =
      delta_bound(lambda, mu, gamma_sq, batch, nu, CurvatureCase::StronglyConvex);
  CHECK(mse <= bound);
}
