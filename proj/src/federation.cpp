#include "moreaufl/federation.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>

#include "moreaufl/errors.hpp"

namespace moreaufl {

namespace {

// Fork-join over [0, n) with deterministic results: every index writes only
// its own slot; the lowest-index exception wins.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
  }
}

void check_finite_local(const ParamVector& w, std::uint32_t client, std::uint32_t t,
                        std::uint32_t r) {
  if (!is_finite(w)) {
    throw DivergenceError("client " + std::to_string(client) + ", round " +
                          std::to_string(t) + ", local round " + std::to_string(r) +
                          ": non-finite local model");
  }
}

}  // namespace

std::uint32_t batches_per_local_round(const AlgorithmKind& algorithm) {
  if (std::holds_alternative<PerFedAvgParams>(algorithm)) {
    return std::get<PerFedAvgParams>(algorithm).hessian == PerFedAvgParams::Hessian::HVP ? 3
                                                                                         : 2;
  }
  return 1;
}

ClientState local_update_pfedme(ClientState client, const LocalUpdateContext& ctx,
                                const PFedMeParams& params) {
  ProxOptions prox_opts;
  prox_opts.method = params.method;
  prox_opts.max_grad_evals = params.k_inner;
  prox_opts.inner_lr = params.inner_lr;
  prox_opts.nu = params.nu;
  prox_opts.lambda = params.lambda;

  Batch batch;
  for (std::uint32_t r = 0; r < ctx.local_rounds; ++r) {
    const std::uint64_t m =
        static_cast<std::uint64_t>(ctx.global_round) * ctx.local_rounds + r;
    ctx.sampler->take(*ctx.data, m, ctx.batch_size, batch);
    ProxResult pr;
    try {
      pr = prox_solve(*ctx.spec, client.local_w, batch, prox_opts, client.local_w);
    } catch (const DivergenceError& e) {
      throw DivergenceError("client " + std::to_string(client.id) + ", round " +
                            std::to_string(ctx.global_round) + ", local round " +
                            std::to_string(r) + ": " + e.what());
    }
    // w <- w - eta * lambda * (w - theta_tilde)
    const ParamVector g = envelope_grad(client.local_w, pr.theta, params.lambda);
    axpy_inplace(-params.eta, g, client.local_w);
    check_finite_local(client.local_w, client.id, ctx.global_round, r);
    client.personalized_theta = std::move(pr.theta);
  }
  return client;
}

ClientState local_update_fedavg(ClientState client, const LocalUpdateContext& ctx,
                                const FedAvgParams& params) {
  Batch batch;
  ParamVector g;
  for (std::uint32_t r = 0; r < ctx.local_rounds; ++r) {
    const std::uint64_t m =
        static_cast<std::uint64_t>(ctx.global_round) * ctx.local_rounds + r;
    ctx.sampler->take(*ctx.data, m, ctx.batch_size, batch);
    grad_into(*ctx.spec, client.local_w, batch, g);
    if (!is_finite(g)) {
      throw DivergenceError("client " + std::to_string(client.id) + ", round " +
                            std::to_string(ctx.global_round) + ", local round " +
                            std::to_string(r) + ": non-finite gradient");
    }
    axpy_inplace(-params.eta, g, client.local_w);
    check_finite_local(client.local_w, client.id, ctx.global_round, r);
  }
  return client;
}

ClientState local_update_perfedavg(ClientState client, const LocalUpdateContext& ctx,
                                   const PerFedAvgParams& params) {
  if (params.alpha_hat < 0.0 || params.beta_hat <= 0.0) {
    throw std::invalid_argument("per-fedavg rates must be positive");
  }
  const bool hvp = params.hessian == PerFedAvgParams::Hessian::HVP;
  const std::uint32_t per_round = hvp ? 3 : 2;
  Batch inner_batch, outer_batch, hess_batch;
  ParamVector g1, g2;
  for (std::uint32_t r = 0; r < ctx.local_rounds; ++r) {
    const std::uint64_t base =
        (static_cast<std::uint64_t>(ctx.global_round) * ctx.local_rounds + r) * per_round;
    ctx.sampler->take(*ctx.data, base, ctx.batch_size, inner_batch);
    ctx.sampler->take(*ctx.data, base + 1, ctx.batch_size, outer_batch);

    grad_into(*ctx.spec, client.local_w, inner_batch, g1);
    const ParamVector theta = axpy(-params.alpha_hat, g1, client.local_w);
    grad_into(*ctx.spec, theta, outer_batch, g2);
    if (!is_finite(g1) || !is_finite(g2)) {
      throw DivergenceError("client " + std::to_string(client.id) + ", round " +
                            std::to_string(ctx.global_round) + ", local round " +
                            std::to_string(r) + ": non-finite gradient");
    }

    if (!hvp) {
      axpy_inplace(-params.beta_hat, g2, client.local_w);
    } else {
      ctx.sampler->take(*ctx.data, base + 2, ctx.batch_size, hess_batch);
      ParamVector meta_grad = g2;
      const double v_norm = norm2(g2);
      if (v_norm > 0.0) {
        const double h = 1e-4 * (1.0 + norm2(client.local_w));
        const ParamVector unit = scaled(1.0 / v_norm, g2);
        ParamVector gp, gm;
        grad_into(*ctx.spec, axpy(h, unit, client.local_w), hess_batch, gp);
        grad_into(*ctx.spec, axpy(-h, unit, client.local_w), hess_batch, gm);
        // Hv ~= (g(w + h u) - g(w - h u)) * ||v|| / (2h)
        ParamVector hv = sub(gp, gm);
        scale_inplace(v_norm / (2.0 * h), hv);
        axpy_inplace(-params.alpha_hat, hv, meta_grad);
      }
      axpy_inplace(-params.beta_hat, meta_grad, client.local_w);
    }
    check_finite_local(client.local_w, client.id, ctx.global_round, r);
    client.personalized_theta = theta;
  }
  return client;
}

ServerState aggregate(ServerState server, const std::vector<const ParamVector*>& locals,
                      double beta) {
  if (locals.empty()) throw std::invalid_argument("aggregate: empty set of local models");
  ParamVector mean(server.global_w.layout_id, server.global_w.size(), 0.0);
  for (const ParamVector* w : locals) {
    axpy_inplace(1.0, *w, mean);
  }
  scale_inplace(1.0 / static_cast<double>(locals.size()), mean);
  scale_inplace(1.0 - beta, server.global_w);
  axpy_inplace(beta, mean, server.global_w);
  server.round += 1;
  return server;
}

namespace {

ClientState run_local_update(ClientState state, const LocalUpdateContext& ctx,
                             const AlgorithmKind& algorithm) {
  if (const auto* p = std::get_if<PFedMeParams>(&algorithm)) {
    return local_update_pfedme(std::move(state), ctx, *p);
  }
  if (const auto* p = std::get_if<FedAvgParams>(&algorithm)) {
    return local_update_fedavg(std::move(state), ctx, *p);
  }
  return local_update_perfedavg(std::move(state), ctx,
                                std::get<PerFedAvgParams>(algorithm));
}

struct EvalAccumulator {
  std::size_t test_correct = 0;
  std::size_t test_correct_personalized = 0;
  double train_loss = 0.0;               // sum over samples
  double train_loss_personalized = 0.0;  // sum over samples
};

RoundReport evaluate_round(std::uint32_t round, const ParamVector& w,
                           const std::vector<ClientTask>& tasks, const TrainOptions& opts,
                           std::uint64_t wall_ms) {
  const std::size_t n = tasks.size();
  std::vector<EvalAccumulator> acc(n);
  const bool classifier = !std::holds_alternative<QuadraticSpec>(tasks[0].spec.kind);

  parallel_for(n, opts.threads, [&](std::size_t i) {
    const ClientTask& task = tasks[i];
    EvalAccumulator& a = acc[i];
    const double base_loss =
        loss(task.spec, w, task.data.train_x, task.data.train_y) *
        static_cast<double>(task.data.train_size());
    a.train_loss = base_loss;

    // Personalized model for this evaluation.
    ParamVector personalized = w;
    if (const auto* p = std::get_if<PFedMeParams>(&opts.algorithm)) {
      ProxOptions prox_opts;
      prox_opts.method = p->method;
      prox_opts.max_grad_evals = p->k_inner;
      prox_opts.inner_lr = p->inner_lr;
      prox_opts.nu = p->nu;
      prox_opts.lambda = p->lambda;
      const Batch fresh = eval_batch(task.data, opts.batch_size, opts.seed,
                                     static_cast<std::uint32_t>(i), round);
      personalized = prox_solve(task.spec, w, fresh, prox_opts, w).theta;
    } else if (const auto* p = std::get_if<PerFedAvgParams>(&opts.algorithm)) {
      const Batch fresh = eval_batch(task.data, opts.batch_size, opts.seed,
                                     static_cast<std::uint32_t>(i), round);
      ParamVector g;
      grad_into(task.spec, w, fresh, g);
      personalized = axpy(-p->alpha_hat, g, w);
    }

    if (classifier) {
      a.test_correct = count_correct(task.spec, w, task.data.test_x, task.data.test_y);
      a.test_correct_personalized =
          count_correct(task.spec, personalized, task.data.test_x, task.data.test_y);
    }
    a.train_loss_personalized =
        loss(task.spec, personalized, task.data.train_x, task.data.train_y) *
        static_cast<double>(task.data.train_size());
  });

  std::size_t total_test = 0, total_train = 0, correct = 0, correct_p = 0;
  double loss_sum = 0.0, loss_p_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total_test += tasks[i].data.test_size();
    total_train += tasks[i].data.train_size();
    correct += acc[i].test_correct;
    correct_p += acc[i].test_correct_personalized;
    loss_sum += acc[i].train_loss;
    loss_p_sum += acc[i].train_loss_personalized;
  }
  RoundReport report;
  report.round = round;
  report.global_test_acc =
      classifier && total_test > 0 ? static_cast<double>(correct) / total_test : 0.0;
  report.personalized_test_acc =
      classifier && total_test > 0 ? static_cast<double>(correct_p) / total_test : 0.0;
  report.global_train_loss = loss_sum / static_cast<double>(total_train);
  report.personalized_train_loss = loss_p_sum / static_cast<double>(total_train);
  report.wall_ms = wall_ms;
  return report;
}

}  // namespace

std::vector<RoundReport> run_training(const std::vector<ClientTask>& tasks,
                                      const TrainOptions& opts) {
  const std::size_t n = tasks.size();
  if (n == 0) throw std::invalid_argument("run_training: no clients");
  if (opts.sampled < 1 || opts.sampled > n) {
    throw std::invalid_argument("run_training: need 1 <= S <= N");
  }
  if (opts.rounds < 1 || opts.local_rounds < 1 || opts.batch_size < 1 ||
      opts.eval_every < 1) {
    throw std::invalid_argument("run_training: T, R, batch size, eval cadence must be >= 1");
  }
  const std::uint64_t layout = layout_id(tasks[0].spec);
  for (const ClientTask& t : tasks) {
    if (layout_id(t.spec) != layout) {
      throw std::invalid_argument("run_training: clients must share one parameter layout");
    }
  }

  ParamVector w;
  if (opts.w0.has_value()) {
    w = *opts.w0;
    if (w.layout_id != layout || w.size() != param_count(tasks[0].spec)) {
      throw std::invalid_argument("run_training: w0 does not match the model layout");
    }
  } else {
    RngStream init_stream(RngKey{opts.seed, RngDomain::Init, 0, 0});
    w = init_params(tasks[0].spec, init_stream);
  }

  std::vector<ClientState> states(n);
  std::vector<BatchSampler> samplers;
  samplers.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    states[i].id = static_cast<std::uint32_t>(i);
    states[i].local_w = w;
    samplers.emplace_back(opts.seed, static_cast<std::uint32_t>(i));
  }

  std::vector<RoundReport> reports;
  const auto start = std::chrono::steady_clock::now();
  for (std::uint32_t t = 0; t < opts.rounds; ++t) {
    RngStream sample_stream(RngKey{opts.seed, RngDomain::ClientSample, 0, t});
    const std::vector<std::uint32_t> sampled = sample_without_replacement(
        static_cast<std::uint32_t>(n), opts.sampled, sample_stream);

    std::vector<std::size_t> active;
    if (opts.lazy_clients) {
      active.assign(sampled.begin(), sampled.end());
    } else {
      active.resize(n);
      for (std::size_t i = 0; i < n; ++i) active[i] = i;
    }

    parallel_for(active.size(), opts.threads, [&](std::size_t j) {
      const std::size_t i = active[j];
      LocalUpdateContext ctx;
      ctx.spec = &tasks[i].spec;
      ctx.data = &tasks[i].data;
      ctx.sampler = &samplers[i];
      ctx.batch_size = opts.batch_size;
      ctx.global_round = t;
      ctx.local_rounds = opts.local_rounds;
      states[i].local_w = w;  // w_{i,0} = w_t
      states[i] = run_local_update(std::move(states[i]), ctx, opts.algorithm);
    });

    std::vector<const ParamVector*> locals;
    locals.reserve(sampled.size());
    for (std::uint32_t i : sampled) locals.push_back(&states[i].local_w);
    ServerState server{std::move(w), t};
    server = aggregate(std::move(server), locals, opts.beta);
    w = std::move(server.global_w);

    if ((t + 1) % opts.eval_every == 0 || t + 1 == opts.rounds) {
      const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - start);
      reports.push_back(evaluate_round(t, w, tasks, opts,
                                       static_cast<std::uint64_t>(elapsed.count())));
      if (opts.on_report) opts.on_report(reports.back());
    }
  }
  if (opts.final_w_out != nullptr) *opts.final_w_out = w;
  return reports;
}

std::pair<double, double> sampling_variance_identity_check(
    const std::vector<ParamVector>& grads, std::uint32_t s) {
  const std::uint32_t n = static_cast<std::uint32_t>(grads.size());
  if (n == 0 || s < 1 || s > n) {
    throw std::invalid_argument("sampling_variance_identity_check: need 1 <= S <= N");
  }
  ParamVector mean(grads[0].layout_id, grads[0].size(), 0.0);
  for (const ParamVector& g : grads) axpy_inplace(1.0, g, mean);
  scale_inplace(1.0 / n, mean);

  double rhs = 0.0;
  if (n > 1) {
    double diversity = 0.0;
    for (const ParamVector& g : grads) diversity += norm2_sq(sub(g, mean));
    diversity /= n;
    rhs = (static_cast<double>(n) / s - 1.0) / (n - 1.0) * diversity;
  }

  // Exhaustive enumeration of all C(N, S) subsets in lexicographic order.
  double lhs_sum = 0.0;
  std::size_t subset_count = 0;
  std::vector<std::uint32_t> idx(s);
  for (std::uint32_t i = 0; i < s; ++i) idx[i] = i;
  for (;;) {
    ParamVector subset_mean(grads[0].layout_id, grads[0].size(), 0.0);
    for (std::uint32_t i : idx) axpy_inplace(1.0, grads[i], subset_mean);
    scale_inplace(1.0 / s, subset_mean);
    lhs_sum += norm2_sq(sub(subset_mean, mean));
    ++subset_count;

    // next combination
    int j = static_cast<int>(s) - 1;
    while (j >= 0 && idx[static_cast<std::size_t>(j)] ==
                         n - s + static_cast<std::uint32_t>(j)) {
      --j;
    }
    if (j < 0) break;
    ++idx[static_cast<std::size_t>(j)];
    for (std::uint32_t k = static_cast<std::uint32_t>(j) + 1; k < s; ++k) {
      idx[k] = idx[k - 1] + 1;
    }
  }
  return {lhs_sum / static_cast<double>(subset_count), rhs};
}

}  // namespace moreaufl
