#include "moreaufl/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "moreaufl/hash.hpp"

namespace moreaufl {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRow = Eigen::Map<const RowMat>;
using MapRowMut = Eigen::Map<RowMat>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;
using MapVecMut = Eigen::Map<Eigen::VectorXd>;

void check_params(const ModelSpec& spec, const ParamVector& params) {
  if (params.layout_id != layout_id(spec) || params.size() != param_count(spec)) {
    throw std::invalid_argument("parameters do not match model layout (expected " +
                                std::to_string(param_count(spec)) + " values)");
  }
}

void check_features(const ModelSpec& spec, const Matrix& x) {
  std::size_t d = 0;
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) d = m->input_dim;
  if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) d = m->input_dim;
  if (const auto* m = std::get_if<QuadraticSpec>(&spec.kind)) {
    (void)m;
    return;  // batch ignored
  }
  if (x.cols != d) {
    throw std::invalid_argument("feature dimension " + std::to_string(x.cols) +
                                " does not match model input dim " + std::to_string(d));
  }
}

void check_batch(const ModelSpec& spec, const Matrix& x,
                 const std::vector<std::uint32_t>& y) {
  if (std::holds_alternative<QuadraticSpec>(spec.kind)) return;
  check_features(spec, x);
  if (x.rows != y.size() || y.empty()) {
    throw std::invalid_argument("batch must have one label per row and at least one row");
  }
}

// Row-wise softmax cross-entropy with the max-shift (log-sum-exp) trick.
// Returns mean loss; if probs != nullptr also writes softmax probabilities.
double cross_entropy(const Eigen::MatrixXd& logits, const std::vector<std::uint32_t>& y,
                     Eigen::MatrixXd* probs) {
  const auto rows = logits.rows();
  const auto cols = logits.cols();
  if (probs) probs->resize(rows, cols);
  double total = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double m = logits.row(i).maxCoeff();
    double z = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) z += std::exp(logits(i, j) - m);
    const double lse = m + std::log(z);
    total += lse - logits(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)]));
    if (probs) {
      for (Eigen::Index j = 0; j < cols; ++j) {
        (*probs)(i, j) = std::exp(logits(i, j) - lse);
      }
    }
  }
  return total / static_cast<double>(rows);
}

}  // namespace

std::size_t param_count(const ModelSpec& spec) {
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) {
    return static_cast<std::size_t>(m->classes) * m->input_dim + m->classes;
  }
  if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) {
    return static_cast<std::size_t>(m->hidden) * m->input_dim + m->hidden +
           static_cast<std::size_t>(m->classes) * m->hidden + m->classes;
  }
  return std::get<QuadraticSpec>(spec.kind).center.size();
}

std::uint64_t layout_id(const ModelSpec& spec) {
  Fnv64 h;
  auto add_u32 = [&h](std::uint32_t v) { h.update(&v, sizeof(v)); };
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) {
    add_u32(1);
    add_u32(m->input_dim);
    add_u32(m->classes);
  } else if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) {
    add_u32(2);
    add_u32(m->input_dim);
    add_u32(m->hidden);
    add_u32(m->classes);
  } else {
    add_u32(3);
    add_u32(static_cast<std::uint32_t>(std::get<QuadraticSpec>(spec.kind).center.size()));
  }
  return h.value();
}

ParamVector zero_params(const ModelSpec& spec) {
  return ParamVector(layout_id(spec), param_count(spec), 0.0);
}

ParamVector init_params(const ModelSpec& spec, RngStream& init_stream) {
  ParamVector p = zero_params(spec);
  if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) {
    const std::size_t n1 = static_cast<std::size_t>(m->hidden) * m->input_dim + m->hidden;
    const double bound1 = 1.0 / std::sqrt(static_cast<double>(m->input_dim));
    const double bound2 = 1.0 / std::sqrt(static_cast<double>(m->hidden));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double bound = i < n1 ? bound1 : bound2;
      p.data[i] = bound * (2.0 * init_stream.next_double() - 1.0);
    }
  }
  return p;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Matrix& x,
            const std::vector<std::uint32_t>& y) {
  check_params(spec, params);
  check_batch(spec, x, y);
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) {
    MapRow X(x.values.data(), static_cast<Eigen::Index>(x.rows),
             static_cast<Eigen::Index>(x.cols));
    MapRow W(params.data.data(), m->classes, m->input_dim);
    MapVec b(params.data.data() + static_cast<std::size_t>(m->classes) * m->input_dim,
             m->classes);
    Eigen::MatrixXd logits = X * W.transpose();
    logits.rowwise() += b.transpose();
    return cross_entropy(logits, y, nullptr) + 0.5 * m->reg * norm2_sq(params);
  }
  if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) {
    MapRow X(x.values.data(), static_cast<Eigen::Index>(x.rows),
             static_cast<Eigen::Index>(x.cols));
    const double* base = params.data.data();
    MapRow W1(base, m->hidden, m->input_dim);
    MapVec b1(base + static_cast<std::size_t>(m->hidden) * m->input_dim, m->hidden);
    const double* base2 = base + static_cast<std::size_t>(m->hidden) * m->input_dim + m->hidden;
    MapRow W2(base2, m->classes, m->hidden);
    MapVec b2(base2 + static_cast<std::size_t>(m->classes) * m->hidden, m->classes);
    Eigen::MatrixXd z1 = X * W1.transpose();
    z1.rowwise() += b1.transpose();
    const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    Eigen::MatrixXd logits = a1 * W2.transpose();
    logits.rowwise() += b2.transpose();
    return cross_entropy(logits, y, nullptr);
  }
  const auto& q = std::get<QuadraticSpec>(spec.kind);
  double acc = 0.0;
  for (std::size_t i = 0; i < q.center.size(); ++i) {
    const double diff = params.data[i] - q.center[i];
    acc += q.curvature[i] * diff * diff;
  }
  return 0.5 * acc;
}

double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  return loss(spec, params, batch.features, batch.labels);
}

void grad_into(const ModelSpec& spec, const ParamVector& params, const Matrix& x,
               const std::vector<std::uint32_t>& y, ParamVector& out) {
  check_params(spec, params);
  check_batch(spec, x, y);
  out.layout_id = params.layout_id;
  out.data.resize(params.size());
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) {
    const auto rows = static_cast<Eigen::Index>(x.rows);
    MapRow X(x.values.data(), rows, static_cast<Eigen::Index>(x.cols));
    MapRow W(params.data.data(), m->classes, m->input_dim);
    MapVec b(params.data.data() + static_cast<std::size_t>(m->classes) * m->input_dim,
             m->classes);
    Eigen::MatrixXd logits = X * W.transpose();
    logits.rowwise() += b.transpose();
    Eigen::MatrixXd probs;
    cross_entropy(logits, y, &probs);
    for (Eigen::Index i = 0; i < rows; ++i) {
      probs(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
    }
    probs /= static_cast<double>(rows);
    MapRowMut gW(out.data.data(), m->classes, m->input_dim);
    MapVecMut gb(out.data.data() + static_cast<std::size_t>(m->classes) * m->input_dim,
                 m->classes);
    gW.noalias() = probs.transpose() * X;
    gb = probs.colwise().sum();
    axpy_inplace(m->reg, params, out);
    return;
  }
  if (const auto* m = std::get_if<Dnn2Spec>(&spec.kind)) {
    const auto rows = static_cast<Eigen::Index>(x.rows);
    MapRow X(x.values.data(), rows, static_cast<Eigen::Index>(x.cols));
    const double* base = params.data.data();
    const std::size_t w1n = static_cast<std::size_t>(m->hidden) * m->input_dim;
    const std::size_t w2n = static_cast<std::size_t>(m->classes) * m->hidden;
    MapRow W1(base, m->hidden, m->input_dim);
    MapVec b1(base + w1n, m->hidden);
    MapRow W2(base + w1n + m->hidden, m->classes, m->hidden);
    MapVec b2(base + w1n + m->hidden + w2n, m->classes);
    Eigen::MatrixXd z1 = X * W1.transpose();
    z1.rowwise() += b1.transpose();
    const Eigen::MatrixXd a1 = z1.cwiseMax(0.0);
    Eigen::MatrixXd logits = a1 * W2.transpose();
    logits.rowwise() += b2.transpose();
    Eigen::MatrixXd probs;
    cross_entropy(logits, y, &probs);
    for (Eigen::Index i = 0; i < rows; ++i) {
      probs(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) -= 1.0;
    }
    probs /= static_cast<double>(rows);
    double* obase = out.data.data();
    MapRowMut gW1(obase, m->hidden, m->input_dim);
    MapVecMut gb1(obase + w1n, m->hidden);
    MapRowMut gW2(obase + w1n + m->hidden, m->classes, m->hidden);
    MapVecMut gb2(obase + w1n + m->hidden + w2n, m->classes);
    gW2.noalias() = probs.transpose() * a1;
    gb2 = probs.colwise().sum();
    Eigen::MatrixXd dz1 = probs * W2;  // rows x hidden
    // ReLU subgradient: 0 at z == 0.
    dz1 = (z1.array() > 0.0).select(dz1, 0.0);
    gW1.noalias() = dz1.transpose() * X;
    gb1 = dz1.colwise().sum();
    return;
  }
  const auto& q = std::get<QuadraticSpec>(spec.kind);
  for (std::size_t i = 0; i < q.center.size(); ++i) {
    out.data[i] = q.curvature[i] * (params.data[i] - q.center[i]);
  }
}

void grad_into(const ModelSpec& spec, const ParamVector& params, const Batch& batch,
               ParamVector& out) {
  grad_into(spec, params, batch.features, batch.labels, out);
}

ParamVector grad(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  ParamVector out;
  grad_into(spec, params, batch.features, batch.labels, out);
  return out;
}

std::vector<std::uint32_t> predict(const ModelSpec& spec, const ParamVector& params,
                                   const Matrix& x) {
  check_params(spec, params);
  check_features(spec, x);
  if (std::holds_alternative<QuadraticSpec>(spec.kind)) {
    throw std::invalid_argument("quadratic oracle has no class scores to predict");
  }
  Eigen::MatrixXd scores;
  MapRow X(x.values.data(), static_cast<Eigen::Index>(x.rows),
           static_cast<Eigen::Index>(x.cols));
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) {
    MapRow W(params.data.data(), m->classes, m->input_dim);
    MapVec b(params.data.data() + static_cast<std::size_t>(m->classes) * m->input_dim,
             m->classes);
    scores = X * W.transpose();
    scores.rowwise() += b.transpose();
  } else {
    const auto& dnn = std::get<Dnn2Spec>(spec.kind);
    const double* base = params.data.data();
    const std::size_t w1n = static_cast<std::size_t>(dnn.hidden) * dnn.input_dim;
    MapRow W1(base, dnn.hidden, dnn.input_dim);
    MapVec b1(base + w1n, dnn.hidden);
    MapRow W2(base + w1n + dnn.hidden, dnn.classes, dnn.hidden);
    MapVec b2(base + w1n + dnn.hidden + static_cast<std::size_t>(dnn.classes) * dnn.hidden,
              dnn.classes);
    Eigen::MatrixXd z1 = X * W1.transpose();
    z1.rowwise() += b1.transpose();
    scores = z1.cwiseMax(0.0) * W2.transpose();
    scores.rowwise() += b2.transpose();
  }
  std::vector<std::uint32_t> labels(x.rows);
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;  // strict: ties keep lowest index
    }
    labels[static_cast<std::size_t>(i)] = static_cast<std::uint32_t>(best);
  }
  return labels;
}

std::size_t count_correct(const ModelSpec& spec, const ParamVector& params,
                          const Matrix& features, const std::vector<std::uint32_t>& labels) {
  const std::vector<std::uint32_t> pred = predict(spec, params, features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (pred[i] == labels[i]) ++correct;
  }
  return correct;
}

std::optional<double> strong_convexity_modulus(const ModelSpec& spec) {
  if (const auto* m = std::get_if<MlrSpec>(&spec.kind)) return m->reg;
  if (const auto* q = std::get_if<QuadraticSpec>(&spec.kind)) {
    double mn = q->curvature.empty() ? 0.0 : q->curvature[0];
    for (double v : q->curvature) mn = std::min(mn, v);
    return mn;
  }
  return std::nullopt;
}

DiversityDiagnostics estimate_diversity(const std::vector<ClientObjective>& clients,
                                        const ParamVector& params, std::uint32_t batch_size,
                                        std::uint32_t n_draws, RngStream& stream) {
  if (clients.empty()) throw std::invalid_argument("estimate_diversity: no clients");
  if (n_draws < 2) throw std::invalid_argument("estimate_diversity: n_draws must be >= 2");
  const std::size_t n_clients = clients.size();
  std::vector<ParamVector> full_grads;
  full_grads.reserve(n_clients);
  for (const ClientObjective& c : clients) {
    ParamVector g;
    grad_into(*c.spec, params, c.data->train_x, c.data->train_y, g);
    full_grads.push_back(std::move(g));
  }

  double gamma_acc = 0.0;
  std::size_t gamma_count = 0;
  Batch batch;
  ParamVector g;
  for (std::size_t i = 0; i < n_clients; ++i) {
    const ClientDataset& c = *clients[i].data;
    const auto n = static_cast<std::uint32_t>(c.train_size());
    const std::uint32_t b = std::min(batch_size, n);
    for (std::uint32_t d = 0; d < n_draws; ++d) {
      gather_batch(c, sample_without_replacement(n, b, stream), batch);
      grad_into(*clients[i].spec, params, batch, g);
      gamma_acc += norm2_sq(sub(g, full_grads[i]));
      ++gamma_count;
    }
  }

  ParamVector mean(params.layout_id, params.size(), 0.0);
  for (const ParamVector& gi : full_grads) axpy_inplace(1.0, gi, mean);
  scale_inplace(1.0 / static_cast<double>(n_clients), mean);
  double sigma_acc = 0.0;
  for (const ParamVector& gi : full_grads) sigma_acc += norm2_sq(sub(gi, mean));

  DiversityDiagnostics out;
  out.gamma_f_sq_hat = gamma_acc / static_cast<double>(gamma_count);
  out.sigma_f_sq_hat = sigma_acc / static_cast<double>(n_clients);
  return out;
}

DiversityDiagnostics estimate_diversity(const ModelSpec& spec, const ParamVector& params,
                                        const FederatedDataset& data,
                                        std::uint32_t batch_size, std::uint32_t n_draws,
                                        RngStream& stream) {
  std::vector<ClientObjective> clients;
  clients.reserve(data.clients.size());
  for (const ClientDataset& c : data.clients) clients.push_back({&spec, &c});
  return estimate_diversity(clients, params, batch_size, n_draws, stream);
}

}  // namespace moreaufl
