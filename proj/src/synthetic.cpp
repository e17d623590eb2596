#include "moreaufl/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace moreaufl {

SyntheticGenResult generate_synthetic_with_models(const SyntheticParams& params,
                                                  std::uint64_t seed) {
  if (params.alpha_bar < 0.0 || params.beta_bar < 0.0) {
    throw std::invalid_argument("generate_synthetic: alpha_bar and beta_bar must be >= 0");
  }
  if (params.size_min < 1 || params.size_max < params.size_min || params.n_clients < 1) {
    throw std::invalid_argument("generate_synthetic: invalid sizes");
  }
  const std::uint32_t d = params.feature_dim;
  const std::uint32_t classes = params.num_classes;

  FederatedDataset fd;
  fd.feature_dim = d;
  fd.num_classes = classes;
  fd.data_seed = seed;
  nlohmann::json desc{{"kind", "synthetic"},       {"alpha_bar", params.alpha_bar},
                      {"beta_bar", params.beta_bar}, {"n_clients", params.n_clients},
                      {"d", d},                    {"classes", classes},
                      {"size_min", params.size_min}, {"size_max", params.size_max},
                      {"seed", seed}};
  fd.builder_desc = desc.dump();
  fd.clients.resize(params.n_clients);

  SyntheticGenResult result;
  result.models.resize(params.n_clients);

  // Per-coordinate feature stddev: covariance diag(j^-1.2), j = 1..d.
  std::vector<double> feat_std(d);
  for (std::uint32_t j = 0; j < d; ++j) {
    feat_std[j] = std::pow(static_cast<double>(j + 1), -0.6);
  }

  for (std::uint32_t k = 0; k < params.n_clients; ++k) {
    RngStream stream(RngKey{seed, RngDomain::DataGen, k, 0});

    // Sample count: lognormal power-law surrogate, clipped.
    const double raw = std::exp(draw_normal(4.0, 2.0, 1, stream)[0]) + 50.0;
    const std::uint32_t n = std::clamp(static_cast<std::uint32_t>(std::llround(
                                           std::min(raw, 4.0e9))),
                                       params.size_min, params.size_max);

    const double u_k = draw_normal(0.0, params.alpha_bar, 1, stream)[0];
    const std::vector<double> w =
        draw_normal(u_k, 1.0, static_cast<std::size_t>(classes) * d, stream);
    const std::vector<double> b = draw_normal(u_k, 1.0, classes, stream);
    result.models[k] = SyntheticClientModel{w, b};

    const double big_b = draw_normal(0.0, params.beta_bar, 1, stream)[0];
    const std::vector<double> v = draw_normal(big_b, 1.0, d, stream);

    Matrix x(n, d);
    std::vector<std::uint32_t> y(n);
    std::vector<double> noise(d);
    for (std::uint32_t s = 0; s < n; ++s) {
      fill_normal(0.0, 1.0, noise, stream);
      double* row = x.row(s);
      for (std::uint32_t j = 0; j < d; ++j) row[j] = v[j] + feat_std[j] * noise[j];
      // y = argmax(W x + b), fixed accumulation order.
      std::uint32_t best = 0;
      double best_score = 0.0;
      for (std::uint32_t c = 0; c < classes; ++c) {
        double score = b[c];
        const double* wrow = w.data() + static_cast<std::size_t>(c) * d;
        for (std::uint32_t j = 0; j < d; ++j) score += wrow[j] * row[j];
        if (c == 0 || score > best_score) {
          best = c;
          best_score = score;
        }
      }
      y[s] = best;
    }

    // 75/25 split.
    RngStream split_stream(RngKey{seed, RngDomain::Split, k, 0});
    const auto order = random_permutation(n, split_stream);
    const std::uint32_t n_test = std::max<std::uint32_t>(
        1, static_cast<std::uint32_t>(std::llround(0.25 * n)));
    ClientDataset& c = fd.clients[k];
    c.test_x = Matrix(n_test, d);
    c.test_y.resize(n_test);
    c.train_x = Matrix(n - n_test, d);
    c.train_y.resize(n - n_test);
    for (std::uint32_t s = 0; s < n; ++s) {
      const std::uint32_t src = order[s];
      if (s < n_test) {
        std::copy_n(x.row(src), d, c.test_x.row(s));
        c.test_y[s] = y[src];
      } else {
        std::copy_n(x.row(src), d, c.train_x.row(s - n_test));
        c.train_y[s - n_test] = y[src];
      }
    }
  }
  result.dataset = std::move(fd);
  return result;
}

FederatedDataset generate_synthetic(const SyntheticParams& params, std::uint64_t seed) {
  return generate_synthetic_with_models(params, seed).dataset;
}

}  // namespace moreaufl

