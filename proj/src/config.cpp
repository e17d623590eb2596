#include "moreaufl/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

namespace moreaufl {

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& message) {
  throw std::invalid_argument("config." + field + ": " + message);
}

const nlohmann::json& require(const nlohmann::json& doc, const std::string& field) {
  const auto it = doc.find(field);
  if (it == doc.end()) fail(field, "missing required field");
  return *it;
}

template <typename T>
T get_number(const nlohmann::json& doc, const std::string& field, T fallback,
             bool required = false) {
  const auto it = doc.find(field);
  if (it == doc.end()) {
    if (required) fail(field, "missing required field");
    return fallback;
  }
  if (!it->is_number()) fail(field, "expected a number");
  return it->get<T>();
}

std::string get_string(const nlohmann::json& doc, const std::string& field) {
  const auto& v = require(doc, field);
  if (!v.is_string()) fail(field, "expected a string");
  return v.get<std::string>();
}

bool get_bool(const nlohmann::json& doc, const std::string& field, bool fallback) {
  const auto it = doc.find(field);
  if (it == doc.end()) return fallback;
  if (!it->is_boolean()) fail(field, "expected a boolean");
  return it->get<bool>();
}

DatasetSource parse_dataset(const nlohmann::json& doc) {
  const std::string kind = get_string(doc, "kind");
  if (kind == "mnist_partition") {
    MnistPartitionSource src;
    src.images_train = get_string(doc, "images_train");
    src.labels_train = get_string(doc, "labels_train");
    src.images_test = get_string(doc, "images_test");
    src.labels_test = get_string(doc, "labels_test");
    src.options.n_clients = get_number<std::uint32_t>(doc, "n_clients", 20);
    src.options.labels_per_client = get_number<std::uint32_t>(doc, "labels_per_client", 2);
    src.options.size_min = get_number<std::uint32_t>(doc, "size_min", 1165);
    src.options.size_max = get_number<std::uint32_t>(doc, "size_max", 3834);
    return src;
  }
  if (kind == "synthetic") {
    SyntheticSource src;
    src.params.alpha_bar = get_number<double>(doc, "alpha_bar", 0.5);
    src.params.beta_bar = get_number<double>(doc, "beta_bar", 0.5);
    src.params.n_clients = get_number<std::uint32_t>(doc, "n_clients", 100);
    src.params.feature_dim = get_number<std::uint32_t>(doc, "d", 60);
    src.params.num_classes = get_number<std::uint32_t>(doc, "classes", 10);
    src.params.size_min = get_number<std::uint32_t>(doc, "size_min", 250);
    src.params.size_max = get_number<std::uint32_t>(doc, "size_max", 25810);
    if (src.params.size_min < 1 || src.params.size_max < src.params.size_min) {
      fail("dataset.size_min", "need 1 <= size_min <= size_max");
    }
    return src;
  }
  if (kind == "file") {
    return FileSource{get_string(doc, "path")};
  }
  fail("dataset.kind", "expected one of mnist_partition | synthetic | file, got \"" + kind +
                           "\"");
}

}  // namespace

std::string to_string(AlgorithmName name) {
  switch (name) {
    case AlgorithmName::PFedMe:
      return "pfedme";
    case AlgorithmName::FedAvg:
      return "fedavg";
    case AlgorithmName::PerFedAvg:
      return "perfedavg";
  }
  return "?";
}

std::uint32_t FederationConfig::n_clients() const {
  if (const auto* m = std::get_if<MnistPartitionSource>(&dataset)) {
    return m->options.n_clients;
  }
  if (const auto* s = std::get_if<SyntheticSource>(&dataset)) return s->params.n_clients;
  return 0;  // file-backed: known after loading
}

FederationConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config: expected a JSON object");
  FederationConfig c;
  c.raw = doc;

  const std::string algorithm = get_string(doc, "algorithm");
  if (algorithm == "pfedme") {
    c.algorithm = AlgorithmName::PFedMe;
  } else if (algorithm == "fedavg") {
    c.algorithm = AlgorithmName::FedAvg;
  } else if (algorithm == "perfedavg") {
    c.algorithm = AlgorithmName::PerFedAvg;
  } else {
    fail("algorithm", "expected one of pfedme | fedavg | perfedavg, got \"" + algorithm +
                          "\"");
  }

  const auto& model = require(doc, "model");
  if (!model.is_object()) fail("model", "expected an object");
  c.model_kind = get_string(model, "kind");
  if (c.model_kind != "mlr" && c.model_kind != "dnn2") {
    fail("model.kind", "expected mlr | dnn2, got \"" + c.model_kind + "\"");
  }
  c.hidden = get_number<std::uint32_t>(model, "hidden", 100);
  c.reg = get_number<double>(model, "reg", 1e-3);
  if (c.reg < 0.0) fail("model.reg", "must be >= 0");
  if (c.model_kind == "dnn2" && c.hidden < 1) fail("model.hidden", "must be >= 1");

  const auto& dataset = require(doc, "dataset");
  if (!dataset.is_object()) fail("dataset", "expected an object");
  c.dataset = parse_dataset(dataset);

  c.sampled = get_number<std::uint32_t>(doc, "sampled_clients", 0, true);
  c.rounds = get_number<std::uint32_t>(doc, "rounds", 0, true);
  c.local_rounds = get_number<std::uint32_t>(doc, "local_rounds", 0, true);
  c.k_inner = get_number<std::uint32_t>(doc, "k_inner", 5);
  c.batch_size = get_number<std::uint32_t>(doc, "batch_size", 20);
  c.eval_every = get_number<std::uint32_t>(doc, "eval_every", 1);
  c.lambda = get_number<double>(doc, "lambda", 15.0);
  c.eta = get_number<double>(doc, "eta", 0.0, true);
  c.beta = get_number<double>(doc, "beta", 1.0);
  c.nu = get_number<double>(doc, "nu", 0.0);
  c.inner_lr = get_number<double>(doc, "inner_lr", 0.1);
  c.alpha_hat = get_number<double>(doc, "alpha_hat", 0.01);
  c.beta_hat = get_number<double>(doc, "beta_hat", 0.01);
  const auto hessian = doc.find("hessian_mode");
  if (hessian != doc.end()) {
    const std::string mode = get_string(doc, "hessian_mode");
    if (mode == "hvp") {
      c.hessian_hvp = true;
    } else if (mode == "first_order") {
      c.hessian_hvp = false;
    } else {
      fail("hessian_mode", "expected first_order | hvp, got \"" + mode + "\"");
    }
  }
  c.seed = get_number<std::uint64_t>(doc, "seed", 1);
  c.data_seed = get_number<std::uint64_t>(doc, "data_seed", c.seed);
  c.lazy_clients = get_bool(doc, "lazy_clients", false);

  if (c.rounds < 1) fail("rounds", "must be >= 1");
  if (c.local_rounds < 1) fail("local_rounds", "must be >= 1");
  if (c.k_inner < 1) fail("k_inner", "must be >= 1");
  if (c.batch_size < 1) fail("batch_size", "must be >= 1");
  if (c.eval_every < 1) fail("eval_every", "must be >= 1");
  if (c.sampled < 1) fail("sampled_clients", "must be >= 1");
  const std::uint32_t n = c.n_clients();
  if (n > 0 && c.sampled > n) {
    fail("sampled_clients", "must be <= the dataset's " + std::to_string(n) + " clients");
  }
  if (c.lambda <= 0.0) fail("lambda", "must be > 0");
  if (c.eta <= 0.0) fail("eta", "must be > 0");
  if (c.beta < 0.0) fail("beta", "must be >= 0");
  if (c.nu < 0.0) fail("nu", "must be >= 0");
  if (c.inner_lr <= 0.0) fail("inner_lr", "must be > 0");
  if (c.algorithm == AlgorithmName::PerFedAvg && (c.alpha_hat <= 0.0 || c.beta_hat <= 0.0)) {
    fail("alpha_hat", "per-fedavg rates must be > 0");
  }
  return c;
}

FederationConfig load_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config: " + path.string());
  nlohmann::json doc;
  try {
    is >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

FederatedDataset build_dataset(const FederationConfig& config) {
  if (const auto* m = std::get_if<MnistPartitionSource>(&config.dataset)) {
    const IdxTensor train_images = load_idx_file(m->images_train);
    const IdxTensor train_labels = load_idx_file(m->labels_train);
    const IdxTensor test_images = load_idx_file(m->images_test);
    const IdxTensor test_labels = load_idx_file(m->labels_test);
    // Full pool: official train and test files concatenated, re-split per client.
    IdxTensor images = train_images;
    images.dims[0] += test_images.dims[0];
    images.data.insert(images.data.end(), test_images.data.begin(), test_images.data.end());
    IdxTensor labels = train_labels;
    labels.dims[0] += test_labels.dims[0];
    labels.data.insert(labels.data.end(), test_labels.data.begin(), test_labels.data.end());
    return partition_mnist(images, labels, m->options, config.data_seed).dataset;
  }
  if (const auto* s = std::get_if<SyntheticSource>(&config.dataset)) {
    return generate_synthetic(s->params, config.data_seed);
  }
  return load_dataset(std::get<FileSource>(config.dataset).path);
}

ModelSpec build_model_spec(const FederationConfig& config, const FederatedDataset& data) {
  if (config.model_kind == "mlr") {
    return ModelSpec{MlrSpec{data.feature_dim, data.num_classes, config.reg}};
  }
  return ModelSpec{Dnn2Spec{data.feature_dim, config.hidden, data.num_classes}};
}

AlgorithmKind build_algorithm(const FederationConfig& config) {
  switch (config.algorithm) {
    case AlgorithmName::PFedMe: {
      PFedMeParams p;
      p.lambda = config.lambda;
      p.eta = config.eta;
      p.k_inner = static_cast<int>(config.k_inner);
      p.inner_lr = config.inner_lr;
      p.nu = config.nu;
      return p;
    }
    case AlgorithmName::FedAvg:
      return FedAvgParams{config.eta};
    case AlgorithmName::PerFedAvg: {
      PerFedAvgParams p;
      p.alpha_hat = config.alpha_hat;
      p.beta_hat = config.beta_hat;
      p.hessian = config.hessian_hvp ? PerFedAvgParams::Hessian::HVP
                                     : PerFedAvgParams::Hessian::FirstOrder;
      return p;
    }
  }
  throw std::logic_error("unreachable");
}

TrainOptions build_train_options(const FederationConfig& config, std::uint64_t run_seed,
                                 int threads) {
  TrainOptions opts;
  opts.algorithm = build_algorithm(config);
  opts.rounds = config.rounds;
  opts.local_rounds = config.local_rounds;
  opts.sampled = config.sampled;
  opts.beta = config.beta;
  opts.batch_size = config.batch_size;
  opts.eval_every = config.eval_every;
  opts.seed = run_seed;
  opts.threads = threads;
  opts.lazy_clients = config.lazy_clients;
  return opts;
}

void apply_sweep_value(FederationConfig& config, const std::string& param, double value) {
  auto as_count = [&](const char* name) {
    if (value < 1.0 || value != std::floor(value)) {
      throw std::invalid_argument(std::string("sweep ") + name +
                                  ": values must be positive integers");
    }
    return static_cast<std::uint32_t>(value);
  };
  if (param == "R") {
    config.local_rounds = as_count("R");
  } else if (param == "K") {
    config.k_inner = as_count("K");
  } else if (param == "batch_size") {
    config.batch_size = as_count("batch_size");
  } else if (param == "lambda") {
    if (value <= 0.0) throw std::invalid_argument("sweep lambda: values must be > 0");
    config.lambda = value;
  } else if (param == "beta") {
    if (value < 0.0) throw std::invalid_argument("sweep beta: values must be >= 0");
    config.beta = value;
  } else {
    throw std::invalid_argument("sweep param must be one of R | K | batch_size | lambda | beta");
  }
  config.raw[param == "R" ? "local_rounds"
                          : param == "K" ? "k_inner" : param] = value;
}

}  // namespace moreaufl
