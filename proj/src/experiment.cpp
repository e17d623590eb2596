#include "moreaufl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include "moreaufl/errors.hpp"

namespace moreaufl {

namespace {

constexpr const char* kMetricsHeader =
    "round,global_test_acc,personalized_test_acc,global_train_loss,"
    "personalized_train_loss,wall_ms";

std::string metrics_row(const RoundReport& r) {
  std::string row = std::to_string(r.round);
  row += ',';
  row += format_metric(r.global_test_acc);
  row += ',';
  row += format_metric(r.personalized_test_acc);
  row += ',';
  row += format_metric(r.global_train_loss);
  row += ',';
  row += format_metric(r.personalized_train_loss);
  row += ',';
  row += std::to_string(r.wall_ms);
  return row;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd out;
  if (xs.empty()) return out;
  for (double x : xs) out.mean += x;
  out.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
  return out;
}

nlohmann::json to_json(const MeanStd& m) {
  return nlohmann::json{{"mean", m.mean}, {"std", m.std}};
}

std::filesystem::path ensure_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  return dir;
}

struct BuiltExperiment {
  FederatedDataset data;
  ModelSpec spec;
  std::vector<ClientTask> tasks;
  std::string hash;
};

BuiltExperiment build_experiment(const FederationConfig& config) {
  BuiltExperiment b;
  b.data = build_dataset(config);
  b.hash = dataset_hash(b.data);
  b.spec = build_model_spec(config, b.data);
  if (config.sampled > b.data.clients.size()) {
    throw std::invalid_argument("config.sampled_clients: must be <= the dataset's " +
                                std::to_string(b.data.clients.size()) + " clients");
  }
  // Move the per-client data into the tasks; the hash is already taken.
  b.tasks.reserve(b.data.clients.size());
  for (ClientDataset& c : b.data.clients) {
    b.tasks.push_back(ClientTask{b.spec, std::move(c)});
  }
  b.data.clients.clear();
  return b;
}

std::vector<RoundReport> run_one(const BuiltExperiment& built, const FederationConfig& config,
                                 std::uint64_t run_seed, int threads,
                                 const std::filesystem::path& metrics_path) {
  std::ofstream os(metrics_path);
  if (!os) throw std::runtime_error("cannot open for writing: " + metrics_path.string());
  os << kMetricsHeader << '\n';
  os.flush();
  TrainOptions opts = build_train_options(config, run_seed, threads);
  opts.on_report = [&os](const RoundReport& r) {
    os << metrics_row(r) << '\n';
    os.flush();
  };
  return run_training(built.tasks, opts);
}

}  // namespace

std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<RoundReport>& reports) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path.string());
  os << kMetricsHeader << '\n';
  for (const RoundReport& r : reports) os << metrics_row(r) << '\n';
}

RunArtifacts run_experiment(const FederationConfig& config,
                            const std::filesystem::path& out_dir, int repeats, int threads) {
  if (repeats < 1) throw std::invalid_argument("repeats must be >= 1");
  ensure_dir(out_dir);
  const BuiltExperiment built = build_experiment(config);

  RunArtifacts artifacts;
  artifacts.dataset_hash = built.hash;
  for (int rep = 0; rep < repeats; ++rep) {
    const auto run_dir = ensure_dir(out_dir / ("run" + std::to_string(rep)));
    artifacts.repeats.push_back(
        run_one(built, config, config.seed + static_cast<std::uint64_t>(rep), threads,
                run_dir / "metrics.csv"));
  }
  write_metrics_csv(out_dir / "metrics.csv", artifacts.repeats[0]);

  std::vector<double> final_g, final_p, best_g, best_p;
  for (const auto& reports : artifacts.repeats) {
    double bg = 0.0, bp = 0.0;
    for (const RoundReport& r : reports) {
      bg = std::max(bg, r.global_test_acc);
      bp = std::max(bp, r.personalized_test_acc);
    }
    final_g.push_back(reports.back().global_test_acc);
    final_p.push_back(reports.back().personalized_test_acc);
    best_g.push_back(bg);
    best_p.push_back(bp);
  }
  nlohmann::json summary{{"config", config.raw},
                         {"dataset_hash", artifacts.dataset_hash},
                         {"repeats", repeats},
                         {"final_global_acc", to_json(mean_std(final_g))},
                         {"final_personalized_acc", to_json(mean_std(final_p))},
                         {"best_global_acc", to_json(mean_std(best_g))},
                         {"best_personalized_acc", to_json(mean_std(best_p))}};
  std::ofstream os(out_dir / "summary.json");
  os << summary.dump(2) << '\n';
  return artifacts;
}

int cli_run(const FederationConfig& config, const std::filesystem::path& out_dir,
            int repeats, int threads) {
  try {
    const RunArtifacts artifacts = run_experiment(config, out_dir, repeats, threads);
    const auto& last = artifacts.repeats[0].back();
    std::cout << "run complete: " << to_string(config.algorithm)
              << " dataset_hash=" << artifacts.dataset_hash
              << " final_global_acc=" << format_metric(last.global_test_acc)
              << " final_personalized_acc=" << format_metric(last.personalized_test_acc)
              << '\n';
    return 0;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << " (partial metrics preserved)\n";
    return 1;
  }
}

int cli_sweep(const FederationConfig& base, const std::string& param,
              const std::vector<double>& values, const std::filesystem::path& out_dir,
              int threads) {
  if (values.empty()) throw std::invalid_argument("sweep: values must be nonempty");
  ensure_dir(out_dir);

  std::ofstream sweep_csv(out_dir / "sweep.csv");
  if (!sweep_csv) throw std::runtime_error("cannot open sweep.csv for writing");
  sweep_csv << "param,value," << kMetricsHeader << '\n';

  std::string shared_hash;
  for (double value : values) {
    FederationConfig config = base;
    apply_sweep_value(config, param, value);
    const std::string cell = param + "_" + format_metric(value);
    const RunArtifacts artifacts =
        run_experiment(config, out_dir / cell, /*repeats=*/1, threads);
    if (shared_hash.empty()) {
      shared_hash = artifacts.dataset_hash;
    } else if (shared_hash != artifacts.dataset_hash) {
      // Dataset construction ignores every swept parameter, so this is a bug.
      throw std::logic_error("sweep cells disagree on the dataset hash");
    }
    for (const RoundReport& r : artifacts.repeats[0]) {
      sweep_csv << param << ',' << format_metric(value) << ',' << metrics_row(r) << '\n';
    }
  }
  std::cout << "sweep complete: " << param << " over " << values.size()
            << " values, dataset_hash=" << shared_hash << '\n';
  return 0;
}

int cli_compare(const std::vector<FederationConfig>& configs,
                const std::filesystem::path& out_dir, int threads) {
  if (configs.empty()) throw std::invalid_argument("compare: need at least one config");
  const nlohmann::json& dataset_spec = configs[0].raw.at("dataset");
  for (const FederationConfig& c : configs) {
    if (c.raw.at("dataset") != dataset_spec || c.data_seed != configs[0].data_seed) {
      throw std::invalid_argument(
          "compare: all configs must share the dataset spec and data seed");
    }
    if (c.rounds != configs[0].rounds || c.eval_every != configs[0].eval_every) {
      throw std::invalid_argument(
          "compare: all configs must share rounds and eval_every so rows align");
    }
  }
  ensure_dir(out_dir);

  std::vector<std::string> labels;
  std::map<std::string, int> used;
  for (const FederationConfig& c : configs) {
    std::string label = to_string(c.algorithm);
    const int n = used[label]++;
    if (n > 0) label += "_" + std::to_string(n + 1);
    labels.push_back(label);
  }

  std::vector<RunArtifacts> results;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    results.push_back(run_experiment(configs[i], out_dir / labels[i], 1, threads));
    if (results[i].dataset_hash != results[0].dataset_hash) {
      throw std::invalid_argument("compare: dataset hash mismatch between runs");
    }
  }

  std::ofstream os(out_dir / "compare.csv");
  os << "round";
  for (const std::string& label : labels) {
    os << ',' << label << "_global_test_acc," << label << "_personalized_test_acc,"
       << label << "_global_train_loss," << label << "_personalized_train_loss";
  }
  os << '\n';
  const std::size_t rows = results[0].repeats[0].size();
  for (std::size_t r = 0; r < rows; ++r) {
    os << results[0].repeats[0][r].round;
    for (const RunArtifacts& res : results) {
      const RoundReport& rep = res.repeats[0][r];
      os << ',' << format_metric(rep.global_test_acc) << ','
         << format_metric(rep.personalized_test_acc) << ','
         << format_metric(rep.global_train_loss) << ','
         << format_metric(rep.personalized_train_loss);
    }
    os << '\n';
  }

  // Final-accuracy ranking; pFedMe contributes both its personalized and
  // global models.
  std::vector<std::pair<std::string, double>> ranking;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    const RoundReport& last = results[i].repeats[0].back();
    if (configs[i].algorithm == AlgorithmName::PFedMe) {
      ranking.emplace_back(labels[i] + "-pm", last.personalized_test_acc);
      ranking.emplace_back(labels[i] + "-gm", last.global_test_acc);
    } else if (configs[i].algorithm == AlgorithmName::PerFedAvg) {
      ranking.emplace_back(labels[i] + "-pm", last.personalized_test_acc);
    } else {
      ranking.emplace_back(labels[i] + "-gm", last.global_test_acc);
    }
  }
  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::ofstream rank_os(out_dir / "ranking.csv");
  rank_os << "rank,model,final_test_acc\n";
  std::cout << "ranking (final test accuracy):\n";
  for (std::size_t i = 0; i < ranking.size(); ++i) {
    rank_os << (i + 1) << ',' << ranking[i].first << ','
            << format_metric(ranking[i].second) << '\n';
    std::cout << "  " << (i + 1) << ". " << ranking[i].first << "  "
              << format_metric(ranking[i].second) << '\n';
  }
  return 0;
}

int cli_gen_data(const FederationConfig& config, const std::filesystem::path& out_path) {
  const FederatedDataset data = build_dataset(config);
  if (out_path.has_parent_path()) ensure_dir(out_path.parent_path());
  save_dataset(data, out_path);
  std::cout << "dataset written to " << out_path.string() << '\n'
            << "content hash: " << dataset_hash(data) << '\n'
            << "client sizes (train+test):\n";
  std::size_t total = 0;
  for (std::size_t i = 0; i < data.clients.size(); ++i) {
    const std::size_t n = data.clients[i].train_size() + data.clients[i].test_size();
    total += n;
    std::cout << "  client " << i << ": " << n << '\n';
  }
  std::cout << "total assigned: " << total << '\n';
  return 0;
}

}  // namespace moreaufl
