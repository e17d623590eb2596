#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "moreaufl/config.hpp"
#include "moreaufl/errors.hpp"
#include "moreaufl/experiment.hpp"

namespace {

int resolve_threads(int flag_value) {
  if (const char* env = std::getenv("MOREAU_FL_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  return flag_value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning simulation engine (pFedMe, FedAvg, Per-FedAvg)"};
  app.require_subcommand(1);

  std::string config_path, out_path, sweep_param, values_csv;
  std::vector<std::string> compare_configs;
  int repeats = 3;
  int threads = 1;
  bool lazy = false;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--threads", threads, "worker threads for per-client parallelism");
    cmd->add_flag("--lazy-clients", lazy,
                  "compute local updates only for sampled clients (results identical)");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "build and serialize a federated dataset");
  gen->add_option("--config", config_path, "experiment config JSON")->required();
  gen->add_option("--out", out_path, "output dataset container path")->required();

  CLI::App* run = app.add_subcommand("run", "train one configuration over repeat seeds");
  run->add_option("--config", config_path, "experiment config JSON")->required();
  run->add_option("--out", out_path, "output directory")->required();
  run->add_option("--repeats", repeats, "number of repeat seeds (seed, seed+1, ...)");
  add_common(run);

  CLI::App* sweep = app.add_subcommand("sweep", "vary one hyperparameter over a value list");
  sweep->add_option("--config", config_path, "base experiment config JSON")->required();
  sweep->add_option("--param", sweep_param, "one of R | K | batch_size | lambda | beta")
      ->required();
  sweep->add_option("--values", values_csv, "comma-separated values")->required();
  sweep->add_option("--out", out_path, "output directory")->required();
  add_common(sweep);

  CLI::App* compare = app.add_subcommand("compare", "run several configs on one dataset");
  compare->add_option("--config", compare_configs, "config JSON (repeatable)")
      ->required()
      ->expected(-1);
  compare->add_option("--out", out_path, "output directory")->required();
  add_common(compare);

  CLI11_PARSE(app, argc, argv);
  threads = resolve_threads(threads);

  try {
    if (gen->parsed()) {
      return moreaufl::cli_gen_data(moreaufl::load_config_file(config_path), out_path);
    }
    if (run->parsed()) {
      moreaufl::FederationConfig config = moreaufl::load_config_file(config_path);
      config.lazy_clients = config.lazy_clients || lazy;
      return moreaufl::cli_run(config, out_path, repeats, threads);
    }
    if (sweep->parsed()) {
      moreaufl::FederationConfig config = moreaufl::load_config_file(config_path);
      config.lazy_clients = config.lazy_clients || lazy;
      std::vector<double> values;
      std::size_t pos = 0;
      while (pos <= values_csv.size()) {
        const std::size_t comma = values_csv.find(',', pos);
        const std::string token =
            values_csv.substr(pos, comma == std::string::npos ? std::string::npos
                                                              : comma - pos);
        if (token.empty()) throw std::invalid_argument("--values: empty element");
        values.push_back(std::stod(token));
        if (comma == std::string::npos) break;
        pos = comma + 1;
      }
      return moreaufl::cli_sweep(config, sweep_param, values, out_path, threads);
    }
    if (compare->parsed()) {
      std::vector<moreaufl::FederationConfig> configs;
      for (const std::string& path : compare_configs) {
        configs.push_back(moreaufl::load_config_file(path));
        configs.back().lazy_clients = configs.back().lazy_clients || lazy;
      }
      return moreaufl::cli_compare(configs, out_path, threads);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const moreaufl::DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
