#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "moreaufl/config.hpp"
#include "moreaufl/federation.hpp"

namespace moreaufl {

// Fixed CSV number format: 6 significant digits (round-half-even via the
// runtime's correctly rounded formatting).
std::string format_metric(double v);

void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<RoundReport>& reports);

struct RunArtifacts {
  std::vector<std::vector<RoundReport>> repeats;  // one report list per seed
  std::string dataset_hash;
};

// Runs `repeats` seeds (seed, seed+1, ...) on one dataset built from the
// config; writes run<i>/metrics.csv (streamed row by row; partial output
// survives a divergence abort), metrics.csv (first run) and summary.json.
RunArtifacts run_experiment(const FederationConfig& config,
                            const std::filesystem::path& out_dir, int repeats, int threads);

int cli_run(const FederationConfig& config, const std::filesystem::path& out_dir,
            int repeats, int threads);

// One run per value with a shared dataset; emits per-cell
// <param>_<value>/metrics.csv plus an overlay sweep.csv keyed by
// (param value, round).
int cli_sweep(const FederationConfig& base, const std::string& param,
              const std::vector<double>& values, const std::filesystem::path& out_dir,
              int threads);

// Runs every config on the identical dataset (refuses mismatched dataset
// specs/seeds); emits compare.csv with one column group per run and a final
// accuracy ranking (ranking.csv + stdout).
int cli_compare(const std::vector<FederationConfig>& configs,
                const std::filesystem::path& out_dir, int threads);

int cli_gen_data(const FederationConfig& config, const std::filesystem::path& out_path);

}  // namespace moreaufl
