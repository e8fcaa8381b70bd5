#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chronovec::toylab {

inline constexpr std::string_view kExperimentNames[] = {
    "manifold", "intervening_years", "intervening_months", "analogy", "soups", "online", "swap", "seasonality"};

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

struct ExperimentReport {
  std::string name;
  std::vector<std::pair<std::string, double>> metrics;  // also written to summary.txt
  std::vector<std::filesystem::path> files;             // relative to out_dir, in write order

  double metric(std::string_view key) const;  // throws Error when absent
};

// Runs one toy protocol end to end (corpus, pretraining, per-period
// finetunes, time vectors, analysis) and writes its CSV reports plus
// summary.txt into out_dir. Outputs are a pure function of (name, seed).
ExperimentReport run_experiment(std::string_view name, const std::filesystem::path& out_dir,
                                const ExperimentOptions& options = {});

}  // namespace chronovec::toylab
