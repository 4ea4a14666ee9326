#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forestdiff/model.hpp"
#include "forestdiff/schema.hpp"

namespace forestdiff::repro {

struct Split {
  Dataset train;
  Dataset test;
};

// Shuffled split; round(test_fraction * rows) rows go to the test side.
Split split_rows(const Dataset& data, double test_fraction, std::uint64_t seed);

// Removes each non-outcome cell independently with probability `fraction`.
Dataset mask_mcar(const Dataset& data, double fraction, std::uint64_t seed);

Dataset load_csv_dataset(const std::string& path);

struct RunSpec {
  ProcessKind process = ProcessKind::flow_matching;
  int n_t = 50;
  int n_noise = 100;
  std::uint64_t seed = 0;
  double mcar = 0.0;  // > 0: train on a masked copy of the training split
  std::optional<bool> label_conditioning;
  int threads = default_thread_count();
};

struct GenerationScores {
  double w_train = 0.0;
  double w_test = 0.0;
  double cov_train = 0.0;
  double cov_test = 0.0;
  double efficiency = 0.0;
};

// 80/20 split, train, generate as many rows as the training split, score.
GenerationScores run_generation(const Dataset& data, const RunSpec& spec);

struct ImputationScores {
  std::size_t imputations = 0;
  std::size_t masked_cells = 0;
  bool observed_exact = true;  // every observed cell restored bit-exactly
  double mad = 0.0;
  double min_mae = 0.0;
  double avg_mae = 0.0;
};

// Masks the training split, trains Forest-VP on the incomplete data and
// imputes it k times.
ImputationScores run_imputation(const Dataset& data, const RunSpec& spec, int k);

// One row of the Iris ablation with the reference values it is compared to.
struct IrisSetting {
  std::string name;
  ProcessKind process = ProcessKind::flow_matching;
  int n_t = 50;
  int n_noise = 100;
  double ref_w_test = 0.0;
  double ref_cov_test = 0.0;
  double ref_f1 = 0.0;
};

// Baselines first, then the n_noise = 1 and n_t = 10 ablations.
std::vector<IrisSetting> iris_settings(bool baseline_only);

// Scores averaged over seeds 0..n_seeds-1.
GenerationScores run_setting(const Dataset& data, const IrisSetting& setting, int n_seeds,
                             std::optional<bool> label_conditioning, int threads);

}  // namespace forestdiff::repro
