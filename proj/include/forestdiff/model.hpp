#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forestdiff/encoder.hpp"
#include "forestdiff/gbt.hpp"
#include "forestdiff/parallel.hpp"
#include "forestdiff/process.hpp"
#include "forestdiff/schema.hpp"

namespace forestdiff {

using process::ProcessKind;

struct TrainConfig {
  ProcessKind process = ProcessKind::vp_diffusion;
  int n_t = 50;
  int n_noise = 100;
  // Unset means: on exactly when the outcome is categorical.
  std::optional<bool> label_conditioning;
  gbt::GBTConfig gbt;
  process::NoiseSchedule schedule;
  std::uint64_t seed = 0;
  // n_noise is halved while n_rows * n_noise * encoded width exceeds this.
  std::size_t cell_budget = 200'000'000;
  int threads = default_thread_count();

  void validate() const;
};

// One regressor per (noise level, encoded column, class label). The model at
// level i takes the whole noised row as input and predicts column j of the
// regression target (noise for VP, velocity for flow).
struct ForestDiffusionModel {
  ProcessKind process = ProcessKind::vp_diffusion;
  process::TimeGrid grid;
  process::NoiseSchedule schedule;
  TableSchema schema;  // full training schema, in CSV column order
  Encoder encoder;     // feature variables; excludes the outcome when conditioned
  bool conditioned = false;
  std::vector<double> label_probs;
  int n_noise = 0;  // effective value after the memory guard
  std::vector<gbt::Forest> forests;
  std::vector<std::string> warnings;

  std::size_t width() const { return encoder.width(); }
  std::size_t n_labels() const { return conditioned ? label_probs.size() : 1; }
  std::size_t forest_index(int level, std::size_t column, std::size_t label) const {
    return (static_cast<std::size_t>(level - 1) * n_labels() + label) * width() + column;
  }
  const gbt::Forest& forest(int level, std::size_t column, std::size_t label) const {
    return forests.at(forest_index(level, column, label));
  }

  // Grid completeness and per-forest feature width; throws ValidationError.
  void validate() const;
};

ForestDiffusionModel train(const Dataset& data, const TrainConfig& cfg);

struct SampleOptions {
  process::NoiseScaling scaling = process::NoiseScaling::euler_maruyama;
  int threads = default_thread_count();
};

Dataset generate(const ForestDiffusionModel& model, std::size_t n_obs, std::uint64_t seed,
                 const SampleOptions& opts = {});

struct ImputeConfig {
  int k_imputations = 10;
  int repaint_rounds = 10;
  int jump_size = 5;
  std::uint64_t seed = 0;
  process::NoiseScaling scaling = process::NoiseScaling::euler_maruyama;
  int threads = default_thread_count();

  void validate(int n_t) const;
};

struct ImputeResult {
  std::vector<Dataset> imputations;
  bool had_missing = true;  // false: input was complete and returned unchanged
};

ImputeResult impute(const ForestDiffusionModel& model, const Dataset& data,
                    const ImputeConfig& cfg);

// One move of REPAINT imputation: a reverse step from `level` to level-1, or
// a forward jump from `level` to level+1.
struct RepaintStep {
  bool forward = false;
  int level = 0;
  friend bool operator==(const RepaintStep&, const RepaintStep&) = default;
};

// Full sequence of moves for REPAINT with r rounds and jump size j, starting
// at level n_t and ending at level 0.
std::vector<RepaintStep> repaint_schedule(int n_t, int repaint_rounds, int jump_size);

// Splices `labels` (category ids) back into a feature table as the outcome.
Dataset attach_outcome(const Dataset& features, const TableSchema& full_schema,
                       std::span<const double> labels);

}  // namespace forestdiff
