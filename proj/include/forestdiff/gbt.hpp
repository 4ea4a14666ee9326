#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "forestdiff/matrix.hpp"

namespace forestdiff::gbt {

struct GBTConfig {
  int n_trees = 100;
  int max_depth = 6;
  double learning_rate = 0.3;
  double lambda_l2 = 0.0;
  double gamma_min_gain = 0.0;
  double min_child_weight = 1.0;
  int n_bins = 256;
  double subsample = 1.0;

  void validate() const;
};

// Internal nodes route x < threshold to `left`; a missing x follows
// `default_left`. Leaves have feature == -1.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  bool default_left = true;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> row) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf()) {
      const TreeNode& n = nodes[i];
      const double x = row[static_cast<std::size_t>(n.feature)];
      const bool go_left = is_missing(x) ? n.default_left : x < n.threshold;
      i = static_cast<std::size_t>(go_left ? n.left : n.right);
    }
    return nodes[i].value;
  }

  int depth() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

// base_score + learning_rate * sum of tree outputs.
struct Forest {
  std::vector<Tree> trees;
  double base_score = 0.0;
  double learning_rate = 1.0;
  std::size_t n_features = 0;

  double predict_row(std::span<const double> row) const {
    double sum = 0.0;
    for (const Tree& t : trees) sum += t.predict(row);
    return base_score + learning_rate * sum;
  }

  std::vector<double> predict(const Matrix& features) const;

  friend bool operator==(const Forest&, const Forest&) = default;
};

// Per-feature quantile bins. Non-missing values map to bins 0..n-1; a split
// after bin b sends bins <= b left and corresponds to x < thresholds[b].
struct FeatureBins {
  std::size_t count = 0;             // 0 when the feature is entirely missing
  std::vector<double> lower_bounds;  // lower bound of bins 1..count-1
  std::vector<double> thresholds;    // split value after bin b, b = 0..count-2
};

// Features quantized once and shared by every forest fit on the same
// matrix. Column-major bin ids; kMissingBin marks NOT-A-VALUE.
class BinnedMatrix {
 public:
  static constexpr std::uint16_t kMissingBin = 0xFFFF;

  BinnedMatrix(const Matrix& features, int n_bins);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return bins_.size(); }
  const FeatureBins& feature(std::size_t f) const { return bins_[f]; }
  std::span<const std::uint16_t> column(std::size_t f) const { return codes_[f]; }

 private:
  std::size_t rows_ = 0;
  std::vector<FeatureBins> bins_;
  std::vector<std::vector<std::uint16_t>> codes_;
};

// Squared-error gradient boosting with sparsity-aware splits.
Forest fit(const Matrix& features, std::span<const double> targets, const GBTConfig& cfg,
           std::uint64_t seed);

// Same, on pre-binned features restricted to `rows` (all rows when empty).
// targets[i] belongs to binned row rows[i] (or row i when rows is empty).
Forest fit(const BinnedMatrix& features, std::span<const std::size_t> rows,
           std::span<const double> targets, const GBTConfig& cfg, std::uint64_t seed);

// Split-gain of a partition with left/right gradient and hessian sums.
inline double split_gain(double g_left, double h_left, double g_right, double h_right,
                         double lambda, double gamma) {
  const double g = g_left + g_right;
  const double h = h_left + h_right;
  return 0.5 * (g_left * g_left / (h_left + lambda) + g_right * g_right / (h_right + lambda) -
                g * g / (h + lambda)) -
         gamma;
}

}  // namespace forestdiff::gbt
