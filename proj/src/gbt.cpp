#include "forestdiff/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/random.hpp"

namespace forestdiff::gbt {

void GBTConfig::validate() const {
  if (n_trees < 0) throw ValidationError("n_trees must be non-negative");
  if (max_depth < 0) throw ValidationError("max_depth must be non-negative");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0))
    throw ValidationError("learning_rate must lie in (0, 1]");
  if (!(lambda_l2 >= 0.0)) throw ValidationError("lambda_l2 must be >= 0");
  if (!(gamma_min_gain >= 0.0)) throw ValidationError("gamma_min_gain must be >= 0");
  if (!(min_child_weight >= 0.0)) throw ValidationError("min_child_weight must be >= 0");
  if (n_bins < 2 || n_bins >= BinnedMatrix::kMissingBin)
    throw ValidationError("n_bins must lie in [2, 65534]");
  if (!(subsample > 0.0 && subsample <= 1.0))
    throw ValidationError("subsample must lie in (0, 1]");
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

std::vector<double> Forest::predict(const Matrix& features) const {
  if (features.cols() != n_features)
    throw ValidationError("feature width " + std::to_string(features.cols()) +
                          " does not match forest width " + std::to_string(n_features));
  std::vector<double> out(features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) out[r] = predict_row(features.row(r));
  return out;
}

// ---------------------------------------------------------------------------
// Quantile binning
// ---------------------------------------------------------------------------

namespace {

double split_point(double below, double above) {
  const double mid = below + (above - below) * 0.5;
  return mid > below ? mid : above;
}

FeatureBins make_bins(std::vector<double> values, int n_bins) {
  FeatureBins fb;
  if (values.empty()) return fb;
  std::sort(values.begin(), values.end());
  std::vector<double> distinct;
  std::unique_copy(values.begin(), values.end(), std::back_inserter(distinct));
  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    fb.lower_bounds.assign(distinct.begin() + 1, distinct.end());
  } else {
    const std::size_t n = values.size();
    for (int q = 1; q < n_bins; ++q) {
      const double cut = values[static_cast<std::size_t>(q) * n / static_cast<std::size_t>(n_bins)];
      if (cut > distinct.front() && (fb.lower_bounds.empty() || cut > fb.lower_bounds.back()))
        fb.lower_bounds.push_back(cut);
    }
  }
  fb.count = fb.lower_bounds.size() + 1;
  fb.thresholds.reserve(fb.lower_bounds.size());
  for (double lb : fb.lower_bounds) {
    // Largest observed value strictly below the next bin's lower bound.
    auto it = std::lower_bound(distinct.begin(), distinct.end(), lb);
    fb.thresholds.push_back(split_point(*(it - 1), lb));
  }
  return fb;
}

}  // namespace

BinnedMatrix::BinnedMatrix(const Matrix& features, int n_bins) : rows_(features.rows()) {
  const std::size_t cols = features.cols();
  bins_.resize(cols);
  codes_.assign(cols, std::vector<std::uint16_t>(rows_, kMissingBin));
  std::vector<double> values;
  for (std::size_t f = 0; f < cols; ++f) {
    values.clear();
    for (std::size_t r = 0; r < rows_; ++r)
      if (!is_missing(features(r, f))) values.push_back(features(r, f));
    bins_[f] = make_bins(values, n_bins);
    const auto& lb = bins_[f].lower_bounds;
    for (std::size_t r = 0; r < rows_; ++r) {
      const double x = features(r, f);
      if (is_missing(x)) continue;
      codes_[f][r] = static_cast<std::uint16_t>(std::upper_bound(lb.begin(), lb.end(), x) - lb.begin());
    }
  }
}

// ---------------------------------------------------------------------------
// Tree growing
// ---------------------------------------------------------------------------

namespace {

struct GradPair {
  double g = 0.0;
  double h = 0.0;
};

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  std::size_t bin = 0;
  bool default_left = true;
};

// Gains summed in different orders differ in the last bits; equal splits
// must still resolve to the lowest feature and threshold.
constexpr double kTieTolerance = 1e-10;

class TreeBuilder {
 public:
  TreeBuilder(const BinnedMatrix& x, std::span<const std::uint32_t> binned_row,
              const GBTConfig& cfg)
      : x_(x), binned_row_(binned_row), cfg_(cfg) {
    offsets_.resize(x.cols() + 1, 0);
    for (std::size_t f = 0; f < x.cols(); ++f)
      offsets_[f + 1] = offsets_[f] + x.feature(f).count + 1;  // +1 missing slot
  }

  struct Built {
    Tree tree;
    std::vector<int> split_bin;  // per node, for routing by codes
  };

  // Grows one tree over `rows` (local indices). On return, leaf_of[i] holds
  // the leaf reached by local row i for every row in `rows`.
  Built grow(std::vector<std::uint32_t>& rows, std::span<const double> grad,
             std::span<int> leaf_of) {
    Built out;
    struct Pending {
      int node;
      std::size_t begin, end;
      int depth;
      std::vector<GradPair> hist;  // empty when the node cannot split
    };
    std::deque<Pending> queue;
    out.tree.nodes.emplace_back();
    out.split_bin.push_back(-1);
    Pending root{0, 0, rows.size(), 0, {}};
    if (splittable(root.depth, rows.size())) root.hist = histogram(rows, 0, rows.size(), grad);
    queue.push_back(std::move(root));

    while (!queue.empty()) {
      Pending p = std::move(queue.front());
      queue.pop_front();
      const auto [g_sum, h_sum] = totals(rows, p.begin, p.end, grad);
      SplitChoice best;
      if (!p.hist.empty()) best = best_split(p.hist, g_sum, h_sum);
      if (best.feature < 0) {
        TreeNode& leaf = out.tree.nodes[static_cast<std::size_t>(p.node)];
        leaf.value = h_sum + cfg_.lambda_l2 > 0.0 ? -g_sum / (h_sum + cfg_.lambda_l2) : 0.0;
        for (std::size_t i = p.begin; i < p.end; ++i) leaf_of[rows[i]] = p.node;
        continue;
      }

      const auto codes = x_.column(static_cast<std::size_t>(best.feature));
      const auto goes_left = [&](std::uint32_t local) {
        const std::uint16_t c = codes[binned_row_[local]];
        return c == BinnedMatrix::kMissingBin ? best.default_left : c <= best.bin;
      };
      const auto mid_it = std::stable_partition(rows.begin() + static_cast<std::ptrdiff_t>(p.begin),
                                                rows.begin() + static_cast<std::ptrdiff_t>(p.end),
                                                goes_left);
      const std::size_t mid = static_cast<std::size_t>(mid_it - rows.begin());

      const int left_id = static_cast<int>(out.tree.nodes.size());
      const int right_id = left_id + 1;
      {
        TreeNode& node = out.tree.nodes[static_cast<std::size_t>(p.node)];
        node.feature = best.feature;
        node.threshold = x_.feature(static_cast<std::size_t>(best.feature)).thresholds[best.bin];
        node.default_left = best.default_left;
        node.left = left_id;
        node.right = right_id;
      }
      out.split_bin[static_cast<std::size_t>(p.node)] = static_cast<int>(best.bin);
      out.tree.nodes.emplace_back();
      out.tree.nodes.emplace_back();
      out.split_bin.push_back(-1);
      out.split_bin.push_back(-1);

      Pending left{left_id, p.begin, mid, p.depth + 1, {}};
      Pending right{right_id, mid, p.end, p.depth + 1, {}};
      const bool left_split = splittable(left.depth, mid - p.begin);
      const bool right_split = splittable(right.depth, p.end - mid);
      if (left_split || right_split) {
        // Build the smaller child directly and derive the other by subtraction.
        const bool left_small = (mid - p.begin) <= (p.end - mid);
        Pending& small = left_small ? left : right;
        Pending& large = left_small ? right : left;
        small.hist = histogram(rows, small.begin, small.end, grad);
        if (left_small ? right_split : left_split) {
          large.hist = std::move(p.hist);
          for (std::size_t k = 0; k < large.hist.size(); ++k) {
            large.hist[k].g -= small.hist[k].g;
            large.hist[k].h -= small.hist[k].h;
          }
        }
        if (!(left_small ? left_split : right_split)) small.hist.clear();
      }
      queue.push_back(std::move(left));
      queue.push_back(std::move(right));
    }
    return out;
  }

 private:
  bool splittable(int depth, std::size_t n_rows) const {
    return depth < cfg_.max_depth && n_rows >= 2 &&
           static_cast<double>(n_rows) >= 2.0 * cfg_.min_child_weight;
  }

  std::pair<double, double> totals(const std::vector<std::uint32_t>& rows, std::size_t begin,
                                   std::size_t end, std::span<const double> grad) const {
    double g = 0.0;
    for (std::size_t i = begin; i < end; ++i) g += grad[rows[i]];
    return {g, static_cast<double>(end - begin)};
  }

  std::vector<GradPair> histogram(const std::vector<std::uint32_t>& rows, std::size_t begin,
                                  std::size_t end, std::span<const double> grad) const {
    std::vector<GradPair> hist(offsets_.back());
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      const auto codes = x_.column(f);
      GradPair* base = hist.data() + offsets_[f];
      const std::size_t missing_slot = x_.feature(f).count;
      for (std::size_t i = begin; i < end; ++i) {
        const std::uint32_t local = rows[i];
        const std::uint16_t c = codes[binned_row_[local]];
        GradPair& slot = base[c == BinnedMatrix::kMissingBin ? missing_slot : c];
        slot.g += grad[local];
        slot.h += 1.0;
      }
    }
    return hist;
  }

  // Scans features in index order and thresholds in increasing order; a
  // candidate replaces the incumbent only when its gain is larger by more
  // than rounding noise, and missing-left is tried before missing-right.
  SplitChoice best_split(const std::vector<GradPair>& hist, double g_sum, double h_sum) const {
    SplitChoice best;
    const double lambda = cfg_.lambda_l2;
    const double gamma = cfg_.gamma_min_gain;
    const double mcw = cfg_.min_child_weight;
    auto consider = [&](double gl, double hl, int f, std::size_t b, bool left) {
      const double hr = h_sum - hl;
      if (hl < mcw || hr < mcw || hl + lambda <= 0.0 || hr + lambda <= 0.0) return;
      const double gain = split_gain(gl, hl, g_sum - gl, hr, lambda, gamma);
      if (gain > best.gain * (1.0 + kTieTolerance)) best = {gain, f, b, left};
    };
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      const std::size_t nb = x_.feature(f).count;
      if (nb < 2) continue;
      const GradPair* base = hist.data() + offsets_[f];
      const double hm = base[nb].h;
      const double gm = hm > 0.0 ? base[nb].g : 0.0;
      double gl = 0.0;
      double hl = 0.0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        if (base[b].h > 0.0) {
          gl += base[b].g;
          hl += base[b].h;
        }
        consider(gl + gm, hl + hm, static_cast<int>(f), b, true);
        if (hm > 0.0) consider(gl, hl, static_cast<int>(f), b, false);
      }
    }
    return best;
  }

  const BinnedMatrix& x_;
  std::span<const std::uint32_t> binned_row_;
  const GBTConfig& cfg_;
  std::vector<std::size_t> offsets_;
};

int route_by_codes(const TreeBuilder::Built& built, const BinnedMatrix& x, std::uint32_t row) {
  std::size_t i = 0;
  while (!built.tree.nodes[i].is_leaf()) {
    const TreeNode& n = built.tree.nodes[i];
    const std::uint16_t c = x.column(static_cast<std::size_t>(n.feature))[row];
    const bool left = c == BinnedMatrix::kMissingBin
                          ? n.default_left
                          : c <= static_cast<std::uint16_t>(built.split_bin[i]);
    i = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return static_cast<int>(i);
}

}  // namespace

Forest fit(const BinnedMatrix& features, std::span<const std::size_t> rows,
           std::span<const double> targets, const GBTConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t n = rows.empty() ? features.rows() : rows.size();
  if (n == 0) throw ValidationError("cannot fit a forest on zero rows");
  if (targets.size() != n)
    throw ValidationError("targets length does not match feature row count");
  for (double y : targets)
    if (!std::isfinite(y)) throw ValidationError("non-finite regression target");

  std::vector<std::uint32_t> binned_row(n);
  for (std::size_t i = 0; i < n; ++i)
    binned_row[i] = static_cast<std::uint32_t>(rows.empty() ? i : rows[i]);

  Forest forest;
  forest.n_features = features.cols();
  forest.learning_rate = cfg.learning_rate;
  const auto [lo, hi] = std::minmax_element(targets.begin(), targets.end());
  forest.base_score = *lo == *hi ? *lo
                                 : std::accumulate(targets.begin(), targets.end(), 0.0) /
                                       static_cast<double>(n);

  std::vector<double> pred(n, forest.base_score);
  std::vector<double> grad(n);
  std::vector<int> leaf_of(n, 0);
  std::vector<std::uint32_t> sample;
  sample.reserve(n);
  Rng rng(seed);
  std::bernoulli_distribution keep(cfg.subsample);
  TreeBuilder builder(features, binned_row, cfg);

  for (int t = 0; t < cfg.n_trees; ++t) {
    for (std::size_t i = 0; i < n; ++i) grad[i] = pred[i] - targets[i];
    sample.clear();
    for (std::uint32_t i = 0; i < n; ++i)
      if (cfg.subsample >= 1.0 || keep(rng)) sample.push_back(i);
    if (sample.empty()) continue;

    TreeBuilder::Built built = builder.grow(sample, grad, leaf_of);
    if (cfg.subsample < 1.0) {
      for (std::uint32_t i = 0; i < n; ++i)
        leaf_of[i] = route_by_codes(built, features, binned_row[i]);
    }
    for (std::size_t i = 0; i < n; ++i)
      pred[i] += cfg.learning_rate * built.tree.nodes[static_cast<std::size_t>(leaf_of[i])].value;
    forest.trees.push_back(std::move(built.tree));
  }
  return forest;
}

Forest fit(const Matrix& features, std::span<const double> targets, const GBTConfig& cfg,
           std::uint64_t seed) {
  cfg.validate();
  if (features.rows() != targets.size())
    throw ValidationError("targets length does not match feature row count");
  const BinnedMatrix binned(features, cfg.n_bins);
  return fit(binned, {}, targets, cfg, seed);
}

}  // namespace forestdiff::gbt
