#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "forestdiff/matrix.hpp"
#include "forestdiff/schema.hpp"

namespace forestdiff::metrics {

// Mixed-type row distance: sum over variables of a per-variable cost in
// [0, 1]. Numeric variables use |a - b| after min-max scaling with ranges
// fitted on the reference data (scaled values clipped to [0, 1]);
// categorical variables use half the L1 distance between one-hot vectors.
class GowerSpace {
 public:
  GowerSpace() = default;
  static GowerSpace fit(const Dataset& reference);

  const TableSchema& schema() const { return schema_; }
  double normalize(std::size_t var, double x) const;
  double cost(std::size_t var, double a, double b) const;
  double distance(std::span<const double> a, std::span<const double> b) const;

  // n_a x n_b matrix of distances between the rows of two datasets.
  Matrix pairwise(const Dataset& a, const Dataset& b) const;

 private:
  TableSchema schema_;
  std::vector<double> min_;
  std::vector<double> max_;
};

// Throws ValidationError when either row has a missing cell.
double gower(std::span<const double> a, std::span<const double> b, const GowerSpace& space);

// Exact optimal transport cost between two uniform discrete measures with
// ground cost `cost` (rows: first measure, cols: second).
double transport_cost(const Matrix& cost);

// Exact W1 under the Gower cost. Either side above `cap` rows is subsampled
// to `cap` rows with a fixed seed.
double wasserstein(const Dataset& real, const Dataset& fake, const GowerSpace& space,
                   std::size_t cap = 5000, std::uint64_t seed = 0);

// Smallest k whose open k-NN balls (self excluded) contain another real row
// for at least 95% of the real rows. A real row is covered by the fake data
// when some fake row lies strictly inside its k-NN radius.
std::size_t coverage_k(const Matrix& real_real);
double coverage(const Dataset& real, const Dataset& fake, const GowerSpace& space);

// Cell-level missingness pattern of the original incomplete data.
struct CellMask {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> missing;

  static CellMask of(const Dataset& incomplete);
  bool operator()(std::size_t r, std::size_t c) const { return missing[r * cols + c] != 0; }
  std::size_t count() const;
};

// Mean Gower cost of imputed values to their per-cell median (numeric) or
// mode (categorical) across the k imputations. Requires k >= 2.
double mad_diversity(std::span<const Dataset> imputations, const CellMask& mask,
                     const GowerSpace& space);

struct MaeResult {
  double min_mae = 0.0;
  double avg_mae = 0.0;
};

// Row-level masked-cell MAE; the minimum over imputations is taken per row.
MaeResult mae_min_avg(std::span<const Dataset> imputations, const Dataset& truth,
                      const CellMask& mask, const GowerSpace& space);

struct OlsFit {
  std::vector<double> beta;
  std::vector<double> std_error;
  std::size_t dof = 0;
  bool ok = false;  // false for a singular design
};

// Intercept + numeric variables + K-1 dummies, outcome excluded.
Matrix regression_design(const Dataset& data);
OlsFit ols(const Matrix& design, std::span<const double> y);

struct InferenceStats {
  double p_bias = 0.0;
  double cov_rate = 0.0;
};

// Percent bias and 95% CI coverage of OLS coefficients estimated on each
// synthetic set against those estimated on the true data.
InferenceStats inference_stats(const Dataset& true_data, std::span<const Dataset> synthetic_sets);

// Average test score (macro-F1 or R^2) of {linear/logistic regression, GBT}
// trained on `train` and evaluated on `test`.
double efficiency(const Dataset& train, const Dataset& test);

double macro_f1(std::span<const int> truth, std::span<const int> predicted);
double r_squared(std::span<const double> truth, std::span<const double> predicted);

}  // namespace forestdiff::metrics
