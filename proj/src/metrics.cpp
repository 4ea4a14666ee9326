#include "forestdiff/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/gbt.hpp"
#include "forestdiff/random.hpp"

namespace forestdiff::metrics {

// ---------------------------------------------------------------------------
// Gower
// ---------------------------------------------------------------------------

GowerSpace GowerSpace::fit(const Dataset& reference) {
  GowerSpace s;
  s.schema_ = reference.schema();
  s.min_.assign(reference.cols(), 0.0);
  s.max_.assign(reference.cols(), 0.0);
  for (std::size_t c = 0; c < reference.cols(); ++c) {
    if (s.schema_.variables[c].is_categorical()) continue;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t r = 0; r < reference.rows(); ++r) {
      if (reference.missing(r, c)) continue;
      lo = std::min(lo, reference(r, c));
      hi = std::max(hi, reference(r, c));
    }
    if (lo > hi) lo = hi = 0.0;
    s.min_[c] = lo;
    s.max_[c] = hi;
  }
  return s;
}

double GowerSpace::normalize(std::size_t var, double x) const {
  const double range = max_[var] - min_[var];
  if (!(range > 0.0)) return 0.0;
  return std::clamp((x - min_[var]) / range, 0.0, 1.0);
}

double GowerSpace::cost(std::size_t var, double a, double b) const {
  if (schema_.variables[var].is_categorical()) return a == b ? 0.0 : 1.0;
  if (!(max_[var] > min_[var])) return a == b ? 0.0 : 1.0;
  return std::abs(normalize(var, a) - normalize(var, b));
}

double GowerSpace::distance(std::span<const double> a, std::span<const double> b) const {
  double d = 0.0;
  for (std::size_t v = 0; v < a.size(); ++v) d += cost(v, a[v], b[v]);
  return d;
}

Matrix GowerSpace::pairwise(const Dataset& a, const Dataset& b) const {
  Matrix d(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ra = a.cells().row(i);
    for (std::size_t j = 0; j < b.rows(); ++j) d(i, j) = distance(ra, b.cells().row(j));
  }
  return d;
}

double gower(std::span<const double> a, std::span<const double> b, const GowerSpace& space) {
  if (a.size() != space.schema().size() || b.size() != space.schema().size())
    throw ValidationError("row width does not match the Gower space");
  for (std::size_t v = 0; v < a.size(); ++v)
    if (is_missing(a[v]) || is_missing(b[v]))
      throw ValidationError("Gower distance is undefined for missing cells");
  return space.distance(a, b);
}

namespace {

void require_complete(const Dataset& d, const char* what) {
  if (d.missing_count() != 0)
    throw ValidationError(std::string(what) + " must not contain missing cells");
}

void require_same_variables(const Dataset& a, const Dataset& b) {
  if (!(a.schema().variables == b.schema().variables))
    throw ValidationError("datasets have different schemas");
}

}  // namespace

// ---------------------------------------------------------------------------
// Optimal transport: successive shortest paths on the bipartite residual
// graph. Supplies are scaled to integers (m per source, n per sink) so every
// augmentation moves an integral amount and the optimum is exact.
// ---------------------------------------------------------------------------

double transport_cost(const Matrix& cost) {
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  if (n == 0 || m == 0) throw ValidationError("transport problem needs non-empty sides");
  std::vector<std::int64_t> supply(n, static_cast<std::int64_t>(m));
  std::vector<std::int64_t> demand(m, static_cast<std::int64_t>(n));
  std::vector<std::int64_t> flow(n * m, 0);
  std::vector<double> pot_left(n, 0.0);
  std::vector<double> pot_right(m, 0.0);
  const double inf = std::numeric_limits<double>::infinity();

  std::vector<double> dist_left(n);
  std::vector<double> dist_right(m);
  std::vector<int> pred_left(n);   // right node feeding a left node via a reverse arc
  std::vector<int> pred_right(m);  // left node feeding a right node
  std::vector<std::uint8_t> done_left(n);
  std::vector<std::uint8_t> done_right(m);
  std::int64_t remaining = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(m);

  while (remaining > 0) {
    std::fill(dist_left.begin(), dist_left.end(), inf);
    std::fill(dist_right.begin(), dist_right.end(), inf);
    std::fill(pred_left.begin(), pred_left.end(), -1);
    std::fill(pred_right.begin(), pred_right.end(), -1);
    std::fill(done_left.begin(), done_left.end(), 0);
    std::fill(done_right.begin(), done_right.end(), 0);
    for (std::size_t i = 0; i < n; ++i)
      if (supply[i] > 0) dist_left[i] = 0.0;

    int target = -1;
    for (;;) {
      double best = inf;
      int node = -1;
      bool is_left = true;
      for (std::size_t i = 0; i < n; ++i)
        if (!done_left[i] && dist_left[i] < best) {
          best = dist_left[i];
          node = static_cast<int>(i);
          is_left = true;
        }
      for (std::size_t j = 0; j < m; ++j)
        if (!done_right[j] && dist_right[j] < best) {
          best = dist_right[j];
          node = static_cast<int>(j);
          is_left = false;
        }
      if (node < 0) throw std::logic_error("transport solver found no augmenting path");
      const auto u = static_cast<std::size_t>(node);
      if (is_left) {
        done_left[u] = 1;
        for (std::size_t j = 0; j < m; ++j) {
          if (done_right[j]) continue;
          const double rc = std::max(0.0, cost(u, j) + pot_left[u] - pot_right[j]);
          if (dist_left[u] + rc < dist_right[j]) {
            dist_right[j] = dist_left[u] + rc;
            pred_right[j] = node;
          }
        }
      } else {
        done_right[u] = 1;
        if (demand[u] > 0) {
          target = node;
          break;
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (done_left[i] || flow[i * m + u] == 0) continue;
          const double rc = std::max(0.0, -cost(i, u) + pot_right[u] - pot_left[i]);
          if (dist_right[u] + rc < dist_left[i]) {
            dist_left[i] = dist_right[u] + rc;
            pred_left[i] = node;
          }
        }
      }
    }

    const double reach = dist_right[static_cast<std::size_t>(target)];
    for (std::size_t i = 0; i < n; ++i) pot_left[i] += std::min(dist_left[i], reach);
    for (std::size_t j = 0; j < m; ++j) pot_right[j] += std::min(dist_right[j], reach);

    // Bottleneck along the path back to a source with remaining supply.
    std::int64_t delta = demand[static_cast<std::size_t>(target)];
    for (int j = target;;) {
      const int i = pred_right[static_cast<std::size_t>(j)];
      const int prev = pred_left[static_cast<std::size_t>(i)];
      if (prev < 0) {
        delta = std::min(delta, supply[static_cast<std::size_t>(i)]);
        break;
      }
      delta = std::min(delta, flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(prev)]);
      j = prev;
    }
    for (int j = target;;) {
      const int i = pred_right[static_cast<std::size_t>(j)];
      flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(j)] += delta;
      const int prev = pred_left[static_cast<std::size_t>(i)];
      if (prev < 0) {
        supply[static_cast<std::size_t>(i)] -= delta;
        break;
      }
      flow[static_cast<std::size_t>(i) * m + static_cast<std::size_t>(prev)] -= delta;
      j = prev;
    }
    demand[static_cast<std::size_t>(target)] -= delta;
    remaining -= delta;
  }

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (flow[i * m + j] != 0) total += static_cast<double>(flow[i * m + j]) * cost(i, j);
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

namespace {

Dataset subsample(const Dataset& d, std::size_t cap, std::uint64_t seed) {
  if (d.rows() <= cap) return d;
  std::vector<std::size_t> idx(d.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(cap);
  std::sort(idx.begin(), idx.end());
  return d.select_rows(idx);
}

}  // namespace

double wasserstein(const Dataset& real, const Dataset& fake, const GowerSpace& space,
                   std::size_t cap, std::uint64_t seed) {
  require_same_variables(real, fake);
  require_complete(real, "real data");
  require_complete(fake, "fake data");
  const Dataset a = subsample(real, cap, derive_seed(seed, {1}));
  const Dataset b = subsample(fake, cap, derive_seed(seed, {2}));
  return transport_cost(space.pairwise(a, b));
}

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

namespace {

// Sorted distances from each row to every other row.
std::vector<std::vector<double>> neighbour_distances(const Matrix& real_real) {
  const std::size_t n = real_real.rows();
  std::vector<std::vector<double>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) out[i].push_back(real_real(i, j));
    std::sort(out[i].begin(), out[i].end());
  }
  return out;
}

}  // namespace

std::size_t coverage_k(const Matrix& real_real) {
  const std::size_t n = real_real.rows();
  if (n < 2) throw ValidationError("coverage needs at least 2 real rows");
  const auto knn = neighbour_distances(real_real);
  for (std::size_t k = 1; k < n; ++k) {
    std::size_t covered = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double radius = knn[i][k - 1];
      for (std::size_t j = 0; j < n; ++j)
        if (j != i && real_real(i, j) < radius) {
          ++covered;
          break;
        }
    }
    if (static_cast<double>(covered) >= 0.95 * static_cast<double>(n)) return k;
  }
  return n - 1;
}

double coverage(const Dataset& real, const Dataset& fake, const GowerSpace& space) {
  require_same_variables(real, fake);
  require_complete(real, "real data");
  require_complete(fake, "fake data");
  const Matrix rr = space.pairwise(real, real);
  const std::size_t k = coverage_k(rr);
  const auto knn = neighbour_distances(rr);
  const Matrix rf = space.pairwise(real, fake);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < real.rows(); ++i) {
    const double radius = knn[i][k - 1];
    for (std::size_t j = 0; j < fake.rows(); ++j)
      if (rf(i, j) < radius) {
        ++covered;
        break;
      }
  }
  return static_cast<double>(covered) / static_cast<double>(real.rows());
}

// ---------------------------------------------------------------------------
// Imputation metrics
// ---------------------------------------------------------------------------

CellMask CellMask::of(const Dataset& incomplete) {
  CellMask m{incomplete.rows(), incomplete.cols(), {}};
  m.missing.resize(m.rows * m.cols);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) m.missing[r * m.cols + c] = incomplete.missing(r, c);
  return m;
}

std::size_t CellMask::count() const {
  return static_cast<std::size_t>(std::count(missing.begin(), missing.end(), 1));
}

namespace {

void check_imputations(std::span<const Dataset> imputations, const CellMask& mask) {
  for (const Dataset& d : imputations) {
    if (d.rows() != mask.rows || d.cols() != mask.cols)
      throw ValidationError("imputation shape does not match the missingness mask");
    if (!(d.schema().variables == imputations.front().schema().variables))
      throw ValidationError("imputations have different schemas");
    require_complete(d, "imputation");
  }
}

}  // namespace

double mad_diversity(std::span<const Dataset> imputations, const CellMask& mask,
                     const GowerSpace& space) {
  if (imputations.size() < 2) throw ValidationError("MAD needs at least 2 imputations");
  check_imputations(imputations, mask);
  const std::size_t k = imputations.size();
  double total = 0.0;
  std::size_t cells = 0;
  std::vector<double> values(k);
  for (std::size_t r = 0; r < mask.rows; ++r) {
    for (std::size_t c = 0; c < mask.cols; ++c) {
      if (!mask(r, c)) continue;
      double deviation = 0.0;
      if (space.schema().variables[c].is_categorical()) {
        for (std::size_t i = 0; i < k; ++i) values[i] = imputations[i](r, c);
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        // Mode with ties resolved toward the lowest category id.
        double mode = sorted[0];
        std::size_t best_run = 0;
        for (std::size_t i = 0; i < k;) {
          std::size_t j = i;
          while (j < k && sorted[j] == sorted[i]) ++j;
          if (j - i > best_run) {
            best_run = j - i;
            mode = sorted[i];
          }
          i = j;
        }
        for (double v : values) deviation += v == mode ? 0.0 : 1.0;
      } else {
        for (std::size_t i = 0; i < k; ++i) values[i] = space.normalize(c, imputations[i](r, c));
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const double median =
            k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
        for (double v : values) deviation += std::abs(v - median);
      }
      total += deviation / static_cast<double>(k);
      ++cells;
    }
  }
  return cells == 0 ? 0.0 : total / static_cast<double>(cells);
}

MaeResult mae_min_avg(std::span<const Dataset> imputations, const Dataset& truth,
                      const CellMask& mask, const GowerSpace& space) {
  if (imputations.empty()) throw ValidationError("MAE needs at least 1 imputation");
  check_imputations(imputations, mask);
  if (truth.rows() != mask.rows || truth.cols() != mask.cols)
    throw ValidationError("ground truth shape does not match the missingness mask");
  MaeResult out;
  std::size_t rows_used = 0;
  for (std::size_t r = 0; r < mask.rows; ++r) {
    std::size_t cells = 0;
    for (std::size_t c = 0; c < mask.cols; ++c) cells += mask(r, c) ? 1 : 0;
    if (cells == 0) continue;
    double row_min = std::numeric_limits<double>::infinity();
    double row_sum = 0.0;
    for (const Dataset& imp : imputations) {
      double err = 0.0;
      for (std::size_t c = 0; c < mask.cols; ++c) {
        if (!mask(r, c)) continue;
        if (truth.missing(r, c)) throw ValidationError("ground truth missing at a masked cell");
        err += space.cost(c, imp(r, c), truth(r, c));
      }
      err /= static_cast<double>(cells);
      row_min = std::min(row_min, err);
      row_sum += err;
    }
    out.min_mae += row_min;
    out.avg_mae += row_sum / static_cast<double>(imputations.size());
    ++rows_used;
  }
  if (rows_used > 0) {
    out.min_mae /= static_cast<double>(rows_used);
    out.avg_mae /= static_cast<double>(rows_used);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistical inference
// ---------------------------------------------------------------------------

Matrix regression_design(const Dataset& data) {
  const TableSchema& s = data.schema();
  std::size_t width = 1;
  for (std::size_t c = 0; c < s.size(); ++c) {
    if (s.outcome_index && c == *s.outcome_index) continue;
    width += s.variables[c].is_categorical() ? s.variables[c].categories.size() - 1 : 1;
  }
  Matrix x(data.rows(), width, 0.0);
  for (std::size_t r = 0; r < data.rows(); ++r) {
    x(r, 0) = 1.0;
    std::size_t col = 1;
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s.outcome_index && c == *s.outcome_index) continue;
      const Variable& v = s.variables[c];
      if (v.is_categorical()) {
        const auto id = static_cast<std::size_t>(data(r, c));
        if (id > 0) x(r, col + id - 1) = 1.0;
        col += v.categories.size() - 1;
      } else {
        x(r, col++) = data(r, c);
      }
    }
  }
  return x;
}

OlsFit ols(const Matrix& design, std::span<const double> y) {
  const auto n = static_cast<Eigen::Index>(design.rows());
  const auto p = static_cast<Eigen::Index>(design.cols());
  OlsFit fit;
  if (static_cast<std::size_t>(n) != y.size()) throw ValidationError("OLS size mismatch");
  if (n <= p) return fit;
  Eigen::MatrixXd x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = design(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  Eigen::VectorXd yy(n);
  for (Eigen::Index i = 0; i < n; ++i) yy(i) = y[static_cast<std::size_t>(i)];

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) return fit;
  const Eigen::VectorXd beta = qr.solve(yy);
  const Eigen::VectorXd resid = yy - x * beta;
  const double sigma2 = resid.squaredNorm() / static_cast<double>(n - p);
  const Eigen::MatrixXd xtx_inv = (x.transpose() * x).inverse();
  fit.beta.assign(beta.data(), beta.data() + p);
  fit.std_error.resize(static_cast<std::size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j)
    fit.std_error[static_cast<std::size_t>(j)] = std::sqrt(std::max(0.0, sigma2 * xtx_inv(j, j)));
  fit.dof = static_cast<std::size_t>(n - p);
  fit.ok = true;
  return fit;
}

namespace {

std::vector<double> outcome_values(const Dataset& d) {
  const std::size_t o = *d.schema().outcome_index;
  std::vector<double> y(d.rows());
  for (std::size_t r = 0; r < d.rows(); ++r) y[r] = d(r, o);
  return y;
}

void require_numeric_outcome(const Dataset& d) {
  const auto& s = d.schema();
  if (!s.outcome_index || s.variables[*s.outcome_index].is_categorical())
    throw ValidationError("inference statistics need a numeric outcome");
}

}  // namespace

InferenceStats inference_stats(const Dataset& true_data, std::span<const Dataset> synthetic_sets) {
  require_numeric_outcome(true_data);
  if (synthetic_sets.empty()) throw ValidationError("need at least one synthetic set");
  require_complete(true_data, "true data");
  const OlsFit truth = ols(regression_design(true_data), outcome_values(true_data));
  if (!truth.ok) throw ValidationError("true-data design matrix is singular");
  const std::size_t p = truth.beta.size();

  std::vector<double> rel_sum(p, 0.0);
  std::vector<std::size_t> rel_count(p, 0);
  std::size_t pairs = 0;
  std::size_t covered = 0;
  for (const Dataset& s : synthetic_sets) {
    require_same_variables(true_data, s);
    require_complete(s, "synthetic data");
    const OlsFit fit = ols(regression_design(s), outcome_values(s));
    if (!fit.ok) continue;
    const boost::math::students_t dist(static_cast<double>(fit.dof));
    const double q = boost::math::quantile(dist, 0.975);
    for (std::size_t j = 0; j < p; ++j) {
      const double lo = fit.beta[j] - q * fit.std_error[j];
      const double hi = fit.beta[j] + q * fit.std_error[j];
      ++pairs;
      if (lo <= truth.beta[j] && truth.beta[j] <= hi) ++covered;
      if (std::abs(truth.beta[j]) > 1e-8) {
        rel_sum[j] += (fit.beta[j] - truth.beta[j]) / truth.beta[j];
        ++rel_count[j];
      }
    }
  }
  InferenceStats out;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  for (std::size_t j = 0; j < p; ++j) {
    if (rel_count[j] == 0) continue;
    out.p_bias += std::abs(rel_sum[j] / static_cast<double>(rel_count[j]));
    ++used;
  }
  out.p_bias = used ? out.p_bias / static_cast<double>(used) : nan;
  out.cov_rate = pairs ? static_cast<double>(covered) / static_cast<double>(pairs) : nan;
  return out;
}

// ---------------------------------------------------------------------------
// Efficiency
// ---------------------------------------------------------------------------

double macro_f1(std::span<const int> truth, std::span<const int> predicted) {
  if (truth.size() != predicted.size() || truth.empty())
    throw ValidationError("macro F1 needs matching non-empty label vectors");
  std::vector<int> labels(truth.begin(), truth.end());
  labels.insert(labels.end(), predicted.begin(), predicted.end());
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  double sum = 0.0;
  for (int c : labels) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const bool t = truth[i] == c;
      const bool p = predicted[i] == c;
      tp += t && p;
      fp += !t && p;
      fn += t && !p;
    }
    sum += 2 * tp / (2 * tp + fp + fn);
  }
  return sum / static_cast<double>(labels.size());
}

double r_squared(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.size() != predicted.size() || truth.empty())
    throw ValidationError("R^2 needs matching non-empty vectors");
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) / static_cast<double>(truth.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

namespace {

// Design for the downstream learners: intercept, numeric features scaled to
// [0, 1] by the training ranges, K-1 dummies.
Matrix learner_features(const Dataset& data, const GowerSpace& scale) {
  Matrix x = regression_design(data);
  const TableSchema& s = data.schema();
  for (std::size_t r = 0; r < data.rows(); ++r) {
    std::size_t col = 1;
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s.outcome_index && c == *s.outcome_index) continue;
      const Variable& v = s.variables[c];
      if (v.is_categorical()) {
        col += v.categories.size() - 1;
      } else {
        x(r, col) = scale.normalize(c, data(r, c));
        ++col;
      }
    }
  }
  return x;
}

// One-vs-rest logistic regression by iteratively reweighted least squares
// with a small ridge on the slopes (keeps separable classes finite).
Eigen::VectorXd fit_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const Eigen::Index p = x.cols();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
  constexpr double kRidge = 1e-4;
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd eta = x * w;
    Eigen::VectorXd mu(eta.size());
    Eigen::VectorXd weight(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu(i) = 1.0 / (1.0 + std::exp(-eta(i)));
      weight(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-12);
    }
    Eigen::MatrixXd hess = x.transpose() * weight.asDiagonal() * x;
    Eigen::VectorXd grad = x.transpose() * (y - mu);
    for (Eigen::Index j = 1; j < p; ++j) {
      hess(j, j) += kRidge;
      grad(j) -= kRidge * w(j);
    }
    const Eigen::VectorXd step = hess.ldlt().solve(grad);
    w += step;
    if (step.cwiseAbs().maxCoeff() < 1e-8) break;
  }
  return w;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return out;
}

}  // namespace

double efficiency(const Dataset& train, const Dataset& test) {
  require_same_variables(train, test);
  const auto& s = train.schema();
  if (!s.outcome_index) throw ValidationError("efficiency needs an outcome column");
  require_complete(train, "training data");
  require_complete(test, "test data");
  const std::size_t o = *s.outcome_index;
  const GowerSpace scale = GowerSpace::fit(train);
  const Matrix x_train = learner_features(train, scale);
  const Matrix x_test = learner_features(test, scale);
  const Eigen::MatrixXd ex_train = to_eigen(x_train);
  const Eigen::MatrixXd ex_test = to_eigen(x_test);
  const gbt::GBTConfig gbt_cfg;

  if (s.variables[o].is_categorical()) {
    const std::size_t n_classes = s.variables[o].categories.size();
    std::vector<int> y_train(train.rows());
    std::vector<int> y_test(test.rows());
    for (std::size_t r = 0; r < train.rows(); ++r) y_train[r] = static_cast<int>(train(r, o));
    for (std::size_t r = 0; r < test.rows(); ++r) y_test[r] = static_cast<int>(test(r, o));
    std::vector<int> present;
    for (std::size_t c = 0; c < n_classes; ++c)
      if (std::count(y_train.begin(), y_train.end(), static_cast<int>(c)) > 0)
        present.push_back(static_cast<int>(c));
    if (present.size() < 2)
      throw ValidationError("efficiency needs at least two outcome classes in training data");

    std::vector<double> logit_best(test.rows(), -std::numeric_limits<double>::infinity());
    std::vector<double> gbt_best = logit_best;
    std::vector<int> logit_pred(test.rows(), present[0]);
    std::vector<int> gbt_pred(test.rows(), present[0]);
    for (int c : present) {
      Eigen::VectorXd y(static_cast<Eigen::Index>(train.rows()));
      std::vector<double> yv(train.rows());
      for (std::size_t r = 0; r < train.rows(); ++r)
        yv[r] = y(static_cast<Eigen::Index>(r)) = y_train[r] == c ? 1.0 : 0.0;
      const Eigen::VectorXd w = fit_logistic(ex_train, y);
      const Eigen::VectorXd score = ex_test * w;
      const gbt::Forest forest = gbt::fit(x_train, yv, gbt_cfg, static_cast<std::uint64_t>(c));
      const std::vector<double> gscore = forest.predict(x_test);
      for (std::size_t r = 0; r < test.rows(); ++r) {
        if (score(static_cast<Eigen::Index>(r)) > logit_best[r]) {
          logit_best[r] = score(static_cast<Eigen::Index>(r));
          logit_pred[r] = c;
        }
        if (gscore[r] > gbt_best[r]) {
          gbt_best[r] = gscore[r];
          gbt_pred[r] = c;
        }
      }
    }
    return 0.5 * (macro_f1(y_test, logit_pred) + macro_f1(y_test, gbt_pred));
  }

  std::vector<double> y_train(train.rows());
  std::vector<double> y_test(test.rows());
  for (std::size_t r = 0; r < train.rows(); ++r) y_train[r] = train(r, o);
  for (std::size_t r = 0; r < test.rows(); ++r) y_test[r] = test(r, o);
  Eigen::VectorXd ey(static_cast<Eigen::Index>(train.rows()));
  for (std::size_t r = 0; r < train.rows(); ++r) ey(static_cast<Eigen::Index>(r)) = y_train[r];
  const Eigen::VectorXd w = ex_train.colPivHouseholderQr().solve(ey);
  const Eigen::VectorXd lin = ex_test * w;
  const std::vector<double> lin_pred(lin.data(), lin.data() + lin.size());
  const gbt::Forest forest = gbt::fit(x_train, y_train, gbt_cfg, 0);
  const std::vector<double> gbt_pred = forest.predict(x_test);
  return 0.5 * (r_squared(y_test, lin_pred) + r_squared(y_test, gbt_pred));
}

}  // namespace forestdiff::metrics
