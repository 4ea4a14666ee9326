#include <doctest.h>

#include <cmath>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/model.hpp"
#include "forestdiff/random.hpp"
#include "forestdiff/repro.hpp"

using namespace forestdiff;

namespace {

gbt::GBTConfig small_gbt() {
  gbt::GBTConfig g;
  g.n_trees = 5;
  g.max_depth = 3;
  return g;
}

Dataset iris() { return repro::load_csv_dataset(std::string(FORESTDIFF_DATA_DIR) + "/iris.csv"); }

Dataset toy(std::size_t n, std::uint64_t seed) {
  TableSchema s;
  s.variables = {{"a", VariableKind::continuous, {}},
                 {"b", VariableKind::integer, {}},
                 {"y", VariableKind::categorical, {"p", "q", "r"}}};
  s.outcome_index = 2;
  Dataset d(s, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise;
  for (std::size_t r = 0; r < n; ++r) {
    d(r, 2) = static_cast<double>(r % 3);
    d(r, 0) = d(r, 2) * 2 + noise(rng);
    d(r, 1) = std::round(5 + noise(rng));
  }
  return d;
}

bool all_finite(const Dataset& d) {
  for (double v : d.cells().values())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_CASE("Iris grid has one forest per level, column and class") {
  TrainConfig cfg;
  cfg.process = ProcessKind::flow_matching;
  cfg.n_noise = 2;
  cfg.gbt = small_gbt();
  cfg.gbt.n_trees = 1;
  const ForestDiffusionModel m = train(iris(), cfg);
  CHECK(m.conditioned);
  CHECK(m.width() == 4);
  CHECK(m.n_labels() == 3);
  CHECK(m.forests.size() == 600);
  for (const auto& f : m.forests) CHECK(f.n_features == 4);
  CHECK(m.label_probs == std::vector<double>{1.0 / 3, 1.0 / 3, 1.0 / 3});
}

TEST_CASE("unconditioned grid includes the outcome dummies") {
  TrainConfig cfg;
  cfg.n_t = 4;
  cfg.n_noise = 3;
  cfg.gbt = small_gbt();
  cfg.label_conditioning = false;
  const ForestDiffusionModel m = train(toy(30, 1), cfg);
  CHECK(m.width() == 4);  // a, b, two dummies for y
  CHECK(m.forests.size() == 16);
  const Dataset g = generate(m, 50, 3);
  CHECK(g.rows() == 50);
  CHECK(g.missing_count() == 0);
}

TEST_CASE("training validation errors") {
  TrainConfig cfg;
  cfg.n_noise = 0;
  CHECK_THROWS_AS(train(toy(9, 1), cfg), ValidationError);
  cfg.n_noise = 2;
  cfg.n_t = 0;
  CHECK_THROWS_AS(train(toy(9, 1), cfg), ValidationError);

  Dataset d = toy(9, 1);
  TableSchema s = d.schema();
  s.outcome_index = 0;
  Dataset continuous_outcome(s, d.rows());
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t c = 0; c < d.cols(); ++c) continuous_outcome(r, c) = d(r, c);
  TrainConfig on;
  on.n_t = 2;
  on.n_noise = 2;
  on.gbt = small_gbt();
  on.label_conditioning = true;
  CHECK_THROWS_AS(train(continuous_outcome, on), ValidationError);
  CHECK_THROWS_AS(generate(train(d, on), 0, 1), ValidationError);
}

TEST_CASE("memory guard halves n_noise") {
  TrainConfig cfg;
  cfg.n_t = 2;
  cfg.n_noise = 100;
  cfg.gbt = small_gbt();
  cfg.cell_budget = 30 * 2 * 30;  // 30 rows x 2 features: fits n_noise 30
  const ForestDiffusionModel m = train(toy(30, 2), cfg);
  CHECK(m.n_noise == 25);
  CHECK(m.warnings.size() == 1);
}

TEST_CASE("zero-tree flow model decodes its initial noise") {
  const Dataset d = toy(20, 4).drop_column(2);
  ForestDiffusionModel m;
  m.process = ProcessKind::flow_matching;
  m.grid.n_t = 3;
  m.schema = d.schema();
  m.encoder = fit_encoder(d);
  m.n_noise = 1;
  m.forests.assign(3 * m.width(), gbt::Forest{{}, 0.0, 0.3, m.width()});
  Rng rng(17);
  const Matrix z = standard_normal(12, m.width(), rng);
  CHECK(generate(m, 12, 17) == decode(m.encoder, z));
}

TEST_CASE("conditioned sampling follows label_probs") {
  Dataset d = toy(40, 5);
  // Unbalanced classes: 4 / 12 / 24 rows.
  for (std::size_t r = 0; r < d.rows(); ++r) d(r, 2) = r < 4 ? 0 : (r < 16 ? 1 : 2);
  TrainConfig cfg;
  cfg.n_t = 2;
  cfg.n_noise = 2;
  cfg.gbt = small_gbt();
  cfg.gbt.n_trees = 1;
  const ForestDiffusionModel m = train(d, cfg);
  REQUIRE(m.conditioned);
  const Dataset g = generate(m, 10000, 8);
  std::vector<double> freq(3, 0.0);
  for (std::size_t r = 0; r < g.rows(); ++r) freq[static_cast<std::size_t>(g(r, 2))] += 1e-4;
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(freq[k] - m.label_probs[k]) <= 0.02);
}

TEST_CASE("results do not depend on the worker count") {
  const Dataset d = toy(30, 6);
  TrainConfig cfg;
  cfg.n_t = 5;
  cfg.n_noise = 4;
  cfg.gbt = small_gbt();
  cfg.seed = 12;
  cfg.threads = 1;
  const ForestDiffusionModel one = train(d, cfg);
  cfg.threads = 4;
  const ForestDiffusionModel four = train(d, cfg);
  CHECK(one.forests == four.forests);
  CHECK(generate(one, 40, 2, {process::NoiseScaling::euler_maruyama, 1}) ==
        generate(four, 40, 2, {process::NoiseScaling::euler_maruyama, 3}));

  const Dataset masked = repro::mask_mcar(d, 0.3, 1);
  ImputeConfig ic;
  ic.k_imputations = 2;
  ic.threads = 1;
  const auto a = impute(one, masked, ic);
  ic.threads = 3;
  const auto b = impute(one, masked, ic);
  CHECK(a.imputations == b.imputations);
}

TEST_CASE("training on incomplete data keeps the grid and generates finite rows") {
  const Dataset d = toy(60, 7);
  TrainConfig cfg;
  cfg.n_t = 5;
  cfg.n_noise = 5;
  cfg.gbt = small_gbt();
  const ForestDiffusionModel complete = train(d, cfg);
  for (double frac : {0.2, 0.6, 0.9}) {
    Dataset masked = repro::mask_mcar(d, frac, 3);
    masked(0, 0) = d(0, 0);  // keep one observed value per column
    masked(0, 1) = d(0, 1);
    for (ProcessKind kind : {ProcessKind::vp_diffusion, ProcessKind::flow_matching}) {
      cfg.process = kind;
      const ForestDiffusionModel m = train(masked, cfg);
      CHECK(m.forests.size() == complete.forests.size());
      CHECK(all_finite(generate(m, 30, 1)));
    }
  }
}

TEST_CASE("rows with a missing label are dropped when conditioning") {
  Dataset d = toy(30, 8);
  d(0, 2) = kNotAValue;
  TrainConfig cfg;
  cfg.n_t = 2;
  cfg.n_noise = 2;
  cfg.gbt = small_gbt();
  const ForestDiffusionModel m = train(d, cfg);
  CHECK(m.warnings.size() == 1);
  CHECK(m.label_probs[0] == doctest::Approx(9.0 / 29));
}

TEST_CASE("REPAINT schedule follows the counter protocol") {
  for (int n_t : {1, 5, 10, 50}) {
    for (int r : {1, 2, 10}) {
      for (int j : {1, 2, 5}) {
        if (j > n_t) continue;
        const auto steps = repaint_schedule(n_t, r, j);
        // Replay the protocol from its definition.
        std::vector<RepaintStep> want;
        int counter = 1;
        int t = n_t;
        while (t > 0) {
          want.push_back({false, t});
          const bool boundary = (t + 1) % j == 0;
          if (boundary && counter < r) {
            int level = t - 1;
            for (int k = 0; k < j && level < n_t; ++k) want.push_back({true, level++});
            t = level;
            ++counter;
          } else {
            if (boundary) counter = 0;
            --t;
          }
        }
        CHECK(steps == want);
        // Levels stay in range and the final move reaches level 0.
        int level = n_t;
        for (const auto& s : steps) {
          CHECK(s.level == level);
          level += s.forward ? 1 : -1;
          CHECK(level >= 0);
          CHECK(level <= n_t);
        }
        CHECK(level == 0);
      }
    }
  }
  // n_t=10, r=2, j=5: the first window (boundary at t=9) gets r-1 = 1
  // repaint clamped to two levels, the second (t=4) gets r = 2 full jumps.
  const auto small = repaint_schedule(10, 2, 5);
  int forward = 0;
  for (const auto& s : small) forward += s.forward ? 1 : 0;
  CHECK(forward == 2 + 2 * 5);
  CHECK_THROWS_AS(repaint_schedule(10, 1, 11), ValidationError);
}

TEST_CASE("imputation contract") {
  const Dataset d = toy(40, 9);
  TrainConfig cfg;
  cfg.n_t = 10;
  cfg.n_noise = 5;
  cfg.gbt = small_gbt();
  cfg.label_conditioning = false;
  const Dataset masked = repro::mask_mcar(d, 0.25, 2);
  const ForestDiffusionModel m = train(masked, cfg);
  ImputeConfig ic;
  ic.k_imputations = 3;
  ic.repaint_rounds = 3;
  ic.jump_size = 2;
  const ImputeResult res = impute(m, masked, ic);
  CHECK(res.had_missing);
  REQUIRE(res.imputations.size() == 3);
  for (const Dataset& imp : res.imputations) {
    CHECK(imp.missing_count() == 0);
    for (std::size_t r = 0; r < d.rows(); ++r)
      for (std::size_t c = 0; c < d.cols(); ++c)
        if (!masked.missing(r, c)) CHECK(imp(r, c) == masked(r, c));
  }
  CHECK_FALSE(res.imputations[0] == res.imputations[1]);

  const ImputeResult none = impute(m, d, ic);
  CHECK_FALSE(none.had_missing);
  for (const Dataset& imp : none.imputations) CHECK(imp == d);

  cfg.process = ProcessKind::flow_matching;
  CHECK_THROWS_AS(impute(train(masked, cfg), masked, ic), ValidationError);
}

TEST_CASE("imputation with conditioning fills missing labels") {
  Dataset d = toy(30, 10);
  Dataset masked = repro::mask_mcar(d, 0.2, 4);
  TrainConfig cfg;
  cfg.n_t = 5;
  cfg.n_noise = 3;
  cfg.gbt = small_gbt();
  const ForestDiffusionModel m = train(masked, cfg);
  REQUIRE(m.conditioned);
  masked(3, 2) = kNotAValue;
  ImputeConfig ic;
  ic.k_imputations = 2;
  const ImputeResult res = impute(m, masked, ic);
  for (const Dataset& imp : res.imputations) CHECK(imp.missing_count() == 0);
}
