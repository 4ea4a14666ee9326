#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/metrics.hpp"
#include "oracles.hpp"

using namespace forestdiff;
using namespace forestdiff::metrics;

namespace {

TableSchema one_continuous() {
  TableSchema s;
  s.variables = {{"x", VariableKind::continuous, {}}};
  return s;
}

Dataset column(const std::vector<double>& v) {
  Dataset d(one_continuous(), v.size());
  for (std::size_t r = 0; r < v.size(); ++r) d(r, 0) = v[r];
  return d;
}

TableSchema mixed() {
  TableSchema s;
  s.variables = {{"a", VariableKind::continuous, {}},
                 {"b", VariableKind::integer, {}},
                 {"c", VariableKind::categorical, {"u", "v", "w"}}};
  return s;
}

Dataset random_mixed(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> noise;
  std::uniform_int_distribution<int> cat(0, 2), integer(0, 9);
  Dataset d(mixed(), n);
  for (std::size_t r = 0; r < n; ++r) {
    d(r, 0) = noise(rng);
    d(r, 1) = integer(rng);
    d(r, 2) = cat(rng);
  }
  return d;
}

}  // namespace

TEST_CASE("gower examples") {
  const Dataset ref = column({0.0, 1.0});
  const auto space = GowerSpace::fit(ref);
  const std::vector<double> a = {0.2}, b = {0.2}, c = {0.7};
  CHECK(gower(a, b, space) == 0.0);
  CHECK(gower(a, c, space) == doctest::Approx(0.5));
  const std::vector<double> miss = {kNotAValue};
  CHECK_THROWS_AS(gower(a, miss, space), ValidationError);

  TableSchema cat;
  cat.variables = {{"c", VariableKind::categorical, {"p", "q"}}};
  Dataset cd(cat, 2);
  cd(0, 0) = 0;
  cd(1, 0) = 1;
  const auto cspace = GowerSpace::fit(cd);
  const std::vector<double> p = {0}, q = {1};
  CHECK(gower(p, q, cspace) == 1.0);

  TableSchema two;
  two.variables = {{"u", VariableKind::continuous, {}}, {"v", VariableKind::continuous, {}}};
  Dataset td(two, 2);
  td(0, 0) = 0;
  td(0, 1) = 0;
  td(1, 0) = 10;
  td(1, 1) = 1;
  const auto tspace = GowerSpace::fit(td);
  const std::vector<double> r1 = {1, 0.5}, r2 = {4, 0.7};
  CHECK(gower(r1, r2, tspace) == doctest::Approx(0.5));
  // Values outside the fitted range are clipped.
  const std::vector<double> far = {100, 0.5}, edge = {10, 0.5};
  CHECK(gower(far, edge, tspace) == 0.0);
}

TEST_CASE("gower metric axioms on random rows") {
  std::mt19937_64 rng(42);
  const Dataset ref = random_mixed(50, rng);
  const auto space = GowerSpace::fit(ref);
  const Dataset rows = random_mixed(3000, rng);
  for (std::size_t i = 0; i < 1000; ++i) {
    const auto a = rows.cells().row(3 * i);
    const auto b = rows.cells().row(3 * i + 1);
    const auto c = rows.cells().row(3 * i + 2);
    const double ab = gower(a, b, space);
    CHECK(ab >= 0.0);
    CHECK(ab <= 3.0);
    CHECK(ab == gower(b, a, space));
    CHECK(gower(a, a, space) == 0.0);
    CHECK(ab <= gower(a, c, space) + gower(c, b, space) + 1e-12);
    if (ab == 0.0) {
      for (std::size_t v = 0; v < 3; ++v) CHECK(space.cost(v, a[v], b[v]) == 0.0);
    }
  }
}

TEST_CASE("wasserstein examples") {
  const Dataset real = column({0.0, 1.0});
  const auto space = GowerSpace::fit(real);
  CHECK(wasserstein(real, column({0.25, 0.5}), space) == doctest::Approx(0.375));
  CHECK(wasserstein(real, column({1.0, 0.0}), space) == 0.0);
  CHECK(wasserstein(column({0.2}), column({0.9}), space) == doctest::Approx(0.7));
  CHECK_THROWS_AS(wasserstein(real, column({kNotAValue}), space), ValidationError);
}

TEST_CASE("transport cost equals plan enumeration on all shapes up to 3x3") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 3);
  int checked = 0;
  for (std::size_t n = 1; n <= 3; ++n)
    for (std::size_t m = 1; m <= 3; ++m)
      for (int trial = 0; trial < 300; ++trial) {
        Matrix cost(n, m);
        // Half the instances use coarse costs to exercise ties.
        for (double& c : cost.values()) c = trial % 2 ? u(rng) : coarse(rng) * 0.5;
        CHECK(std::abs(transport_cost(cost) - oracle::enumerate_plans(cost)) <= 1e-9);
        ++checked;
      }
  CHECK(checked == 2700);
}

TEST_CASE("transport cost equals best assignment for equal sizes up to 6") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t n = 1; n <= 6; ++n)
    for (int trial = 0; trial < 40; ++trial) {
      Matrix cost(n, n);
      for (double& c : cost.values()) c = u(rng);
      CHECK(std::abs(transport_cost(cost) - oracle::best_assignment(cost)) <= 1e-9);
    }
}

TEST_CASE("wasserstein subsamples above the cap") {
  std::mt19937_64 rng(8);
  const Dataset a = random_mixed(40, rng);
  const Dataset b = random_mixed(40, rng);
  const auto space = GowerSpace::fit(a);
  const double capped = wasserstein(a, b, space, 10, 3);
  CHECK(capped == wasserstein(a, b, space, 10, 3));
  CHECK(capped >= 0.0);
  CHECK(wasserstein(a, a, space, 10, 3) >= 0.0);
}

TEST_CASE("coverage examples") {
  const Dataset line = column({0, 1, 2, 3, 4});
  const auto space = GowerSpace::fit(line);
  // Brute force: k = 1 and 2 leave interior points with tied neighbours
  // uncovered by the open ball, k = 3 covers every point.
  CHECK(coverage_k(space.pairwise(line, line)) == 3);
  CHECK(coverage(line, column({0.1}), space) == doctest::Approx(0.6));
  CHECK(coverage(line, column({100.0}), space) == doctest::Approx(0.4));  // clipped to 4: covers 3, 4
  CHECK(coverage(column({0, 0.1, 0.2}), column({50.0}), GowerSpace::fit(column({0, 100}))) == 0.0);
  CHECK_THROWS_AS(coverage(column({1}), column({1}), space), ValidationError);
}

TEST_CASE("coverage of real by real is at least 0.95") {
  std::mt19937_64 rng(13);
  std::uniform_int_distribution<int> size(2, 80);
  for (int trial = 0; trial < 50; ++trial) {
    const Dataset d = random_mixed(static_cast<std::size_t>(size(rng)), rng);
    const auto space = GowerSpace::fit(d);
    CHECK(coverage(d, d, space) >= 0.95);
  }
}

TEST_CASE("MAD examples") {
  const Dataset ref = column({0.0, 1.0});
  const auto space = GowerSpace::fit(ref);
  CellMask mask{1, 1, {1}};
  std::vector<Dataset> same = {column({0.3}), column({0.3})};
  CHECK(mad_diversity(same, mask, space) == 0.0);
  std::vector<Dataset> spread = {column({0.0}), column({0.0}), column({1.0})};
  CHECK(mad_diversity(spread, mask, space) == doctest::Approx(1.0 / 3));
  CHECK_THROWS_AS(mad_diversity(std::span(spread.data(), 1), mask, space), ValidationError);

  TableSchema cat;
  cat.variables = {{"c", VariableKind::categorical, {"a", "b"}}};
  Dataset ca(cat, 1), cb(cat, 1);
  ca(0, 0) = 0;
  cb(0, 0) = 1;
  std::vector<Dataset> votes = {ca, ca, cb};
  CHECK(mad_diversity(votes, mask, GowerSpace::fit(votes[0])) == doctest::Approx(1.0 / 3));
}

TEST_CASE("MinMAE and AvgMAE") {
  const auto space = GowerSpace::fit(column({0.0, 1.0}));
  const Dataset truth = column({0.0, 0.0});
  CellMask mask{2, 1, {1, 1}};
  std::vector<Dataset> exact = {truth};
  const auto zero = mae_min_avg(exact, truth, mask, space);
  CHECK(zero.min_mae == 0.0);
  CHECK(zero.avg_mae == 0.0);

  CellMask one{1, 1, {1}};
  std::vector<Dataset> two = {column({0.2}), column({0.4})};
  const auto r = mae_min_avg(two, column({0.0}), one, space);
  CHECK(r.min_mae == doctest::Approx(0.2));
  CHECK(r.avg_mae == doctest::Approx(0.3));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::bernoulli_distribution drop(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> tv(12);
    for (double& v : tv) v = u(rng);
    CellMask m{12, 1, std::vector<std::uint8_t>(12)};
    for (auto& b : m.missing) b = drop(rng);
    std::vector<Dataset> imps;
    for (int k = 0; k < 4; ++k) {
      std::vector<double> iv(12);
      for (double& v : iv) v = u(rng);
      imps.push_back(column(iv));
    }
    const auto res = mae_min_avg(imps, column(tv), m, space);
    CHECK(res.min_mae <= res.avg_mae);
  }
}

TEST_CASE("inference statistics") {
  TableSchema s;
  s.variables = {{"x1", VariableKind::continuous, {}},
                 {"x2", VariableKind::continuous, {}},
                 {"y", VariableKind::continuous, {}}};
  s.outcome_index = 2;
  std::mt19937_64 rng(21);
  std::normal_distribution<double> noise;
  Dataset d(s, 80);
  for (std::size_t r = 0; r < d.rows(); ++r) {
    d(r, 0) = noise(rng);
    d(r, 1) = noise(rng);
    d(r, 2) = 1.0 + 2.0 * d(r, 0) - 0.5 * d(r, 1) + 0.3 * noise(rng);
  }
  std::vector<Dataset> same = {d, d};
  const InferenceStats st = inference_stats(d, same);
  CHECK(st.p_bias == 0.0);
  CHECK(st.cov_rate == 1.0);

  // Constant outcome shift moves only the intercept.
  Dataset shifted = d;
  for (std::size_t r = 0; r < d.rows(); ++r) shifted(r, 2) += 3.0;
  const auto y_of = [](const Dataset& data) {
    std::vector<double> y(data.rows());
    for (std::size_t r = 0; r < data.rows(); ++r) y[r] = data(r, 2);
    return y;
  };
  const OlsFit base = ols(regression_design(d), y_of(d));
  const OlsFit moved = ols(regression_design(shifted), y_of(shifted));
  REQUIRE(base.ok);
  CHECK(moved.beta[0] == doctest::Approx(base.beta[0] + 3.0));
  CHECK(moved.beta[1] == doctest::Approx(base.beta[1]));
  CHECK(moved.beta[2] == doctest::Approx(base.beta[2]));

  // A coefficient that is exactly zero is left out of the bias mean.
  Dataset zero_slope = d;
  for (std::size_t r = 0; r < d.rows(); ++r) zero_slope(r, 1) = 0.0;
  CHECK_FALSE(ols(regression_design(zero_slope), y_of(zero_slope)).ok);

  TableSchema cat = s;
  cat.variables[2] = {"y", VariableKind::binary, {"a", "b"}};
  Dataset cd(cat, 3);
  CHECK_THROWS_AS(inference_stats(cd, same), ValidationError);
}

TEST_CASE("percent bias skips zero coefficients") {
  TableSchema s;
  s.variables = {{"x", VariableKind::continuous, {}}, {"y", VariableKind::continuous, {}}};
  s.outcome_index = 1;
  // y = 2x exactly on the true data: intercept 0, slope 2.
  Dataset truth(s, 4), synth(s, 4);
  const double xs[4] = {-1.5, -0.5, 0.5, 1.5};
  const double noise[4] = {0.1, -0.1, -0.1, 0.1};
  for (std::size_t r = 0; r < 4; ++r) {
    truth(r, 0) = synth(r, 0) = xs[r];
    truth(r, 1) = 2.0 * xs[r];
    synth(r, 1) = 3.0 * xs[r] + noise[r];
  }
  std::vector<Dataset> sets = {synth};
  const InferenceStats st = inference_stats(truth, sets);
  CHECK(st.p_bias == doctest::Approx(0.5));  // slope only: |3 - 2| / 2
}

TEST_CASE("efficiency and scores") {
  const std::vector<int> t = {0, 1, 2, 1};
  CHECK(macro_f1(t, t) == 1.0);
  const std::vector<int> p = {0, 1, 1, 1};
  // class 0: 1, class 1: 2*2/(4+1) = 0.8, class 2: 0
  CHECK(macro_f1(t, p) == doctest::Approx((1.0 + 0.8 + 0.0) / 3));
  const std::vector<double> y = {1, 2, 3, 4};
  CHECK(r_squared(y, y) == 1.0);
  const std::vector<double> constant(4, 10.0);
  CHECK(r_squared(y, constant) <= 0.0);

  // Separable classification: both learners predict perfectly.
  TableSchema s;
  s.variables = {{"x", VariableKind::continuous, {}}, {"y", VariableKind::categorical, {"a", "b", "c"}}};
  s.outcome_index = 1;
  Dataset train(s, 30), test(s, 9);
  for (std::size_t r = 0; r < 30; ++r) {
    train(r, 1) = static_cast<double>(r % 3);
    train(r, 0) = 10.0 * train(r, 1) + static_cast<double>(r % 5) * 0.1;
  }
  for (std::size_t r = 0; r < 9; ++r) {
    test(r, 1) = static_cast<double>(r % 3);
    test(r, 0) = 10.0 * test(r, 1) + 0.25;
  }
  CHECK(efficiency(train, test) == doctest::Approx(1.0));

  Dataset single = train;
  for (std::size_t r = 0; r < 30; ++r) single(r, 1) = 0;
  CHECK_THROWS_AS(efficiency(single, test), ValidationError);

  TableSchema rs;
  rs.variables = {{"x", VariableKind::continuous, {}}, {"y", VariableKind::continuous, {}}};
  rs.outcome_index = 1;
  Dataset rtrain(rs, 40), rtest(rs, 10);
  for (std::size_t r = 0; r < 40; ++r) {
    rtrain(r, 0) = static_cast<double>(r);
    rtrain(r, 1) = 3.0 * static_cast<double>(r) + 1.0;
  }
  for (std::size_t r = 0; r < 10; ++r) {
    rtest(r, 0) = 4.0 * static_cast<double>(r) + 0.5;
    rtest(r, 1) = 3.0 * rtest(r, 0) + 1.0;
  }
  CHECK(efficiency(rtrain, rtest) > 0.95);
}
