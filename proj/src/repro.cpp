#include "forestdiff/repro.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/metrics.hpp"
#include "forestdiff/random.hpp"

namespace forestdiff::repro {

Split split_rows(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ValidationError("test fraction must lie in (0, 1)");
  const auto n_test = static_cast<std::size_t>(std::lround(test_fraction * static_cast<double>(data.rows())));
  if (n_test == 0 || n_test >= data.rows()) throw ValidationError("too few rows to split");
  std::vector<std::size_t> idx(data.rows());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0x5e}));
  std::shuffle(idx.begin(), idx.end(), rng);
  std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {data.select_rows(train), data.select_rows(test)};
}

Dataset mask_mcar(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ValidationError("MCAR fraction must lie in [0, 1)");
  Dataset out = data;
  Rng rng(derive_seed(seed, {0x3c}));
  std::bernoulli_distribution drop(fraction);
  const auto& outcome = data.schema().outcome_index;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) {
      if (outcome && c == *outcome) continue;
      if (drop(rng)) out(r, c) = kNotAValue;
    }
  return out;
}

Dataset load_csv_dataset(const std::string& path) {
  const RawTable raw = read_csv(path);
  return to_dataset(raw, infer_schema(raw));
}

namespace {

TrainConfig train_config(const RunSpec& spec) {
  TrainConfig cfg;
  cfg.process = spec.process;
  cfg.n_t = spec.n_t;
  cfg.n_noise = spec.n_noise;
  cfg.label_conditioning = spec.label_conditioning;
  cfg.seed = derive_seed(spec.seed, {0x7a});
  cfg.threads = spec.threads;
  return cfg;
}

}  // namespace

GenerationScores run_generation(const Dataset& data, const RunSpec& spec) {
  const Split split = split_rows(data, 0.2, spec.seed);
  Dataset train_on = split.train;
  if (spec.mcar > 0.0) train_on = mask_mcar(split.train, spec.mcar, spec.seed);
  const ForestDiffusionModel model = train(train_on, train_config(spec));
  SampleOptions opts;
  opts.threads = spec.threads;
  const Dataset fake = generate(model, split.train.rows(), derive_seed(spec.seed, {0x9e}), opts);

  const auto space = metrics::GowerSpace::fit(split.train);
  GenerationScores s;
  s.w_train = metrics::wasserstein(split.train, fake, space);
  s.w_test = metrics::wasserstein(split.test, fake, space);
  s.cov_train = metrics::coverage(split.train, fake, space);
  s.cov_test = metrics::coverage(split.test, fake, space);
  s.efficiency = metrics::efficiency(fake, split.test);
  return s;
}

ImputationScores run_imputation(const Dataset& data, const RunSpec& spec, int k) {
  const Split split = split_rows(data, 0.2, spec.seed);
  const Dataset masked = mask_mcar(split.train, spec.mcar, spec.seed);
  TrainConfig cfg = train_config(spec);
  cfg.process = ProcessKind::vp_diffusion;
  const ForestDiffusionModel model = train(masked, cfg);

  ImputeConfig icfg;
  icfg.k_imputations = k;
  icfg.seed = derive_seed(spec.seed, {0x1b});
  icfg.threads = spec.threads;
  const ImputeResult result = impute(model, masked, icfg);

  const metrics::CellMask mask = metrics::CellMask::of(masked);
  ImputationScores s;
  s.imputations = result.imputations.size();
  s.masked_cells = mask.count();
  for (const Dataset& imp : result.imputations)
    for (std::size_t r = 0; r < masked.rows(); ++r)
      for (std::size_t c = 0; c < masked.cols(); ++c) {
        if (mask(r, c)) continue;
        const double a = imp(r, c);
        const double b = masked(r, c);
        if (std::memcmp(&a, &b, sizeof a) != 0) s.observed_exact = false;
      }
  const auto space = metrics::GowerSpace::fit(split.train);
  if (result.imputations.size() >= 2) s.mad = metrics::mad_diversity(result.imputations, mask, space);
  const auto mae = metrics::mae_min_avg(result.imputations, split.train, mask, space);
  s.min_mae = mae.min_mae;
  s.avg_mae = mae.avg_mae;
  return s;
}

std::vector<IrisSetting> iris_settings(bool baseline_only) {
  std::vector<IrisSetting> rows = {
      {"flow n_t=50 n_noise=100", ProcessKind::flow_matching, 50, 100, 0.57, 0.92, 0.95},
      {"vp n_t=50 n_noise=100", ProcessKind::vp_diffusion, 50, 100, 0.57, 0.93, 0.96},
  };
  if (baseline_only) return rows;
  rows.push_back({"flow n_t=50 n_noise=1", ProcessKind::flow_matching, 50, 1, 0.72, 0.86, 0.81});
  rows.push_back({"vp n_t=50 n_noise=1", ProcessKind::vp_diffusion, 50, 1, 0.81, 0.71, 0.69});
  rows.push_back({"vp n_t=10 n_noise=100", ProcessKind::vp_diffusion, 10, 100, 0.75, 0.56, 0.84});
  return rows;
}

GenerationScores run_setting(const Dataset& data, const IrisSetting& setting, int n_seeds,
                             std::optional<bool> label_conditioning, int threads) {
  if (n_seeds < 1) throw ValidationError("need at least one seed");
  GenerationScores mean;
  for (int s = 0; s < n_seeds; ++s) {
    RunSpec spec;
    spec.process = setting.process;
    spec.n_t = setting.n_t;
    spec.n_noise = setting.n_noise;
    spec.seed = static_cast<std::uint64_t>(s);
    spec.label_conditioning = label_conditioning;
    spec.threads = threads;
    const GenerationScores g = run_generation(data, spec);
    const double w = 1.0 / n_seeds;
    mean.w_train += w * g.w_train;
    mean.w_test += w * g.w_test;
    mean.cov_train += w * g.cov_train;
    mean.cov_test += w * g.cov_test;
    mean.efficiency += w * g.efficiency;
  }
  return mean;
}

}  // namespace forestdiff::repro
