#include "forestdiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "forestdiff/errors.hpp"
#include "forestdiff/random.hpp"

namespace forestdiff {

void TrainConfig::validate() const {
  if (n_t < 1) throw ValidationError("n_t must be >= 1");
  if (n_noise < 1) throw ValidationError("n_noise must be >= 1");
  if (cell_budget == 0) throw ValidationError("cell budget must be positive");
  gbt.validate();
  schedule.validate();
}

void ImputeConfig::validate(int n_t) const {
  if (k_imputations < 1) throw ValidationError("number of imputations must be >= 1");
  if (repaint_rounds < 1) throw ValidationError("repaint rounds must be >= 1");
  if (jump_size < 1 || jump_size > n_t)
    throw ValidationError("jump size must lie in [1, n_t]");
}

void ForestDiffusionModel::validate() const {
  grid.validate();
  schedule.validate();
  if (conditioned) {
    if (!schema.outcome_is_label())
      throw ValidationError("conditioned model without a categorical outcome");
    if (label_probs.size() != schema.variables[*schema.outcome_index].categories.size())
      throw ValidationError("label distribution does not match outcome vocabulary");
  }
  const std::size_t expected = static_cast<std::size_t>(grid.n_t) * n_labels() * width();
  if (forests.size() != expected)
    throw ValidationError("model grid has " + std::to_string(forests.size()) +
                          " forests, expected " + std::to_string(expected));
  for (const auto& f : forests)
    if (f.n_features != width()) throw ValidationError("forest feature width mismatch");
}

namespace {

struct PreparedFeatures {
  Dataset features;
  std::vector<int> labels;  // -1 when missing or unconditioned
};

PreparedFeatures split_outcome(const Dataset& data, bool conditioned) {
  PreparedFeatures out;
  if (!conditioned) {
    out.features = data;
    out.labels.assign(data.rows(), -1);
    return out;
  }
  const std::size_t o = *data.schema().outcome_index;
  out.features = data.drop_column(o);
  out.labels.resize(data.rows());
  for (std::size_t r = 0; r < data.rows(); ++r)
    out.labels[r] = data.missing(r, o) ? -1 : static_cast<int>(data(r, o));
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = m.row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

// Predictions of every column model at `level` for the current state.
Matrix predict_level(const ForestDiffusionModel& model, int level, const Matrix& x,
                     const std::vector<std::vector<std::size_t>>& rows_by_label, int threads) {
  const std::size_t p = model.width();
  Matrix out(x.rows(), p);
  const std::size_t n_labels = rows_by_label.size();
  parallel_for(p * n_labels, threads, [&](std::size_t task) {
    const std::size_t label = task / p;
    const std::size_t column = task % p;
    const gbt::Forest& f = model.forest(level, column, label);
    for (std::size_t r : rows_by_label[label]) out(r, column) = f.predict_row(x.row(r));
  });
  return out;
}

std::vector<std::vector<std::size_t>> group_by_label(std::span<const int> labels,
                                                     std::size_t n_labels) {
  std::vector<std::vector<std::size_t>> groups(n_labels);
  for (std::size_t r = 0; r < labels.size(); ++r)
    groups[labels[r] < 0 ? 0 : static_cast<std::size_t>(labels[r])].push_back(r);
  return groups;
}

}  // namespace

Dataset attach_outcome(const Dataset& features, const TableSchema& full_schema,
                       std::span<const double> labels) {
  const std::size_t o = *full_schema.outcome_index;
  Dataset out(full_schema, features.rows());
  for (std::size_t r = 0; r < features.rows(); ++r) {
    for (std::size_t c = 0, k = 0; c < full_schema.size(); ++c)
      out(r, c) = c == o ? labels[r] : features(r, k++);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

ForestDiffusionModel train(const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate();
  const TableSchema& schema = data.schema();

  ForestDiffusionModel model;
  model.process = cfg.process;
  model.grid.n_t = cfg.n_t;
  model.schedule = cfg.schedule;
  model.schema = schema;
  model.conditioned = cfg.label_conditioning.value_or(schema.outcome_is_label());
  if (model.conditioned && !schema.outcome_is_label())
    throw ValidationError("label conditioning requires a categorical outcome");

  PreparedFeatures prepared = split_outcome(data, model.conditioned);
  std::size_t n_labels = 1;
  if (model.conditioned) {
    n_labels = schema.variables[*schema.outcome_index].categories.size();
    std::vector<std::size_t> keep;
    std::vector<double> counts(n_labels, 0.0);
    for (std::size_t r = 0; r < data.rows(); ++r) {
      if (prepared.labels[r] < 0) continue;
      keep.push_back(r);
      counts[static_cast<std::size_t>(prepared.labels[r])] += 1.0;
    }
    if (keep.size() < data.rows()) {
      model.warnings.push_back(std::to_string(data.rows() - keep.size()) +
                               " rows with a missing outcome were excluded from training");
      std::vector<int> kept_labels;
      for (std::size_t r : keep) kept_labels.push_back(prepared.labels[r]);
      prepared.features = prepared.features.select_rows(keep);
      prepared.labels = std::move(kept_labels);
    }
    for (std::size_t k = 0; k < n_labels; ++k)
      if (counts[k] == 0.0)
        throw ValidationError("outcome class '" +
                              schema.variables[*schema.outcome_index].categories[k] +
                              "' has no training rows");
    model.label_probs.resize(n_labels);
    for (std::size_t k = 0; k < n_labels; ++k)
      model.label_probs[k] = counts[k] / static_cast<double>(keep.size());
  }

  model.encoder = fit_encoder(prepared.features);
  const Matrix x = encode(model.encoder, prepared.features).values;
  const std::size_t n = x.rows();
  const std::size_t p = x.cols();
  if (p == 0) throw ValidationError("no feature columns to model");

  int n_noise = cfg.n_noise;
  while (n_noise > 1 && static_cast<double>(n) * n_noise * static_cast<double>(p) >
                            static_cast<double>(cfg.cell_budget)) {
    n_noise /= 2;
  }
  if (n_noise != cfg.n_noise)
    model.warnings.push_back("n_noise reduced from " + std::to_string(cfg.n_noise) + " to " +
                             std::to_string(n_noise) + " to fit the memory budget");
  model.n_noise = n_noise;

  // Duplicated data and one shared noise draw for every level.
  const std::size_t n_dup = n * static_cast<std::size_t>(n_noise);
  Matrix x_dup(n_dup, p);
  for (std::size_t i = 0; i < n_dup; ++i) {
    auto src = x.row(i % n);
    std::copy(src.begin(), src.end(), x_dup.row(i).begin());
  }
  Rng noise_rng(derive_seed(cfg.seed, {0x5a}));
  const Matrix z = standard_normal(n_dup, p, noise_rng);

  std::vector<std::vector<std::size_t>> rows_by_label(n_labels);
  for (std::size_t i = 0; i < n_dup; ++i) {
    const int label = model.conditioned ? prepared.labels[i % n] : 0;
    rows_by_label[static_cast<std::size_t>(label)].push_back(i);
  }

  model.forests.resize(static_cast<std::size_t>(cfg.n_t) * n_labels * p);
  parallel_for(static_cast<std::size_t>(cfg.n_t) * n_labels, cfg.threads, [&](std::size_t task) {
    const int level = static_cast<int>(task / n_labels) + 1;
    const std::size_t label = task % n_labels;
    const auto& rows = rows_by_label[label];
    const Matrix xs = gather_rows(x_dup, rows);
    const Matrix zs = gather_rows(z, rows);
    const double t = model.grid.level(level);
    process::ForwardPair fwd = cfg.process == ProcessKind::flow_matching
                                   ? process::flow_forward(zs, xs, t)
                                   : process::vp_forward(zs, xs, t, cfg.schedule);
    const gbt::BinnedMatrix binned(fwd.x_t, cfg.gbt.n_bins);
    std::vector<std::size_t> fit_rows;
    std::vector<double> targets;
    for (std::size_t j = 0; j < p; ++j) {
      fit_rows.clear();
      targets.clear();
      for (std::size_t r = 0; r < xs.rows(); ++r) {
        if (is_missing(xs(r, j))) continue;
        fit_rows.push_back(r);
        targets.push_back(fwd.target(r, j));
      }
      gbt::Forest& slot = model.forests[model.forest_index(level, j, label)];
      if (fit_rows.empty()) {
        slot = gbt::Forest{{}, 0.0, cfg.gbt.learning_rate, p};
        continue;
      }
      if (fit_rows.size() == xs.rows()) fit_rows.clear();
      slot = gbt::fit(binned, fit_rows, targets, cfg.gbt,
                      derive_seed(cfg.seed, {static_cast<std::uint64_t>(level), j, label}));
    }
  });
  return model;
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

Dataset generate(const ForestDiffusionModel& model, std::size_t n_obs, std::uint64_t seed,
                 const SampleOptions& opts) {
  if (n_obs == 0) throw ValidationError("number of generated rows must be >= 1");
  model.validate();
  Rng rng(seed);
  std::vector<int> labels(n_obs, 0);
  if (model.conditioned) {
    std::discrete_distribution<int> pick(model.label_probs.begin(), model.label_probs.end());
    for (int& l : labels) l = pick(rng);
  }
  const auto groups = group_by_label(labels, model.n_labels());
  const std::size_t p = model.width();
  const double h = model.grid.step();
  Matrix x = standard_normal(n_obs, p, rng);

  if (model.process == ProcessKind::flow_matching) {
    for (int level = 1; level <= model.grid.n_t; ++level) {
      const Matrix v = predict_level(model, level, x, groups, opts.threads);
      x = process::flow_reverse_step(x, v, h);
    }
  } else {
    const Matrix zero(n_obs, p, 0.0);
    for (int level = model.grid.n_t; level >= 1; --level) {
      const Matrix eps = predict_level(model, level, x, groups, opts.threads);
      const Matrix z = level > 1 ? standard_normal(n_obs, p, rng) : zero;
      x = process::vp_reverse_step(x, eps, model.grid.level(level), h, z, model.schedule,
                                   opts.scaling);
    }
  }

  Dataset features = decode(model.encoder, x);
  if (!model.conditioned) return features;
  std::vector<double> label_values(labels.begin(), labels.end());
  return attach_outcome(features, model.schema, label_values);
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

std::vector<RepaintStep> repaint_schedule(int n_t, int repaint_rounds, int jump_size) {
  if (n_t < 1 || repaint_rounds < 1 || jump_size < 1 || jump_size > n_t)
    throw ValidationError("invalid REPAINT parameters");
  std::vector<RepaintStep> steps;
  int counter = 1;
  int t = n_t;
  while (t > 0) {
    steps.push_back({false, t});
    if ((t + 1) % jump_size == 0) {
      if (counter < repaint_rounds) {
        // Jump back from level t-1, never past the pure-noise level.
        const int levels = std::min(jump_size, n_t - (t - 1));
        for (int a = t - 1; a < t - 1 + levels; ++a) steps.push_back({true, a});
        ++counter;
        t = t - 1 + levels;
        continue;
      }
      counter = 0;
    }
    --t;
  }
  return steps;
}

ImputeResult impute(const ForestDiffusionModel& model, const Dataset& data,
                    const ImputeConfig& cfg) {
  if (model.process != ProcessKind::vp_diffusion)
    throw ValidationError(
        "imputation requires a VP diffusion model: flow sampling is deterministic and cannot "
        "be steered toward the observed values");
  cfg.validate(model.grid.n_t);
  model.validate();
  if (!(data.schema().variables == model.schema.variables))
    throw ValidationError("dataset schema does not match the model schema");
  data.validate();

  ImputeResult result;
  if (data.missing_count() == 0) {
    result.had_missing = false;
    result.imputations.assign(static_cast<std::size_t>(cfg.k_imputations), data);
    return result;
  }

  const PreparedFeatures prepared = split_outcome(data, model.conditioned);
  const Matrix observed = encode(model.encoder, prepared.features).values;
  const std::size_t n = observed.rows();
  const std::size_t p = observed.cols();
  Matrix truth = observed;
  for (double& v : truth.values())
    if (is_missing(v)) v = 0.0;

  const auto schedule = repaint_schedule(model.grid.n_t, cfg.repaint_rounds, cfg.jump_size);
  const double h = model.grid.step();
  const Matrix zero(n, p, 0.0);

  for (int m = 0; m < cfg.k_imputations; ++m) {
    Rng rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(m)}));
    std::vector<int> labels = prepared.labels;
    std::vector<double> label_values(n, 0.0);
    if (model.conditioned) {
      std::discrete_distribution<int> pick(model.label_probs.begin(), model.label_probs.end());
      for (std::size_t r = 0; r < n; ++r) {
        if (labels[r] < 0) labels[r] = pick(rng);
        label_values[r] = labels[r];
      }
    } else {
      std::fill(labels.begin(), labels.end(), 0);
    }
    const auto groups = group_by_label(labels, model.n_labels());

    Matrix x = standard_normal(n, p, rng);
    for (const RepaintStep& step : schedule) {
      if (step.forward) {
        const Matrix z = standard_normal(n, p, rng);
        x = process::vp_forward_jump(z, x, model.grid.level(step.level), h, model.schedule,
                                     cfg.scaling);
        continue;
      }
      const Matrix eps = predict_level(model, step.level, x, groups, cfg.threads);
      const Matrix z = step.level > 1 ? standard_normal(n, p, rng) : zero;
      Matrix next = process::vp_reverse_step(x, eps, model.grid.level(step.level), h, z,
                                             model.schedule, cfg.scaling);
      const Matrix z_obs = standard_normal(n, p, rng);
      const Matrix known =
          process::vp_forward(z_obs, truth, model.grid.level(step.level - 1), model.schedule).x_t;
      auto nv = next.values();
      auto kv = known.values();
      auto ov = observed.values();
      for (std::size_t i = 0; i < nv.size(); ++i)
        if (!is_missing(ov[i])) nv[i] = kv[i];
      x = std::move(next);
    }

    Dataset features = decode(model.encoder, x);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < features.cols(); ++c)
        if (!prepared.features.missing(r, c)) features(r, c) = prepared.features(r, c);
    result.imputations.push_back(model.conditioned
                                     ? attach_outcome(features, model.schema, label_values)
                                     : std::move(features));
  }
  return result;
}

}  // namespace forestdiff
