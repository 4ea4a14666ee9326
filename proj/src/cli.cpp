#include "forestdiff/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

#include "forestdiff/errors.hpp"
#include "forestdiff/metrics.hpp"
#include "forestdiff/model.hpp"
#include "forestdiff/persistence.hpp"
#include "forestdiff/repro.hpp"

namespace forestdiff::cli {

namespace {

struct RunConfig {
  std::string input;
  std::string output;
  std::string model_path;
  std::string schema_path;
  std::string outcome;
  std::string process = "vp";
  std::string conditioning = "auto";
  int n_t = 50;
  int n_noise = 100;
  std::optional<std::uint64_t> seed;
  int threads = default_thread_count();
  std::size_t n_obs = 0;
  int k = 10;
  int repaint_r = 10;
  int jump = 5;
  double mcar = 0.2;
  bool literal_noise = false;
  // evaluate
  std::string train_path;
  std::string test_path;
  std::string incomplete_path;
  std::vector<std::string> sets;
  std::string task = "generation";
  // repro-iris
  int n_seeds = 3;
  bool baseline_only = false;
};

ProcessKind parse_process(const std::string& s) {
  if (s == "vp") return ProcessKind::vp_diffusion;
  if (s == "flow") return ProcessKind::flow_matching;
  throw ValidationError("unknown process '" + s + "' (expected vp or flow)");
}

std::optional<bool> parse_conditioning(const std::string& s) {
  if (s == "auto") return std::nullopt;
  if (s == "on") return true;
  if (s == "off") return false;
  throw ValidationError("label conditioning must be auto, on or off");
}

// Schema from the sidecar (reordered to the CSV header) or inferred.
TableSchema resolve_schema(const RawTable& raw, const std::string& schema_path,
                           const std::string& outcome) {
  TableSchema schema;
  if (schema_path.empty()) {
    schema = infer_schema(raw);
  } else {
    const TableSchema side = read_schema_file(schema_path);
    for (const std::string& h : raw.header) {
      auto idx = side.find(h);
      if (!idx) throw ValidationError("CSV column '" + h + "' not described by the schema file");
      schema.variables.push_back(side.variables[*idx]);
    }
    if (schema.size() != side.size())
      throw ValidationError("schema file describes columns absent from the CSV");
    if (side.outcome_index) schema.outcome_index = schema.find(side.variables[*side.outcome_index].name);
  }
  if (outcome == "none") {
    schema.outcome_index.reset();
  } else if (!outcome.empty()) {
    auto idx = schema.find(outcome);
    if (!idx) throw ValidationError("outcome column '" + outcome + "' not found");
    schema.outcome_index = idx;
  }
  schema.validate();
  return schema;
}

std::string output_path(const std::string& base, int index) {
  std::filesystem::path p(base);
  const std::string ext = p.has_extension() ? p.extension().string() : ".csv";
  p.replace_filename(p.stem().string() + "_" + std::to_string(index) + ext);
  return p.string();
}

std::string fmt(double v) {
  if (std::isnan(v)) return "NA";
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

std::uint64_t seed_or_random(const RunConfig& cfg) {
  if (cfg.seed) return *cfg.seed;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

// ---------------------------------------------------------------------------

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  TrainConfig tc;
  tc.process = parse_process(cfg.process);
  tc.n_t = cfg.n_t;
  tc.n_noise = cfg.n_noise;
  tc.label_conditioning = parse_conditioning(cfg.conditioning);
  tc.seed = cfg.seed.value_or(0);
  tc.threads = cfg.threads;
  tc.validate();

  const RawTable raw = read_csv(cfg.input);
  const TableSchema schema = resolve_schema(raw, cfg.schema_path, cfg.outcome);
  const Dataset data = to_dataset(raw, schema);

  const auto start = std::chrono::steady_clock::now();
  const ForestDiffusionModel model = train(data, tc);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  save_model(cfg.output, model);

  for (const auto& w : model.warnings) err << "warning: " << w << "\n";
  out << "grid: " << model.grid.n_t << " levels x " << model.width() << " columns x "
      << model.n_labels() << " labels = " << model.forests.size() << " forests\n";
  out << "n_noise: " << model.n_noise << "\n";
  out << "wall_time_s: " << fmt(seconds) << "\n";
  return kExitOk;
}

int cmd_generate(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  if (cfg.n_obs == 0) throw ValidationError("--n-obs must be >= 1");
  const std::uint64_t seed = seed_or_random(cfg);
  const ForestDiffusionModel model = load_model(cfg.model_path);
  SampleOptions opts;
  opts.threads = cfg.threads;
  if (cfg.literal_noise) opts.scaling = process::NoiseScaling::literal;
  const Dataset fake = generate(model, cfg.n_obs, seed, opts);
  write_csv(cfg.output, to_raw(fake));
  out << "seed: " << seed << "\n";
  out << "rows: " << fake.rows() << "\n";
  return kExitOk;
}

int cmd_impute(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  ImputeConfig ic;
  ic.k_imputations = cfg.k;
  ic.repaint_rounds = cfg.repaint_r;
  ic.jump_size = cfg.jump;
  ic.threads = cfg.threads;
  if (cfg.literal_noise) ic.scaling = process::NoiseScaling::literal;
  const std::uint64_t seed = seed_or_random(cfg);
  ic.seed = seed;

  const ForestDiffusionModel model = load_model(cfg.model_path);
  ic.validate(model.grid.n_t);
  if (model.process != ProcessKind::vp_diffusion)
    throw ValidationError(
        "imputation requires a diffusion (vp) model; flow models have a deterministic sampler");
  const RawTable raw = read_csv(cfg.input);
  const Dataset data = to_dataset(raw, model.schema);
  const ImputeResult result = impute(model, data, ic);
  if (!result.had_missing) {
    err << "warning: input has no missing cells; writing a single unchanged copy\n";
    write_csv(output_path(cfg.output, 1), raw);
    out << "seed: " << seed << "\nimputations: 1\n";
    return kExitOk;
  }

  // Column of each schema variable in the input header.
  std::vector<std::size_t> source(model.schema.size());
  for (std::size_t c = 0; c < source.size(); ++c)
    source[c] = static_cast<std::size_t>(
        std::find(raw.header.begin(), raw.header.end(), model.schema.variables[c].name) -
        raw.header.begin());
  for (std::size_t m = 0; m < result.imputations.size(); ++m) {
    RawTable table = raw;
    const Dataset& imp = result.imputations[m];
    for (std::size_t r = 0; r < data.rows(); ++r)
      for (std::size_t c = 0; c < data.cols(); ++c)
        if (data.missing(r, c))
          table.rows[r][source[c]] = render_cell(model.schema.variables[c], imp(r, c));
    write_csv(output_path(cfg.output, static_cast<int>(m) + 1), table);
  }
  out << "seed: " << seed << "\nimputations: " << result.imputations.size() << "\n";
  return kExitOk;
}

Dataset load_like(const std::string& path, const TableSchema& schema) {
  return to_dataset(read_csv(path), schema);
}

bool numeric_outcome(const TableSchema& s) {
  return s.outcome_index && !s.variables[*s.outcome_index].is_categorical();
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const bool imputation = cfg.task == "imputation";
  if (!imputation && cfg.task != "generation")
    throw ValidationError("--task must be generation or imputation");
  if (cfg.sets.empty()) throw ValidationError("at least one --set file is required");
  if (imputation && cfg.incomplete_path.empty())
    throw ValidationError("imputation evaluation needs --incomplete");

  const RawTable train_raw = read_csv(cfg.train_path);
  const TableSchema schema = resolve_schema(train_raw, cfg.schema_path, cfg.outcome);
  const Dataset train_data = to_dataset(train_raw, schema);
  const Dataset test_data = load_like(cfg.test_path, schema);
  std::vector<Dataset> sets;
  for (const auto& p : cfg.sets) sets.push_back(load_like(p, schema));
  if (train_data.missing_count() != 0 || test_data.missing_count() != 0)
    throw ValidationError("train and test data must be complete");

  const auto space = metrics::GowerSpace::fit(train_data);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool has_outcome = schema.outcome_index.has_value();
  const bool inference = numeric_outcome(schema);

  std::optional<Dataset> incomplete;
  std::optional<metrics::CellMask> mask;
  if (imputation) {
    incomplete = load_like(cfg.incomplete_path, schema);
    if (incomplete->rows() != train_data.rows())
      throw ValidationError("incomplete data must have the same rows as the training data");
    mask = metrics::CellMask::of(*incomplete);
  }

  std::vector<std::string> header = {"set", "w_train", "w_test"};
  if (imputation) {
    header.insert(header.end(), {"mad", "min_mae", "avg_mae"});
  } else {
    header.insert(header.end(), {"cov_train", "cov_test"});
  }
  header.insert(header.end(), {"efficiency", "p_bias", "cov_rate"});

  RawTable report;
  report.header = header;
  std::vector<std::vector<double>> values;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const Dataset& s = sets[i];
    std::vector<double> row;
    row.push_back(metrics::wasserstein(train_data, s, space));
    row.push_back(metrics::wasserstein(test_data, s, space));
    if (imputation) {
      const auto mae = metrics::mae_min_avg(std::span(&s, 1), train_data, *mask, space);
      row.insert(row.end(), {nan, mae.min_mae, mae.avg_mae});
    } else {
      row.push_back(metrics::coverage(train_data, s, space));
      row.push_back(metrics::coverage(test_data, s, space));
    }
    row.push_back(has_outcome ? metrics::efficiency(s, test_data) : nan);
    if (inference) {
      const auto st = metrics::inference_stats(train_data, std::span(&s, 1));
      row.insert(row.end(), {st.p_bias, st.cov_rate});
    } else {
      row.insert(row.end(), {nan, nan});
    }
    values.push_back(row);
  }

  // Aggregate: mean of per-set values, with set-level metrics recomputed
  // across all sets.
  std::vector<double> agg(header.size() - 1, 0.0);
  for (const auto& row : values)
    for (std::size_t j = 0; j < agg.size(); ++j) agg[j] += row[j] / static_cast<double>(values.size());
  const auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin()) - 1;
  };
  if (imputation) {
    if (sets.size() >= 2) {
      agg[col("mad")] = metrics::mad_diversity(sets, *mask, space);
    } else {
      agg[col("mad")] = nan;
      err << "note: mad omitted (needs at least 2 imputations)\n";
    }
    const auto mae = metrics::mae_min_avg(sets, train_data, *mask, space);
    agg[col("min_mae")] = mae.min_mae;
    agg[col("avg_mae")] = mae.avg_mae;
  }
  if (inference) {
    const auto st = metrics::inference_stats(train_data, sets);
    agg[col("p_bias")] = st.p_bias;
    agg[col("cov_rate")] = st.cov_rate;
  } else {
    err << "note: p_bias and cov_rate need a numeric outcome\n";
  }
  if (!has_outcome) err << "note: efficiency needs an outcome column\n";

  for (std::size_t i = 0; i < values.size(); ++i) {
    std::vector<std::string> cells = {std::filesystem::path(cfg.sets[i]).filename().string()};
    for (double v : values[i]) cells.push_back(fmt(v));
    report.rows.push_back(cells);
  }
  std::vector<std::string> cells = {"aggregate"};
  for (double v : agg) cells.push_back(fmt(v));
  report.rows.push_back(cells);

  if (!cfg.output.empty()) {
    write_csv(cfg.output, report);
  } else {
    out << render_csv(report);
  }
  for (std::size_t j = 0; j < agg.size(); ++j) out << header[j + 1] << ": " << fmt(agg[j]) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_repro_iris(const RunConfig& cfg, std::ostream& out, std::ostream&) {
  if (cfg.n_seeds < 1) throw ValidationError("--seeds must be >= 1");
  const auto conditioning = parse_conditioning(cfg.conditioning);
  const std::string path = cfg.input.empty() ? std::string(FORESTDIFF_DEFAULT_IRIS) : cfg.input;
  const Dataset data = repro::load_csv_dataset(path);
  const auto settings = repro::iris_settings(cfg.baseline_only);

  out << "setting,w_test,ref_w_test,cov_test,ref_cov_test,f1,ref_f1,check\n";
  std::vector<repro::GenerationScores> scores;
  bool all_pass = true;
  for (std::size_t i = 0; i < settings.size(); ++i) {
    const auto& s = settings[i];
    const auto g = repro::run_setting(data, s, cfg.n_seeds, conditioning, cfg.threads);
    scores.push_back(g);
    bool pass = true;
    if (i < 2) {
      pass = std::abs(g.w_test - s.ref_w_test) <= 0.10 &&
             std::abs(g.cov_test - s.ref_cov_test) <= 0.06 &&
             std::abs(g.efficiency - s.ref_f1) <= 0.06;
    } else {
      // Ablations must score worse than the baseline of the same process.
      const std::size_t base = s.process == ProcessKind::flow_matching ? 0 : 1;
      pass = g.w_test > scores[base].w_test;
    }
    all_pass = all_pass && pass;
    out << s.name << "," << fmt(g.w_test) << "," << fmt(s.ref_w_test) << "," << fmt(g.cov_test)
        << "," << fmt(s.ref_cov_test) << "," << fmt(g.efficiency) << "," << fmt(s.ref_f1) << ","
        << (pass ? "pass" : "FAIL") << "\n";
    out.flush();
  }
  out << "overall: " << (all_pass ? "pass" : "FAIL") << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  CLI::App app{"Tabular data generation and imputation with gradient-boosted diffusion and flow models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "forestdiff 1.0");

  const auto add_threads = [&](CLI::App* c) {
    c->add_option("--threads", cfg.threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  const auto add_seed = [&](CLI::App* c) { c->add_option("--seed", cfg.seed, "Random seed"); };

  auto* train_cmd = app.add_subcommand("train", "Fit a model on a CSV file");
  train_cmd->add_option("--input", cfg.input, "Training CSV")->required();
  train_cmd->add_option("--out", cfg.output, "Model file to write")->required();
  train_cmd->add_option("--schema", cfg.schema_path, "JSON schema sidecar");
  train_cmd->add_option("--outcome", cfg.outcome, "Outcome column name, or 'none'");
  train_cmd->add_option("--process", cfg.process, "vp or flow");
  train_cmd->add_option("--n-t", cfg.n_t, "Number of noise levels");
  train_cmd->add_option("--n-noise", cfg.n_noise, "Noise draws per row");
  train_cmd->add_option("--label-conditioning", cfg.conditioning, "auto, on or off");
  add_seed(train_cmd);
  add_threads(train_cmd);

  auto* gen_cmd = app.add_subcommand("generate", "Sample synthetic rows");
  gen_cmd->add_option("--model", cfg.model_path, "Model file")->required();
  gen_cmd->add_option("--out", cfg.output, "CSV to write")->required();
  gen_cmd->add_option("--n-obs", cfg.n_obs, "Rows to generate")->required();
  gen_cmd->add_flag("--paper-verbatim-noise", cfg.literal_noise,
                    "Use the alternative VP noise scaling");
  add_seed(gen_cmd);
  add_threads(gen_cmd);

  auto* imp_cmd = app.add_subcommand("impute", "Fill missing cells with a vp model");
  imp_cmd->add_option("--model", cfg.model_path, "Model file")->required();
  imp_cmd->add_option("--input", cfg.input, "CSV with NA cells")->required();
  imp_cmd->add_option("--out", cfg.output, "Output base name; files get _1.._k suffixes")
      ->required();
  imp_cmd->add_option("--k", cfg.k, "Number of imputations");
  imp_cmd->add_option("--repaint-r", cfg.repaint_r, "REPAINT rounds");
  imp_cmd->add_option("--jump", cfg.jump, "REPAINT jump size");
  imp_cmd->add_flag("--paper-verbatim-noise", cfg.literal_noise,
                    "Use the alternative VP noise scaling");
  add_seed(imp_cmd);
  add_threads(imp_cmd);

  auto* eval_cmd = app.add_subcommand("evaluate", "Score synthetic or imputed data");
  eval_cmd->add_option("--train", cfg.train_path, "Real training CSV")->required();
  eval_cmd->add_option("--test", cfg.test_path, "Real test CSV")->required();
  eval_cmd->add_option("--set", cfg.sets, "Synthetic or imputed CSV (repeatable)")->required();
  eval_cmd->add_option("--task", cfg.task, "generation or imputation");
  eval_cmd->add_option("--incomplete", cfg.incomplete_path,
                       "Training CSV with the original missing cells (imputation)");
  eval_cmd->add_option("--schema", cfg.schema_path, "JSON schema sidecar");
  eval_cmd->add_option("--outcome", cfg.outcome, "Outcome column name, or 'none'");
  eval_cmd->add_option("--out", cfg.output, "Report CSV (stdout when omitted)");

  auto* repro_cmd = app.add_subcommand("repro-iris", "Iris baseline and ablation runs");
  repro_cmd->add_option("--input", cfg.input, "Iris CSV (bundled copy by default)");
  repro_cmd->add_option("--seeds", cfg.n_seeds, "Seeds per setting");
  repro_cmd->add_option("--label-conditioning", cfg.conditioning, "auto, on or off");
  repro_cmd->add_flag("--baseline-only", cfg.baseline_only, "Skip the ablation rows");
  add_threads(repro_cmd);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitValidation;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(cfg, out, err);
    if (gen_cmd->parsed()) return cmd_generate(cfg, out, err);
    if (imp_cmd->parsed()) return cmd_impute(cfg, out, err);
    if (eval_cmd->parsed()) return cmd_evaluate(cfg, out, err);
    if (repro_cmd->parsed()) return cmd_repro_iris(cfg, out, err);
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitFormat;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

}  // namespace forestdiff::cli
