#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "forestdiff/cli.hpp"
#include "forestdiff/repro.hpp"
#include "forestdiff/schema.hpp"

using namespace forestdiff;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "forestdiff");
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

const std::string kIris = std::string(FORESTDIFF_DATA_DIR) + "/iris.csv";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("forestdiff_cli_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("train, generate and their error codes") {
  TempDir tmp;
  const std::string model = tmp / "m.bin";
  const Result t = run({"train", "--input", kIris, "--process", "flow", "--n-noise", "1",
                        "--out", model});
  REQUIRE(t.code == 0);
  CHECK(t.out.find("600 forests") != std::string::npos);
  CHECK(t.out.find("n_noise: 1") != std::string::npos);
  CHECK(t.out.find("wall_time_s:") != std::string::npos);

  CHECK(run({"train", "--input", tmp / "missing.csv", "--out", model}).code == cli::kExitIo);
  CHECK(run({"train", "--input", kIris, "--n-noise", "0", "--out", model}).code ==
        cli::kExitValidation);
  CHECK(run({"train", "--input", tmp / "missing.csv", "--n-noise", "0", "--out", model}).code ==
        cli::kExitValidation);
  CHECK(run({"train", "--input", kIris, "--process", "sde", "--out", model}).code ==
        cli::kExitValidation);
  CHECK(run({"train", "--bogus"}).code == cli::kExitValidation);

  const Result g1 = run({"generate", "--model", model, "--n-obs", "120", "--seed", "5", "--out",
                         tmp / "a.csv"});
  REQUIRE(g1.code == 0);
  CHECK(g1.out.find("seed: 5") != std::string::npos);
  REQUIRE(run({"generate", "--model", model, "--n-obs", "120", "--seed", "5", "--out",
               tmp / "b.csv"})
              .code == 0);
  CHECK(slurp(tmp / "a.csv") == slurp(tmp / "b.csv"));
  const RawTable raw = read_csv(tmp / "a.csv");
  CHECK(raw.header == read_csv(kIris).header);
  CHECK(raw.rows.size() == 120);
  for (const auto& row : raw.rows)
    for (const auto& cell : row) CHECK_FALSE(is_na_token(cell));

  const Result unseeded = run({"generate", "--model", model, "--n-obs", "3", "--out", tmp / "c.csv"});
  CHECK(unseeded.code == 0);
  CHECK(unseeded.out.find("seed: ") != std::string::npos);

  // Corrupt and version-mismatched model files.
  std::string bytes = slurp(model);
  bytes[bytes.size() / 2] ^= 0x21;
  std::ofstream(tmp / "bad.bin", std::ios::binary) << bytes;
  CHECK(run({"generate", "--model", tmp / "bad.bin", "--n-obs", "3", "--out", tmp / "d.csv"}).code ==
        cli::kExitFormat);
  bytes = slurp(model);
  bytes[8] = static_cast<char>(bytes[8] + 1);
  std::ofstream(tmp / "old.bin", std::ios::binary) << bytes;
  CHECK(run({"generate", "--model", tmp / "old.bin", "--n-obs", "3", "--out", tmp / "d.csv"}).code ==
        cli::kExitFormat);
  CHECK(run({"generate", "--model", tmp / "none.bin", "--n-obs", "3", "--out", tmp / "d.csv"}).code ==
        cli::kExitIo);
  CHECK(run({"generate", "--model", model, "--n-obs", "0", "--out", tmp / "d.csv"}).code ==
        cli::kExitValidation);

  // Imputation is diffusion-only.
  CHECK(run({"impute", "--model", model, "--input", kIris, "--out", tmp / "imp.csv"}).code ==
        cli::kExitValidation);
}

TEST_CASE("impute writes k files with observed cells untouched") {
  TempDir tmp;
  const Dataset iris = repro::load_csv_dataset(kIris);
  write_csv(tmp / "masked.csv", to_raw(repro::mask_mcar(iris, 0.2, 3)));
  const std::string model = tmp / "vp.bin";
  REQUIRE(run({"train", "--input", tmp / "masked.csv", "--n-t", "10", "--n-noise", "2", "--out",
               model})
              .code == 0);
  const Result r = run({"impute", "--model", model, "--input", tmp / "masked.csv", "--k", "3",
                        "--jump", "2", "--repaint-r", "2", "--seed", "1", "--out",
                        tmp / "imp.csv"});
  REQUIRE(r.code == 0);
  const RawTable input = read_csv(tmp / "masked.csv");
  for (int m = 1; m <= 3; ++m) {
    const RawTable out = read_csv(tmp / ("imp_" + std::to_string(m) + ".csv"));
    REQUIRE(out.rows.size() == input.rows.size());
    for (std::size_t i = 0; i < input.rows.size(); ++i)
      for (std::size_t c = 0; c < input.header.size(); ++c) {
        if (is_na_token(input.rows[i][c])) {
          CHECK_FALSE(is_na_token(out.rows[i][c]));
        } else {
          CHECK(out.rows[i][c] == input.rows[i][c]);
        }
      }
  }
  CHECK_FALSE(fs::exists(tmp / "imp_4.csv"));

  const Result complete = run({"impute", "--model", model, "--input", kIris, "--out",
                               tmp / "full.csv"});
  CHECK(complete.code == 0);
  CHECK(complete.err.find("warning") != std::string::npos);
  CHECK(slurp(tmp / "full_1.csv") == render_csv(read_csv(kIris)));
  CHECK_FALSE(fs::exists(tmp / "full_2.csv"));

  CHECK(run({"impute", "--model", model, "--input", tmp / "masked.csv", "--jump", "11", "--out",
             tmp / "x.csv"})
            .code == cli::kExitValidation);
}

TEST_CASE("evaluate reports") {
  TempDir tmp;
  const Dataset iris = repro::load_csv_dataset(kIris);
  const auto split = repro::split_rows(iris, 0.2, 0);
  write_csv(tmp / "train.csv", to_raw(split.train));
  write_csv(tmp / "test.csv", to_raw(split.test));

  const Result gen = run({"evaluate", "--train", tmp / "train.csv", "--test", tmp / "test.csv",
                          "--set", tmp / "train.csv", "--out", tmp / "report.csv"});
  REQUIRE(gen.code == 0);
  const RawTable report = read_csv(tmp / "report.csv");
  CHECK(report.header == std::vector<std::string>{"set", "w_train", "w_test", "cov_train",
                                                  "cov_test", "efficiency", "p_bias",
                                                  "cov_rate"});
  REQUIRE(report.rows.size() == 2);
  CHECK(report.rows[1][0] == "aggregate");
  CHECK(std::stod(report.rows[0][1]) == 0.0);
  CHECK(std::stod(report.rows[0][3]) >= 0.95);
  CHECK(report.rows[0][6] == "NA");
  CHECK(gen.out.find("w_train: 0") != std::string::npos);

  write_csv(tmp / "masked.csv", to_raw(repro::mask_mcar(split.train, 0.2, 1)));
  const Result imp = run({"evaluate", "--task", "imputation", "--train", tmp / "train.csv",
                          "--test", tmp / "test.csv", "--incomplete", tmp / "masked.csv",
                          "--set", tmp / "train.csv"});
  REQUIRE(imp.code == 0);
  CHECK(imp.out.find("set,w_train,w_test,mad,min_mae,avg_mae,efficiency,p_bias,cov_rate") !=
        std::string::npos);
  CHECK(imp.out.find("mad: NA") != std::string::npos);
  CHECK(imp.out.find("min_mae: 0") != std::string::npos);
  CHECK(imp.err.find("mad omitted") != std::string::npos);

  // Schema mismatch between files.
  std::ofstream(tmp / "other.csv") << "a,b\n1,2\n";
  CHECK(run({"evaluate", "--train", tmp / "train.csv", "--test", tmp / "test.csv", "--set",
             tmp / "other.csv"})
            .code == cli::kExitValidation);
  CHECK(run({"repro-iris", "--seeds", "0"}).code == cli::kExitValidation);
}
