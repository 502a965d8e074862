// Copyright the talr authors. Licensed under the Apache License, Version 2.0;
// see LICENSE in the project root.
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "talr/cli.hpp"
#include "talr/dataset.hpp"
#include "talr/trainer.hpp"

using namespace talr;
using nlohmann::json;

namespace {

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"talr"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return talr_main(static_cast<int>(argv.size()), argv.data());
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  json j;
  in >> j;
  return j;
}

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("CSV features parse with shape checks") {
  {
    std::ofstream out("feat_test.csv");
    out << "1,2\n3,4\n5,6\n";
  }
  TempFile guard("feat_test.csv");
  const Matrix m = load_features("feat_test.csv");
  CHECK(m.rows == 3);
  CHECK(m.cols == 2);
  CHECK(m(2, 1) == 6.0);

  {
    std::ofstream out("feat_ragged.csv");
    out << "1,2\n3\n";
  }
  TempFile guard2("feat_ragged.csv");
  CHECK_THROWS_AS(load_features("feat_ragged.csv"), data_error);

  {
    std::ofstream out("feat_nan.csv");
    out << "1,nan\n";
  }
  TempFile guard3("feat_nan.csv");
  CHECK_THROWS_AS(load_features("feat_nan.csv"), data_error);
}

TEST_CASE("binary feature round trip and truncation error") {
  Rng rng(81);
  Matrix m(17, 5);
  for (double& x : m.data) x = rng.normal();
  save_features(m, "feat_rt.talrfeat");
  TempFile guard("feat_rt.talrfeat");
  const Matrix back = load_features("feat_rt.talrfeat");
  REQUIRE(back.rows == m.rows);
  REQUIRE(back.cols == m.cols);
  for (std::size_t k = 0; k < m.data.size(); ++k)
    CHECK(back.data[k] ==
          doctest::Approx(m.data[k]).epsilon(1e-6));  // f32 storage

  // Truncate and expect an error naming the byte offset.
  {
    std::ifstream in("feat_rt.talrfeat", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
    std::ofstream out("feat_trunc.talrfeat", std::ios::binary);
    out.write(bytes.data(), static_cast<long>(bytes.size() / 2));
  }
  TempFile guard2("feat_trunc.talrfeat");
  CHECK_THROWS_WITH_AS(load_features("feat_trunc.talrfeat"),
                       doctest::Contains("truncated"), data_error);
}

TEST_CASE("label io round trip, binary and CSV") {
  const std::vector<std::vector<int>> labels = {{1, 5}, {}, {2}, {0, 3, 9}};
  save_labels(labels, "labl_rt.talrlabl");
  TempFile guard("labl_rt.talrlabl");
  CHECK(load_labels("labl_rt.talrlabl") == labels);

  {
    std::ofstream out("labl_test.csv");
    out << "1;5\n\n2\n0;3;9\n";
  }
  TempFile guard2("labl_test.csv");
  CHECK(load_labels("labl_test.csv") == labels);
}

TEST_CASE("split validation") {
  SplitSpec s;
  s.query = {0, 1};
  s.database = {2, 3};
  s.train = {2, 3, 4};
  validate_split(s, 5);
  s.database.push_back(1);
  CHECK_THROWS_WITH_AS(validate_split(s, 5), doctest::Contains("overlap"),
                       data_error);
  s.database.pop_back();
  s.train.push_back(9);
  CHECK_THROWS_AS(validate_split(s, 5), data_error);
}

TEST_CASE("standardizer centers and scales") {
  Rng rng(83);
  Matrix m(500, 3);
  for (std::size_t i = 0; i < m.rows; ++i) {
    m(i, 0) = 5.0 + 2.0 * rng.normal();
    m(i, 1) = -3.0 + 0.5 * rng.normal();
    m(i, 2) = rng.normal();
  }
  const Standardizer s = Standardizer::fit(m);
  s.apply(m);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) mean += m(i, j);
    mean /= static_cast<double>(m.rows);
    for (std::size_t i = 0; i < m.rows; ++i)
      var += (m(i, j) - mean) * (m(i, j) - mean);
    var /= static_cast<double>(m.rows);
    CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("synthetic clusters have the requested geometry") {
  SynthConfig cfg;
  cfg.classes = 4;
  cfg.dim = 16;
  cfg.train = 400;
  cfg.query = 80;
  cfg.database = 320;
  cfg.separation = 4.0;
  cfg.seed = 3;
  const SynthData data = make_synthetic_clusters(cfg);
  CHECK(data.train.size() == 400);
  CHECK(data.query.size() == 80);
  CHECK(data.database.size() == 320);

  // Class means of the training split approximate a regular simplex with
  // pairwise distance sqrt(2) * separation * sigma.
  std::vector<std::vector<double>> means(4, std::vector<double>(16, 0.0));
  std::vector<std::size_t> counts(4, 0);
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const int c = data.train.single_label(i);
    ++counts[static_cast<std::size_t>(c)];
    for (std::size_t j = 0; j < 16; ++j)
      means[static_cast<std::size_t>(c)][j] += data.train.features(i, j);
  }
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(counts[c] == 100);  // round-robin balance
    for (double& x : means[c]) x /= static_cast<double>(counts[c]);
  }
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = a + 1; b < 4; ++b) {
      double d2 = 0.0;
      for (std::size_t j = 0; j < 16; ++j) {
        const double diff = means[a][j] - means[b][j];
        d2 += diff * diff;
      }
      CHECK(std::sqrt(d2) == doctest::Approx(4.0 * std::sqrt(2.0)).epsilon(0.15));
    }

  // Same seed, same data.
  const SynthData again = make_synthetic_clusters(cfg);
  CHECK(again.train.features.data == data.train.features.data);
}

TEST_CASE("cli: synth then train then eval round trip") {
  const int rc_synth = run_cli({"synth", "--out", "clitest", "--classes", "3",
                                "--dim", "8", "--train", "120", "--query", "40",
                                "--database", "80", "--seed", "5"});
  REQUIRE(rc_synth == 0);
  TempFile f1("clitest.train.feat"), f2("clitest.train.labels");
  TempFile f3("clitest.query.feat"), f4("clitest.query.labels");
  TempFile f5("clitest.database.feat"), f6("clitest.database.labels");

  const int rc_train = run_cli(
      {"train", "--features", "clitest.train.feat", "--labels",
       "clitest.train.labels", "--bits", "8", "--epochs", "6", "--batch-size",
       "40", "--seed", "7", "--checkpoint", "clitest.talrmodl", "--report",
       "clitest.train.json"});
  REQUIRE(rc_train == 0);
  TempFile f7("clitest.talrmodl"), f8("clitest.train.json");

  const json train_report = read_json("clitest.train.json");
  CHECK(train_report["report_version"] == 1);
  CHECK(train_report["history"].size() == 6);

  const int rc_eval = run_cli(
      {"eval", "--checkpoint", "clitest.talrmodl", "--queries",
       "clitest.query.feat", "--query-labels", "clitest.query.labels",
       "--database", "clitest.database.feat", "--db-labels",
       "clitest.database.labels", "--ap-cutoff", "40", "--report",
       "clitest.eval.json"});
  REQUIRE(rc_eval == 0);
  TempFile f9("clitest.eval.json");

  const json eval_report = read_json("clitest.eval.json");
  CHECK(eval_report["report_version"] == 1);

  // Report self-consistency: the shipped per-query arrays reproduce the means.
  for (const char* key : {"ap_t", "ap_t_at_k", "ndcg_t", "dcg_t"}) {
    const auto& metric = eval_report["metrics"][key];
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& v : metric["per_query"]) {
      if (v.is_null()) continue;
      sum += v.get<double>();
      ++n;
    }
    REQUIRE(n > 0);
    CHECK(metric["mean"].get<double>() ==
          doctest::Approx(sum / static_cast<double>(n)).epsilon(1e-9));
  }

  // AP@|S| equals AP when the cutoff spans the database.
  const int rc_eval_full = run_cli(
      {"eval", "--checkpoint", "clitest.talrmodl", "--queries",
       "clitest.query.feat", "--query-labels", "clitest.query.labels",
       "--database", "clitest.database.feat", "--db-labels",
       "clitest.database.labels", "--ap-cutoff", "80", "--report",
       "clitest.eval2.json"});
  REQUIRE(rc_eval_full == 0);
  TempFile f10("clitest.eval2.json");
  const json full = read_json("clitest.eval2.json");
  CHECK(full["metrics"]["ap_t_at_k"]["mean"].get<double>() ==
        doctest::Approx(full["metrics"]["ap_t"]["mean"].get<double>())
            .epsilon(1e-12));
}

TEST_CASE("cli: train determinism and --epochs 0 checkpoint equals init") {
  REQUIRE(run_cli({"synth", "--out", "clidet", "--classes", "2", "--dim", "6",
                   "--train", "80", "--query", "20", "--database", "40",
                   "--seed", "8"}) == 0);
  TempFile f1("clidet.train.feat"), f2("clidet.train.labels");
  TempFile f3("clidet.query.feat"), f4("clidet.query.labels");
  TempFile f5("clidet.database.feat"), f6("clidet.database.labels");

  auto train_once = [&](const std::string& ckpt, const std::string& report) {
    return run_cli({"train", "--features", "clidet.train.feat", "--labels",
                    "clidet.train.labels", "--bits", "6", "--epochs", "4",
                    "--batch-size", "40", "--seed", "9", "--checkpoint", ckpt,
                    "--report", report});
  };
  REQUIRE(train_once("clidet_a.talrmodl", "clidet_a.json") == 0);
  REQUIRE(train_once("clidet_b.talrmodl", "clidet_b.json") == 0);
  TempFile f7("clidet_a.talrmodl"), f8("clidet_a.json");
  TempFile f9("clidet_b.talrmodl"), f10("clidet_b.json");

  json a = read_json("clidet_a.json");
  json b = read_json("clidet_b.json");
  a.erase("timings_ms");
  b.erase("timings_ms");
  a.erase("checkpoint");
  b.erase("checkpoint");
  CHECK(a.dump() == b.dump());

  // Checkpoints byte-identical.
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  CHECK(slurp("clidet_a.talrmodl") == slurp("clidet_b.talrmodl"));

  REQUIRE(run_cli({"train", "--features", "clidet.train.feat", "--labels",
                   "clidet.train.labels", "--bits", "6", "--epochs", "0",
                   "--seed", "9", "--checkpoint", "clidet_0.talrmodl"}) == 0);
  TempFile f11("clidet_0.talrmodl");
  const Checkpoint init = load_checkpoint("clidet_0.talrmodl");
  CHECK(init.model.num_bits == 6);
  CHECK(init.alpha == doctest::Approx(5.0));
}

TEST_CASE("cli: usage and data errors map to exit codes 2 and 3") {
  CHECK(run_cli({"train", "--features", "nope.feat", "--bits", "0"}) == 2);
  CHECK(run_cli({"no-such-command"}) == 2);
  CHECK(run_cli({"eval"}) == 2);
  CHECK(run_cli({"train", "--features", "definitely_missing.feat", "--labels",
                 "also_missing", "--bits", "4"}) == 3);
}

TEST_CASE("cli: gradcheck passes and the corruption hook fails loudly") {
  CHECK(run_cli({"gradcheck", "--objective", "ap_s", "--batch-size", "8",
                 "--bits", "6", "--dim", "8", "--seed", "3"}) == 0);
  CHECK(run_cli({"gradcheck", "--objective", "ap_s", "--batch-size", "8",
                 "--bits", "6", "--dim", "8", "--seed", "3", "--corrupt",
                 "1,2"}) == 4);
}

TEST_CASE("cli: tiebreak audit emits CSV and JSON with contained tie-aware values") {
  REQUIRE(run_cli({"synth", "--out", "cliaudit", "--classes", "3", "--dim",
                   "10", "--train", "60", "--query", "30", "--database", "90",
                   "--seed", "11"}) == 0);
  TempFile f1("cliaudit.train.feat"), f2("cliaudit.train.labels");
  TempFile f3("cliaudit.query.feat"), f4("cliaudit.query.labels");
  TempFile f5("cliaudit.database.feat"), f6("cliaudit.database.labels");

  REQUIRE(run_cli({"tiebreak-audit", "--queries", "cliaudit.query.feat",
                   "--query-labels", "cliaudit.query.labels", "--database",
                   "cliaudit.database.feat", "--db-labels",
                   "cliaudit.database.labels", "--bits", "6", "--bits", "24",
                   "--seed", "13", "--out-prefix", "cliaudit_out"}) == 0);
  TempFile f7("cliaudit_out.csv"), f8("cliaudit_out.json");

  const json report = read_json("cliaudit_out.json");
  REQUIRE(report["widths"].size() == 2);
  for (const auto& width : report["widths"]) {
    CHECK(width["tie_aware_inside_range"] == width["defined_queries"]);
    for (const auto& row : width["per_query"]) {
      CHECK(row["tie_aware"].get<double>() >=
            row["pessimistic"].get<double>() - 1e-12);
      CHECK(row["tie_aware"].get<double>() <=
            row["optimistic"].get<double>() + 1e-12);
    }
  }
  // More bits, fewer ties: the mean range must not grow.
  CHECK(report["widths"][1]["mean_range"].get<double>() <=
        report["widths"][0]["mean_range"].get<double>() + 1e-12);

  std::ifstream csv("cliaudit_out.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "bits,query,pessimistic,optimistic,tie_aware,random");
}
