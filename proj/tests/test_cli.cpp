#include "doctest.h"

#include <fstream>
#include <sstream>

#include "lse/cli.hpp"
#include "test_util.hpp"

using namespace lse;
using lse::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int s = cli::run(args, out, err);
  return {s, out.str(), err.str()};
}

/// A small but complete configuration: tiny dataset, narrow model, two epochs.
std::vector<std::string> tiny(std::vector<std::string> args) {
  for (const char* kv :
       {"generator.windows_per_count=6", "model.conv_features=8", "model.snn_input=8",
        "model.snn_hidden=4", "training.batch_size=16", "training.max_epochs=2",
        "evaluation.lambdas=[0, 1]", "evaluation.lambda_seeds=1", "evaluation.snr_windows=10",
        "evaluation.snr_db=[5, 20]", "baselines.tbr.grid.values=[0.005]",
        "baselines.sf.grid.values=[0.2]", "baselines.mw.grid.values=[0.06]",
        "baselines.mw.grid.windows=[3]"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  return args;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).status == cli::kUsage);
  CHECK(run({"frobnicate"}).status == cli::kUsage);
  CHECK(run({"--help"}).status == cli::kOk);
  TempDir dir;
  const auto rd = dir.path.string();
  const auto bad_key = run({"generate", "--run-dir", rd, "--set", "training.nope=1"});
  CHECK(bad_key.status == cli::kUsage);
  CHECK(bad_key.err.starts_with("error[config]"));
  CHECK(run({"gridsearch", "--run-dir", rd, "--method", "rate"}).status == cli::kUsage);
  CHECK(run({"train", "--run-dir", rd, "--lambda", "2"}).status == cli::kUsage);
  CHECK(run({"eval", "--run-dir", rd, "--config", (dir.path / "missing.yaml").string()}).status ==
        cli::kUsage);
}

TEST_CASE("end-to-end pipeline on a tiny configuration") {
  TempDir dir;
  const auto rd = dir.path.string();
  auto g = run(tiny({"generate", "--run-dir", rd}));
  REQUIRE(g.status == cli::kOk);
  CHECK(fs::exists(dir.path / "dataset.bin"));
  CHECK(fs::exists(dir.path / "dataset.json"));
  CHECK(fs::exists(dir.path / "config.yaml"));

  CHECK(run(tiny({"gridsearch", "--run-dir", rd})).status == cli::kOk);
  for (const char* f : {"gridsearch_tbr.csv", "gridsearch_sf.csv", "gridsearch_mw.csv", "gridsearch.json"})
    CHECK(fs::exists(dir.path / f));

  auto t = run(tiny({"train", "--run-dir", rd, "--lambda", "0.5"}));
  REQUIRE(t.status == cli::kOk);
  CHECK(fs::exists(dir.path / "best.ckpt"));
  CHECK(fs::exists(dir.path / "train_summary.json"));
  const auto log = slurp(dir.path / "train_log.csv");
  CHECK(log.starts_with("epoch,split,L1,L2,L3,omega,total\n"));
  CHECK(std::count(log.begin(), log.end(), '\n') == 5);

  auto e = run(tiny({"eval", "--run-dir", rd, "--checkpoint", (dir.path / "best.ckpt").string()}));
  REQUIRE(e.status == cli::kOk);
  const auto metrics = slurp(dir.path / "metrics.csv");
  for (const char* m : {"\nTBR,", "\nSF,", "\nMW,", "\nLSE,"}) CHECK(metrics.find(m) != std::string::npos);

  CHECK(run(tiny({"sweep-snr", "--run-dir", rd, "--checkpoint", (dir.path / "best.ckpt").string()}))
            .status == cli::kOk);
  CHECK(fs::exists(dir.path / "snr_sweep.csv"));
  CHECK(fs::exists(dir.path / "rec_rmse_vs_snr_LSE.dat"));

  CHECK(run(tiny({"sweep-lambda", "--run-dir", rd})).status == cli::kOk);
  CHECK(fs::exists(dir.path / "lambda_sweep.csv"));
  CHECK(fs::exists(dir.path / "sparsity_vs_lambda.dat"));

  SUBCASE("damaged inputs map to the bad-input status") {
    const auto ck = dir.path / "best.ckpt";
    fs::resize_file(ck, fs::file_size(ck) - 4);
    auto r = run(tiny({"eval", "--run-dir", rd, "--checkpoint", ck.string()}));
    CHECK(r.status == cli::kBadInput);
    CHECK(r.err.starts_with("error[corrupt]"));
    fs::resize_file(dir.path / "dataset.bin", 12);
    CHECK(run(tiny({"eval", "--run-dir", rd})).status == cli::kBadInput);
  }
}

TEST_CASE("same seed gives byte-identical training logs") {
  TempDir a, b;
  for (auto* d : {&a, &b})
    REQUIRE(run(tiny({"train", "--run-dir", d->path.string(), "--seed", "7"})).status == cli::kOk);
  CHECK(slurp(a.path / "train_log.csv") == slurp(b.path / "train_log.csv"));
  CHECK(slurp(a.path / "best.ckpt") == slurp(b.path / "best.ckpt"));
}
