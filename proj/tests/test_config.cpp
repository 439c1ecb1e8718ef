#include "doctest.h"

#include "lse/config.hpp"
#include "lse/error.hpp"

using namespace lse;
using namespace lse::config;

TEST_CASE("defaults") {
  const auto c = parse("{}");
  CHECK(c.training.batch_size == 256);
  CHECK(c.training.lambda == 0.2);
  CHECK(c.training.tau == 0.1);
  CHECK(c.training.patience == 10);
  CHECK(c.generator.window_length == 64);
  CHECK(c.evaluation.lambdas == std::vector<double>{0, 0.1, 0.2, 0.5, 1});
  CHECK(c.baselines.mw.points().size() == 36);
}

TEST_CASE("parsing and rejection") {
  const auto c = parse("training:\n  lambda: 0.5\n  precision: f64\ngenerator:\n  windows_per_count: 10\n");
  CHECK(c.training.lambda == 0.5);
  CHECK(c.training.precision == training::Precision::f64);
  CHECK(c.generator.windows_per_count == 10);
  CHECK_THROWS_AS(parse("training:\n  lamda: 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse("trainer: {}\n"), ConfigError);
  CHECK_THROWS_AS(parse("training:\n  batch_size: many\n"), ConfigError);
  CHECK_THROWS_AS(parse("training:\n  lambda: 3\n"), ConfigError);
  CHECK_THROWS_AS(parse("generator:\n  split: [0.5, 0.5, 0.5]\n"), ConfigError);
  CHECK_THROWS_AS(parse("training: [1, 2"), ConfigError);
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_override(c, "training.lambda=0.7");
  apply_override(c, "evaluation.snr_db=[1, 2]");
  apply_override(c, "baselines.sf.params.threshold=0.3");
  CHECK(c.training.lambda == 0.7);
  CHECK(c.evaluation.snr_db == std::vector<double>{1, 2});
  CHECK(c.baselines.sf_params.threshold == 0.3);
  CHECK_THROWS_AS(apply_override(c, "training.lambda"), ConfigError);
  CHECK_THROWS_AS(apply_override(c, "training.nope=1"), ConfigError);
}

TEST_CASE("to_yaml round-trips") {
  RunConfig c;
  c.training.lambda = 0.1 + 0.2;  // not exactly representable in short decimal
  c.generator.seed = 123456789012345ULL;
  c.model.conv_features = 32;
  c.evaluation.lambdas = {0.0, 1.0 / 3.0};
  const auto back = parse(to_yaml(c));
  CHECK(back.training.lambda == c.training.lambda);
  CHECK(back.generator.seed == c.generator.seed);
  CHECK(back.model == c.model);
  CHECK(back.evaluation.lambdas == c.evaluation.lambdas);
  CHECK(to_yaml(back) == to_yaml(c));
}
