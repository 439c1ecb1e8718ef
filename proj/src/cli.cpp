#include "lse/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "lse/checkpoint.hpp"
#include "lse/config.hpp"
#include "lse/dataset_io.hpp"
#include "lse/error.hpp"
#include "lse/evaluation.hpp"
#include "lse/kernels.hpp"

namespace lse::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string run_dir = "run";
  std::vector<std::string> overrides;
  std::optional<double> lambda;
  std::optional<std::uint64_t> seed;
  std::string dataset;
  std::string split;
  std::string checkpoint;
  std::string baselines_json;
  std::vector<std::string> methods;
  int workers = 0;
  bool verbose = false;
};

class Context {
 public:
  Context(const Options& o, std::ostream& out) : opt_(o), out_(out), dir_(o.run_dir) {}

  config::RunConfig& resolve(bool seed_is_generator) {
    cfg_ = opt_.config_path.empty() ? config::RunConfig{} : config::load(opt_.config_path);
    for (const auto& s : opt_.overrides) config::apply_override(cfg_, s);
    if (opt_.lambda) config::apply_override(cfg_, "training.lambda=" + nlohmann::json(*opt_.lambda).dump());
    if (opt_.seed) {
      const char* key = seed_is_generator ? "generator.seed=" : "training.seed=";
      config::apply_override(cfg_, key + std::to_string(*opt_.seed));
    }
    fs::create_directories(dir_);
    std::ofstream(dir_ / "config.yaml") << config::to_yaml(cfg_);
    return cfg_;
  }

  const config::RunConfig& cfg() const { return cfg_; }
  const fs::path& dir() const { return dir_; }
  std::ostream& out() { return out_; }

  /// --dataset may name a dataset file/stem or, as shorthand, a split.
  signal::Split split(signal::Split fallback) const {
    std::string s = opt_.split;
    if (s.empty() && is_split_name(opt_.dataset)) s = opt_.dataset;
    if (s.empty()) return fallback;
    if (s == "train") return signal::Split::train;
    if (s == "val") return signal::Split::val;
    if (s == "test") return signal::Split::test;
    throw CLI::ValidationError("--split", "must be train, val or test");
  }

  signal::Dataset dataset() {
    fs::path stem;
    if (!opt_.dataset.empty() && !is_split_name(opt_.dataset))
      stem = signal::dataset_stem(opt_.dataset);
    else if (fs::exists(dir_ / "dataset.json"))
      stem = dir_ / "dataset";
    if (!stem.empty()) {
      if (!fs::exists(stem.string() + ".json"))
        throw std::runtime_error("dataset manifest " + stem.string() + ".json not found");
      auto ds = signal::read_dataset(stem);
      out_ << "dataset: " << stem.string() << " (" << ds.windows.size() << " windows)\n";
      return ds;
    }
    out_ << "dataset: generated from config (" << cfg_.generator.total_windows()
         << " windows)\n";
    return signal::build_dataset(cfg_.generator);
  }

  /// Baseline parameters: a gridsearch.json if given, else the config values.
  std::vector<baseline::BaselineParams> baselines() const {
    std::vector<baseline::BaselineParams> ps{cfg_.baselines.tbr_params, cfg_.baselines.sf_params,
                                             cfg_.baselines.mw_params};
    if (opt_.baselines_json.empty()) return ps;
    std::ifstream is(opt_.baselines_json);
    if (!is) throw std::runtime_error("cannot read " + opt_.baselines_json);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(is);
      for (auto& p : ps) {
        const auto key = baseline::to_string(p.method);
        if (!j.contains(key)) continue;
        const auto& e = j.at(key);
        if (e.contains("delta")) p.delta = e.at("delta").get<double>();
        if (e.contains("threshold")) p.threshold = e.at("threshold").get<double>();
        if (e.contains("window")) p.window = e.at("window").get<std::size_t>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw StructuralError(opt_.baselines_json + ": " + e.what());
    }
    return ps;
  }

  const Options& opt() const { return opt_; }

 private:
  static bool is_split_name(const std::string& s) {
    return s == "train" || s == "val" || s == "test";
  }

  const Options& opt_;
  std::ostream& out_;
  fs::path dir_;
  config::RunConfig cfg_;
};

nlohmann::json params_json(const baseline::BaselineParams& p) {
  nlohmann::json j;
  if (p.method == baseline::Method::tbr)
    j["delta"] = p.delta;
  else
    j["threshold"] = p.threshold;
  if (p.method == baseline::Method::mw) j["window"] = p.window;
  return j;
}

void cmd_generate(Context& ctx) {
  const auto& cfg = ctx.resolve(true);
  const auto ds = signal::build_dataset(cfg.generator);
  signal::write_dataset(ds, ctx.dir() / "dataset");
  ctx.out() << "wrote " << (ctx.dir() / "dataset.bin").string() << ": " << ds.windows.size()
            << " windows (train " << ds.train.size() << ", val " << ds.val.size() << ", test "
            << ds.test.size() << ")\n";
}

void cmd_gridsearch(Context& ctx) {
  const auto& cfg = ctx.resolve(false);
  const auto ds = ctx.dataset();
  const auto split = ctx.split(signal::Split::val);
  std::vector<baseline::Method> methods;
  for (const auto& m : ctx.opt().methods) methods.push_back(baseline::method_from_string(m));
  if (methods.empty()) methods = {baseline::Method::tbr, baseline::Method::sf, baseline::Method::mw};

  nlohmann::json optima = nlohmann::json::object();
  for (auto m : methods) {
    const auto& grid = m == baseline::Method::tbr  ? cfg.baselines.tbr
                       : m == baseline::Method::sf ? cfg.baselines.sf
                                                   : cfg.baselines.mw;
    const auto result = baseline::grid_search(grid, ds, split);
    const auto name = baseline::to_string(m);
    std::string lower = name;
    for (auto& ch : lower) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    std::ofstream csv(ctx.dir() / ("gridsearch_" + lower + ".csv"));
    baseline::write_grid_csv(csv, result);
    auto best = params_json(result.optimum());
    best["mean_mse"] = result.points[result.best].mean_mse;
    optima[name] = best;
    ctx.out() << name << " optimum: " << best.dump() << '\n';
  }
  std::ofstream(ctx.dir() / "gridsearch.json") << optima.dump(2) << '\n';
}

template <typename Real>
void train_and_save(Context& ctx, const signal::Dataset& ds) {
  const auto& cfg = ctx.cfg();
  std::ofstream log(ctx.dir() / "train_log.csv", std::ios::binary | std::ios::trunc);
  training::write_log_header(log);
  const bool verbose = ctx.opt().verbose;
  auto on_epoch = [&](const training::EpochRecord& r) {
    training::write_log_rows(log, r);
    log.flush();
    if (verbose)
      ctx.out() << "epoch " << r.epoch << ": train " << r.train.total << ", val " << r.val.total
                << " (L1 " << r.val.l1 << ", omega " << r.val.omega << ")\n";
  };
  const auto start = std::chrono::steady_clock::now();
  auto result = training::train<Real>(ds, cfg.training, cfg.model, on_epoch);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const nlohmann::json meta{{"lambda", cfg.training.lambda},
                            {"seed", cfg.training.seed},
                            {"best_epoch", result.best_epoch},
                            {"epochs_run", result.history.size()},
                            {"best_val_total", result.best_val.total},
                            {"precision", training::to_string(cfg.training.precision)}};
  model::save_checkpoint(result.model, ctx.dir() / "best.ckpt", meta);
  auto summary = meta;
  summary["train_seconds"] = seconds;
  summary["best_val"] = {{"L1", result.best_val.l1},
                         {"L2", result.best_val.l2},
                         {"L3", result.best_val.l3},
                         {"omega", result.best_val.omega},
                         {"total", result.best_val.total}};
  std::ofstream(ctx.dir() / "train_summary.json") << summary.dump(2) << '\n';
  ctx.out() << "best epoch " << result.best_epoch << " of " << result.history.size()
            << ", val total " << result.best_val.total << "; wrote "
            << (ctx.dir() / "best.ckpt").string() << '\n';
}

void cmd_train(Context& ctx) {
  const auto& cfg = ctx.resolve(false);
  const auto ds = ctx.dataset();
  if (cfg.training.precision == training::Precision::f64)
    train_and_save<double>(ctx, ds);
  else
    train_and_save<float>(ctx, ds);
}

void cmd_eval(Context& ctx) {
  const auto& cfg = ctx.resolve(false);
  const auto ds = ctx.dataset();
  const auto windows = eval::select(ds, ctx.split(signal::Split::test));
  std::vector<eval::MetricsReport> reports;
  for (const auto& p : ctx.baselines()) reports.push_back(eval::evaluate_baseline(p, windows));
  if (!ctx.opt().checkpoint.empty()) {
    auto model = model::load_checkpoint<float>(ctx.opt().checkpoint);
    reports.push_back(eval::evaluate_lse(model, windows, cfg.evaluation.batch_size));
  }
  std::ofstream csv(ctx.dir() / "metrics.csv");
  eval::write_reports_csv(csv, reports);
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : reports) j.push_back(eval::report_to_json(r, cfg.evaluation.per_window_json));
  std::ofstream(ctx.dir() / "metrics.json") << j.dump(2) << '\n';
  eval::write_reports_csv(ctx.out(), reports);
}

void cmd_sweep_lambda(Context& ctx) {
  const auto& cfg = ctx.resolve(false);
  const auto ds = ctx.dataset();
  const int workers = ctx.opt().workers > 0 ? ctx.opt().workers : kernels::thread_count();
  const auto sweep = eval::lambda_sweep(ds, cfg.evaluation.lambdas, cfg.evaluation.lambda_seeds,
                                        cfg.training, cfg.model, workers);
  std::ofstream csv(ctx.dir() / "lambda_sweep.csv");
  eval::write_lambda_csv(csv, sweep);
  std::ofstream runs(ctx.dir() / "lambda_runs.csv");
  runs.precision(10);
  runs << "lambda,seed,val_sparsity,val_mse,epochs\n";
  for (const auto& r : sweep.runs)
    runs << r.lambda << ',' << r.seed << ',' << r.val_sparsity << ',' << r.val_mse << ','
         << r.epochs << '\n';
  std::vector<double> x, sp, sp_std, mse, mse_std;
  for (const auto& p : sweep.points) {
    x.push_back(p.lambda);
    sp.push_back(p.sparsity.mean);
    sp_std.push_back(p.sparsity.std);
    mse.push_back(p.mse.mean);
    mse_std.push_back(p.mse.std);
  }
  eval::write_plot_data(ctx.dir() / "sparsity_vs_lambda.dat", x, sp, sp_std);
  eval::write_plot_data(ctx.dir() / "val_mse_vs_lambda.dat", x, mse, mse_std);
  eval::write_lambda_csv(ctx.out(), sweep);
}

void cmd_sweep_snr(Context& ctx) {
  const auto& cfg = ctx.resolve(false);
  const auto baselines = ctx.baselines();
  std::optional<model::LseModel<float>> model;
  if (!ctx.opt().checkpoint.empty()) model.emplace(model::load_checkpoint<float>(ctx.opt().checkpoint));
  const auto rows = eval::snr_sweep<float>(cfg.generator, baselines, model ? &*model : nullptr,
                                           cfg.evaluation.snr_db, cfg.evaluation.snr_windows,
                                           cfg.evaluation.snr_seed);
  std::ofstream csv(ctx.dir() / "snr_sweep.csv");
  eval::write_snr_csv(csv, rows);
  std::map<std::string, std::array<std::vector<double>, 3>> series;
  for (const auto& r : rows) {
    auto& s = series[r.method];
    s[0].push_back(r.snr_db);
    s[1].push_back(r.rec.mean);
    s[2].push_back(r.rec.std);
  }
  for (const auto& [method, s] : series)
    eval::write_plot_data(ctx.dir() / ("rec_rmse_vs_snr_" + method + ".dat"), s[0], s[1], s[2]);
  eval::write_snr_csv(ctx.out(), rows);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Learned spike encoding of wireless channel responses"};
  app.require_subcommand(1);
  Options opt;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "YAML run configuration")->check(CLI::ExistingFile);
    sub->add_option("--run-dir", opt.run_dir, "Output directory")->capture_default_str();
    sub->add_option("--set", opt.overrides, "Config override section.key=value (repeatable)");
    sub->add_option("--seed", opt.seed, "Seed override");
    return sub;
  };
  auto with_dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", opt.dataset,
                    "Dataset stem or file (default: <run-dir>/dataset, else generated)");
    sub->add_option("--split", opt.split, "Partition: train, val or test");
    return sub;
  };

  common(app.add_subcommand("generate", "Generate the synthetic channel dataset"));
  auto* grid = with_dataset(common(app.add_subcommand("gridsearch", "Baseline parameter search")));
  grid->add_option("--method", opt.methods, "tbr, sf and/or mw (default: all)");
  auto* train = with_dataset(common(app.add_subcommand("train", "Train the spike encoder")));
  train->add_option("--lambda", opt.lambda, "Sparsity weight");
  train->add_flag("--verbose,-v", opt.verbose, "Print per-epoch losses");
  auto* ev = with_dataset(common(app.add_subcommand("eval", "Evaluate baselines and a checkpoint")));
  ev->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  ev->add_option("--baselines", opt.baselines_json, "gridsearch.json with baseline parameters");
  auto* sl = with_dataset(common(app.add_subcommand("sweep-lambda", "Sparsity weight sweep")));
  sl->add_option("--workers", opt.workers, "Parallel training runs (default: thread count)");
  auto* ss = common(app.add_subcommand("sweep-snr", "Noise robustness sweep"));
  ss->add_option("--checkpoint", opt.checkpoint, "Trained checkpoint")->check(CLI::ExistingFile);
  ss->add_option("--baselines", opt.baselines_json, "gridsearch.json with baseline parameters");

  std::vector<std::string> argv_store{"lse"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  Context ctx(opt, out);
  try {
    if (name == "generate") cmd_generate(ctx);
    else if (name == "gridsearch") cmd_gridsearch(ctx);
    else if (name == "train") cmd_train(ctx);
    else if (name == "eval") cmd_eval(ctx);
    else if (name == "sweep-lambda") cmd_sweep_lambda(ctx);
    else if (name == "sweep-snr") cmd_sweep_snr(ctx);
  } catch (const ConfigError& e) {
    err << "error[config]: " << e.what() << '\n';
    return kUsage;
  } catch (const CLI::Error& e) {
    err << "error[usage]: " << e.what() << '\n';
    return kUsage;
  } catch (const InputDomainError& e) {
    err << "error[input]: " << e.what() << '\n';
    return kUsage;
  } catch (const VersionMismatchError& e) {
    err << "error[version]: " << e.what() << '\n';
    return kBadInput;
  } catch (const CorruptBlobError& e) {
    err << "error[corrupt]: " << e.what() << '\n';
    return kBadInput;
  } catch (const StructuralError& e) {
    err << "error[structure]: " << e.what() << '\n';
    return kBadInput;
  } catch (const TrainingError& e) {
    err << "error[training]: " << e.what() << " (epoch " << e.epoch() << ", batch " << e.batch()
        << ")\n";
    return kTrainFailed;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

}  // namespace lse::cli
