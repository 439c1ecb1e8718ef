#include "lse/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "lse/error.hpp"

namespace lse::config {

namespace {

using baseline::Method;

template <typename T>
T as(const YAML::Node& n, const std::string& where) {
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for " + where);
  }
}

template <typename T>
void read(const YAML::Node& section, const std::string& name, const char* key, T& out) {
  if (const auto n = section[key]) out = as<T>(n, name + "." + key);
}

void check_keys(const YAML::Node& section, const std::string& name,
                const std::set<std::string>& allowed) {
  if (!section.IsMap()) throw ConfigError("section '" + name + "' must be a mapping");
  for (const auto& kv : section) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) throw ConfigError("unknown key '" + name + "." + key + "'");
  }
}

baseline::Grid read_grid(const YAML::Node& n, const std::string& name, Method m) {
  auto g = baseline::default_grid(m);
  check_keys(n, name, m == Method::mw ? std::set<std::string>{"values", "windows"}
                                      : std::set<std::string>{"values"});
  read(n, name, "values", g.values);
  if (m == Method::mw) read(n, name, "windows", g.windows);
  return g;
}

baseline::BaselineParams read_params(const YAML::Node& n, const std::string& name, Method m) {
  auto p = baseline::published_optimum(m);
  if (m == Method::tbr) {
    check_keys(n, name, {"delta"});
    read(n, name, "delta", p.delta);
  } else if (m == Method::sf) {
    check_keys(n, name, {"threshold"});
    read(n, name, "threshold", p.threshold);
  } else {
    check_keys(n, name, {"threshold", "window"});
    read(n, name, "threshold", p.threshold);
    read(n, name, "window", p.window);
  }
  return p;
}

void apply(RunConfig& c, const YAML::Node& root) {
  if (!root || root.IsNull()) return;
  check_keys(root, "<root>", {"generator", "baselines", "model", "training", "evaluation"});

  if (const auto g = root["generator"]) {
    check_keys(g, "generator",
               {"sampling_period", "window_length", "carrier_hz", "max_components",
                "snr_db_set", "windows_per_count", "split", "seed"});
    auto& o = c.generator;
    read(g, "generator", "sampling_period", o.sampling_period);
    read(g, "generator", "window_length", o.window_length);
    read(g, "generator", "carrier_hz", o.carrier_hz);
    read(g, "generator", "max_components", o.max_components);
    read(g, "generator", "snr_db_set", o.snr_db_set);
    read(g, "generator", "windows_per_count", o.windows_per_count);
    if (const auto s = g["split"]) {
      const auto v = as<std::vector<double>>(s, "generator.split");
      if (v.size() != 3) throw ConfigError("generator.split needs three fractions");
      o.split = {v[0], v[1], v[2]};
    }
    read(g, "generator", "seed", o.seed);
  }

  if (const auto b = root["baselines"]) {
    check_keys(b, "baselines", {"tbr", "sf", "mw"});
    const std::pair<const char*, Method> methods[] = {
        {"tbr", Method::tbr}, {"sf", Method::sf}, {"mw", Method::mw}};
    for (const auto& [key, m] : methods) {
      const auto sec = b[key];
      if (!sec) continue;
      const std::string name = std::string("baselines.") + key;
      check_keys(sec, name, {"grid", "params"});
      auto& grid = m == Method::tbr ? c.baselines.tbr : m == Method::sf ? c.baselines.sf
                                                                         : c.baselines.mw;
      auto& params = m == Method::tbr  ? c.baselines.tbr_params
                     : m == Method::sf ? c.baselines.sf_params
                                       : c.baselines.mw_params;
      if (const auto gn = sec["grid"]) grid = read_grid(gn, name + ".grid", m);
      if (const auto pn = sec["params"]) params = read_params(pn, name + ".params", m);
    }
  }

  if (const auto m = root["model"]) {
    check_keys(m, "model",
               {"conv_features", "kernel", "snn_input", "snn_hidden", "surrogate_alpha",
                "bn_eps", "bn_momentum", "beta_init", "theta_init"});
    auto& o = c.model;
    read(m, "model", "conv_features", o.conv_features);
    read(m, "model", "kernel", o.kernel);
    read(m, "model", "snn_input", o.snn_input);
    read(m, "model", "snn_hidden", o.snn_hidden);
    read(m, "model", "surrogate_alpha", o.surrogate_alpha);
    read(m, "model", "bn_eps", o.bn_eps);
    read(m, "model", "bn_momentum", o.bn_momentum);
    read(m, "model", "beta_init", o.beta_init);
    read(m, "model", "theta_init", o.theta_init);
  }

  if (const auto t = root["training"]) {
    check_keys(t, "training",
               {"batch_size", "learning_rate", "lambda", "tau", "max_epochs", "patience",
                "seed", "precision"});
    auto& o = c.training;
    read(t, "training", "batch_size", o.batch_size);
    read(t, "training", "learning_rate", o.learning_rate);
    read(t, "training", "lambda", o.lambda);
    read(t, "training", "tau", o.tau);
    read(t, "training", "max_epochs", o.max_epochs);
    read(t, "training", "patience", o.patience);
    read(t, "training", "seed", o.seed);
    if (const auto p = t["precision"]) {
      try {
        o.precision = training::precision_from_string(as<std::string>(p, "training.precision"));
      } catch (const InputDomainError& e) {
        throw ConfigError(std::string("training.precision: ") + e.what());
      }
    }
  }

  if (const auto e = root["evaluation"]) {
    check_keys(e, "evaluation",
               {"lambdas", "lambda_seeds", "snr_db", "snr_windows", "snr_seed", "batch_size",
                "per_window_json"});
    auto& o = c.evaluation;
    read(e, "evaluation", "lambdas", o.lambdas);
    read(e, "evaluation", "lambda_seeds", o.lambda_seeds);
    read(e, "evaluation", "snr_db", o.snr_db);
    read(e, "evaluation", "snr_windows", o.snr_windows);
    read(e, "evaluation", "snr_seed", o.snr_seed);
    read(e, "evaluation", "batch_size", o.batch_size);
    read(e, "evaluation", "per_window_json", o.per_window_json);
  }
}

YAML::Node parse_node(const std::string& text) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
}

}  // namespace

RunConfig parse(const std::string& yaml_text) {
  RunConfig c;
  apply(c, parse_node(yaml_text));
  validate(c);
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key.path=value");
  const std::string path = assignment.substr(0, eq);
  const YAML::Node value = parse_node(assignment.substr(eq + 1));

  // Build a nested single-key document from the dotted path and apply it.
  std::vector<std::string> parts;
  std::stringstream ss(path);
  for (std::string part; std::getline(ss, part, '.');) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    parts.push_back(part);
  }
  YAML::Node doc = value;
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) {
    YAML::Node outer(YAML::NodeType::Map);
    outer[*it] = doc;
    doc = outer;
  }
  apply(cfg, doc);
  validate(cfg);
}

void validate(const RunConfig& c) {
  try {
    c.generator.validate();
    c.training.validate();
    for (const auto* p : {&c.baselines.tbr_params, &c.baselines.sf_params, &c.baselines.mw_params})
      p->validate();
  } catch (const InputDomainError& e) {
    throw ConfigError(e.what());
  }
  if (c.model.kernel % 2 == 0) throw ConfigError("model.kernel must be odd");
  if (c.evaluation.lambda_seeds == 0) throw ConfigError("evaluation.lambda_seeds must be >= 1");
  if (c.evaluation.batch_size == 0) throw ConfigError("evaluation.batch_size must be >= 1");
  for (double l : c.evaluation.lambdas)
    if (!(l >= 0 && l <= 1)) throw ConfigError("evaluation.lambdas must lie in [0, 1]");
}

std::string to_yaml(const RunConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;

  const auto& g = c.generator;
  out << YAML::Key << "generator" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "sampling_period" << YAML::Value << g.sampling_period;
  out << YAML::Key << "window_length" << YAML::Value << g.window_length;
  out << YAML::Key << "carrier_hz" << YAML::Value << g.carrier_hz;
  out << YAML::Key << "max_components" << YAML::Value << g.max_components;
  out << YAML::Key << "snr_db_set" << YAML::Value << YAML::Flow << g.snr_db_set;
  out << YAML::Key << "windows_per_count" << YAML::Value << g.windows_per_count;
  out << YAML::Key << "split" << YAML::Value << YAML::Flow
      << std::vector<double>(g.split.begin(), g.split.end());
  out << YAML::Key << "seed" << YAML::Value << g.seed;
  out << YAML::EndMap;

  out << YAML::Key << "baselines" << YAML::Value << YAML::BeginMap;
  const std::tuple<const char*, const baseline::Grid*, const baseline::BaselineParams*> bs[] = {
      {"tbr", &c.baselines.tbr, &c.baselines.tbr_params},
      {"sf", &c.baselines.sf, &c.baselines.sf_params},
      {"mw", &c.baselines.mw, &c.baselines.mw_params}};
  for (const auto& [key, grid, p] : bs) {
    out << YAML::Key << key << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "grid" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "values" << YAML::Value << YAML::Flow << grid->values;
    if (grid->method == Method::mw)
      out << YAML::Key << "windows" << YAML::Value << YAML::Flow << grid->windows;
    out << YAML::EndMap;
    out << YAML::Key << "params" << YAML::Value << YAML::BeginMap;
    if (p->method == Method::tbr) {
      out << YAML::Key << "delta" << YAML::Value << p->delta;
    } else {
      out << YAML::Key << "threshold" << YAML::Value << p->threshold;
      if (p->method == Method::mw) out << YAML::Key << "window" << YAML::Value << p->window;
    }
    out << YAML::EndMap << YAML::EndMap;
  }
  out << YAML::EndMap;

  const auto& m = c.model;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "conv_features" << YAML::Value << m.conv_features;
  out << YAML::Key << "kernel" << YAML::Value << m.kernel;
  out << YAML::Key << "snn_input" << YAML::Value << m.snn_input;
  out << YAML::Key << "snn_hidden" << YAML::Value << m.snn_hidden;
  out << YAML::Key << "surrogate_alpha" << YAML::Value << m.surrogate_alpha;
  out << YAML::Key << "bn_eps" << YAML::Value << m.bn_eps;
  out << YAML::Key << "bn_momentum" << YAML::Value << m.bn_momentum;
  out << YAML::Key << "beta_init" << YAML::Value << m.beta_init;
  out << YAML::Key << "theta_init" << YAML::Value << m.theta_init;
  out << YAML::EndMap;

  const auto& t = c.training;
  out << YAML::Key << "training" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "batch_size" << YAML::Value << t.batch_size;
  out << YAML::Key << "learning_rate" << YAML::Value << t.learning_rate;
  out << YAML::Key << "lambda" << YAML::Value << t.lambda;
  out << YAML::Key << "tau" << YAML::Value << t.tau;
  out << YAML::Key << "max_epochs" << YAML::Value << t.max_epochs;
  out << YAML::Key << "patience" << YAML::Value << t.patience;
  out << YAML::Key << "seed" << YAML::Value << t.seed;
  out << YAML::Key << "precision" << YAML::Value << training::to_string(t.precision);
  out << YAML::EndMap;

  const auto& e = c.evaluation;
  out << YAML::Key << "evaluation" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "lambdas" << YAML::Value << YAML::Flow << e.lambdas;
  out << YAML::Key << "lambda_seeds" << YAML::Value << e.lambda_seeds;
  out << YAML::Key << "snr_db" << YAML::Value << YAML::Flow << e.snr_db;
  out << YAML::Key << "snr_windows" << YAML::Value << e.snr_windows;
  out << YAML::Key << "snr_seed" << YAML::Value << e.snr_seed;
  out << YAML::Key << "batch_size" << YAML::Value << e.batch_size;
  out << YAML::Key << "per_window_json" << YAML::Value << e.per_window_json;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace lse::config
