#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nghf/optimizers.hpp"

namespace nghf {

struct TaskConfig {
  double kappa = 0.1;
  double prior_weight = 1.0;
  std::size_t beam = 16;
};

/// Everything `compare` needs. Method-specific optimizer settings live in
/// `optimizers`; epochs and (second-order) updates per epoch are shared so all
/// second-order methods get the same update budget.
struct ExperimentConfig {
  WorldConfig world;
  std::vector<std::size_t> hidden_dims{64, 64};
  Activation activation = Activation::sigmoid;
  TaskConfig task;
  PretrainConfig pretrain;
  std::map<Method, OptimizerConfig> optimizers;
  std::vector<Method> methods{Method::sgd, Method::ng, Method::hf, Method::nghf};
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  /// SGD η candidates; per seed the one with the best final validation criterion is kept.
  /// Empty means a single run at sgd.learning_rate.
  std::vector<double> sgd_learning_rate_grid{8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0};
  std::string output_dir = "runs";

  ExperimentConfig() {
    world.num_utterances = 400;
    world.noise_std = 1.5;
    pretrain.learning_rate = 1.0;
    pretrain.momentum = 0.9;
    pretrain.minibatch = 5;
    for (auto m : {Method::sgd, Method::ng, Method::hf, Method::nghf}) {
      OptimizerConfig c;
      c.method = m;
      optimizers[m] = c;
    }
    auto& sgd = optimizers[Method::sgd];
    sgd.learning_rate = 0.5;
    sgd.momentum = 0.0;
    sgd.anneal_factor = 0.5;
    sgd.updates_per_epoch = 18;
    for (auto m : {Method::ng, Method::hf, Method::nghf}) {
      auto& c = optimizers[m];
      c.damping = 3e-4;
      c.cg.max_iterations = 4;
      c.curvature_fraction = 0.1;
    }
  }

  NetworkSpec network() const {
    return {world.input_dim, hidden_dims, world.num_phones * world.states_per_phone, activation};
  }

  DecodeConfig decode() const { return {task.kappa, task.prior_weight}; }

  /// Optimizer settings for one (method, seed) run.
  OptimizerConfig optimizer(Method m, std::uint64_t seed) const {
    OptimizerConfig c = optimizers.at(m);
    c.method = m;
    c.seed = seed;
    return c;
  }

  void validate() const {
    world.validate();
    network().validate();
    if (methods.empty()) throw ConfigError("at least one method is required");
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    std::set<std::uint64_t> distinct(seeds.begin(), seeds.end());
    if (distinct.size() != seeds.size()) throw ConfigError("seeds must be distinct");
    std::set<Method> ms(methods.begin(), methods.end());
    if (ms.size() != methods.size()) throw ConfigError("methods must be distinct");
    if (!(task.kappa > 0.0)) throw ConfigError("task.kappa must be > 0");
    if (task.beam < 2) throw ConfigError("task.beam must be >= 2");
    for (auto m : methods) optimizer(m, 1).validate();
    for (double eta : sgd_learning_rate_grid)
      if (!(eta > 0.0)) throw ConfigError("sgd.learning_rate_grid entries must be > 0");
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size())
    throw ConfigError("bad value for '" + key + "': '" + v + "'");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("bad boolean for '" + key + "': '" + v + "'");
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

template <typename T, typename Get>
Setter number(Get get) {
  return [get](ExperimentConfig& c, const std::string& k, const std::string& v) { get(c) = parse_number<T>(k, v); };
}

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = [] {
    std::map<std::string, Setter> t;
    t["world.seed"] = number<std::uint64_t>([](auto& c) -> auto& { return c.world.seed; });
    t["world.num_utterances"] = number<std::size_t>([](auto& c) -> auto& { return c.world.num_utterances; });
    t["world.num_phones"] = number<std::size_t>([](auto& c) -> auto& { return c.world.num_phones; });
    t["world.states_per_phone"] = number<std::size_t>([](auto& c) -> auto& { return c.world.states_per_phone; });
    t["world.input_dim"] = number<std::size_t>([](auto& c) -> auto& { return c.world.input_dim; });
    t["world.min_length"] = number<std::size_t>([](auto& c) -> auto& { return c.world.min_length; });
    t["world.max_length"] = number<std::size_t>([](auto& c) -> auto& { return c.world.max_length; });
    t["world.cluster_separation"] = number<double>([](auto& c) -> auto& { return c.world.cluster_separation; });
    t["world.noise_std"] = number<double>([](auto& c) -> auto& { return c.world.noise_std; });
    t["world.bigram_sharpness"] = number<double>([](auto& c) -> auto& { return c.world.bigram_sharpness; });

    t["network.hidden"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.hidden_dims.clear();
      for (const auto& item : split_list(v)) c.hidden_dims.push_back(parse_number<std::size_t>(k, item));
    };
    t["network.activation"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "sigmoid")
        c.activation = Activation::sigmoid;
      else if (v == "relu")
        c.activation = Activation::relu;
      else
        throw ConfigError("bad value for '" + k + "': '" + v + "' (sigmoid|relu)");
    };

    t["task.kappa"] = number<double>([](auto& c) -> auto& { return c.task.kappa; });
    t["task.prior_weight"] = number<double>([](auto& c) -> auto& { return c.task.prior_weight; });
    t["task.beam"] = number<std::size_t>([](auto& c) -> auto& { return c.task.beam; });

    t["pretrain.epochs"] = number<std::size_t>([](auto& c) -> auto& { return c.pretrain.epochs; });
    t["pretrain.learning_rate"] = number<double>([](auto& c) -> auto& { return c.pretrain.learning_rate; });
    t["pretrain.momentum"] = number<double>([](auto& c) -> auto& { return c.pretrain.momentum; });
    t["pretrain.minibatch"] = number<std::size_t>([](auto& c) -> auto& { return c.pretrain.minibatch; });

    t["train.epochs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto e = parse_number<std::size_t>(k, v);
      for (auto& [m, oc] : c.optimizers) oc.epochs = e;
    };
    t["train.updates_per_epoch"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      const auto u = parse_number<std::size_t>(k, v);
      for (auto& [m, oc] : c.optimizers)
        if (m != Method::sgd) oc.updates_per_epoch = u;
    };

    for (auto m : {Method::sgd, Method::ng, Method::hf, Method::nghf}) {
      const std::string p = to_string(m) + ".";
      auto opt = [m](ExperimentConfig& c) -> OptimizerConfig& { return c.optimizers[m]; };
      t[p + "learning_rate"] = number<double>([opt](auto& c) -> auto& { return opt(c).learning_rate; });
      if (m == Method::sgd) {
        t[p + "momentum"] = number<double>([opt](auto& c) -> auto& { return opt(c).momentum; });
        t[p + "anneal"] = number<double>([opt](auto& c) -> auto& { return opt(c).anneal_factor; });
        t[p + "learning_rate_grid"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
          c.sgd_learning_rate_grid.clear();
          for (const auto& item : split_list(v)) c.sgd_learning_rate_grid.push_back(parse_number<double>(k, item));
        };
        t[p + "updates_per_epoch"] = number<std::size_t>([opt](auto& c) -> auto& { return opt(c).updates_per_epoch; });
        continue;
      }
      t[p + "damping"] = number<double>([opt](auto& c) -> auto& { return opt(c).damping; });
      t[p + "cg_iterations"] = number<std::size_t>([opt](auto& c) -> auto& { return opt(c).cg.max_iterations; });
      t[p + "cg_tolerance"] = number<double>([opt](auto& c) -> auto& { return opt(c).cg.tolerance; });
      t[p + "gradient_fraction"] = number<double>([opt](auto& c) -> auto& { return opt(c).gradient_fraction; });
      t[p + "curvature_fraction"] = number<double>([opt](auto& c) -> auto& { return opt(c).curvature_fraction; });
      t[p + "curvature_min"] =
          number<std::size_t>([opt](auto& c) -> auto& { return opt(c).curvature_min_utterances; });
    }
    t["hf.warm_start"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.optimizers[Method::hf].hf_warm_start = parse_bool(k, v);
    };
    t["nghf.rhs"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      if (v == "gradient")
        c.optimizers[Method::nghf].nghf_rhs = SecondRunRhs::gradient;
      else if (v == "ng_direction")
        c.optimizers[Method::nghf].nghf_rhs = SecondRunRhs::ng_direction;
      else
        throw ConfigError("bad value for '" + k + "': '" + v + "' (gradient|ng_direction)");
    };

    t["experiment.methods"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.methods.clear();
      for (const auto& item : split_list(v)) c.methods.push_back(parse_method(item));
    };
    t["experiment.seeds"] = [](ExperimentConfig& c, const std::string& k, const std::string& v) {
      c.seeds.clear();
      for (const auto& item : split_list(v)) c.seeds.push_back(parse_number<std::uint64_t>(k, item));
    };
    t["experiment.output_dir"] = [](ExperimentConfig& c, const std::string&, const std::string& v) {
      c.output_dir = v;
    };
    return t;
  }();
  return table;
}

}  // namespace config_detail

/// Applies one `key = value` assignment; unknown keys are errors.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  const auto& table = config_detail::setters();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

/// Flat `section.key = value` lines; `#` starts a comment.
inline ExperimentConfig parse_config(std::istream& is, ExperimentConfig cfg = {}) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_config(in);
}

inline std::vector<std::string> known_config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : config_detail::setters()) keys.push_back(k);
  return keys;
}

}  // namespace nghf
