// Command-line experiment runner: generate | pretrain | train | compare | report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <regex>

#include <CLI11.hpp>

#include "nghf/nghf.hpp"

namespace fs = std::filesystem;
using namespace nghf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonOptions {
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "runs";
};

ExperimentConfig load(const CommonOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_config(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, CommonOptions& o) {
  app->add_option("--config", o.config, "Config file (flat dotted key = value)");
  app->add_option("--set", o.overrides, "Override a config key, key=value (repeatable)");
  app->add_option("--out", o.out, "Output directory");
}

void write_checkpoint_file(const fs::path& path, const ParameterVector& p) {
  std::ofstream os(path, std::ios::binary);
  write_checkpoint(os, p);
}

ParameterVector ce_model_for(const ExperimentConfig& cfg, const Corpus& corpus, std::uint64_t seed,
                             const fs::path& out) {
  const auto path = out / ("ce_seed" + std::to_string(seed) + ".ckpt");
  if (fs::exists(path)) {
    std::ifstream is(path, std::ios::binary);
    auto p = read_checkpoint(is);
    if (p.layout() == *cfg.network().make_layout()) return p;
    std::cerr << "ignoring " << path << ": layout does not match the configured network\n";
  }
  return pretrain_model(cfg, split_corpus(corpus).first, seed);
}

int cmd_generate(const CommonOptions& o) {
  const auto cfg = load(o);
  const auto corpus = generate_corpus(cfg.world);
  fs::create_directories(o.out);
  {
    std::ofstream os(fs::path(o.out) / "corpus.bin", std::ios::binary);
    write_corpus_cache(os, corpus.utterances);
  }
  {
    std::ofstream os(fs::path(o.out) / "corpus.cfg");
    const auto& w = cfg.world;
    os << "world.seed = " << w.seed << "\nworld.num_utterances = " << w.num_utterances
       << "\nworld.num_phones = " << w.num_phones << "\nworld.states_per_phone = " << w.states_per_phone
       << "\nworld.input_dim = " << w.input_dim << "\nworld.min_length = " << w.min_length
       << "\nworld.max_length = " << w.max_length << "\nworld.cluster_separation = " << w.cluster_separation
       << "\nworld.noise_std = " << w.noise_std << "\nworld.bigram_sharpness = " << w.bigram_sharpness << '\n';
  }
  const auto [train, valid] = split_corpus(corpus);
  std::size_t frames = 0;
  for (const auto& u : corpus.utterances) frames += u.num_frames();
  std::cout << "utterances " << corpus.utterances.size() << " (train " << train.size() << ", valid " << valid.size()
            << "), frames " << frames << ", states " << corpus.world.num_states() << '\n';
  return kExitOk;
}

int cmd_pretrain(const CommonOptions& o, std::uint64_t seed) {
  const auto cfg = load(o);
  const auto corpus = generate_corpus(cfg.world);
  std::vector<double> ll;
  const auto model = pretrain_model(cfg, split_corpus(corpus).first, seed, &ll);
  fs::create_directories(o.out);
  write_checkpoint_file(fs::path(o.out) / ("ce_seed" + std::to_string(seed) + ".ckpt"), model);
  const auto problem = make_problem(cfg, corpus, model);
  const auto dir = fs::path(o.out) / ("lattices_seed" + std::to_string(seed));
  fs::create_directories(dir);
  for (std::size_t i = 0; i < problem.train.size(); ++i) {
    std::ofstream os(dir / ("train" + std::to_string(i) + ".lat"));
    write_lattice(os, problem.train.lattices[i]);
  }
  for (std::size_t e = 0; e < ll.size(); ++e)
    std::cout << "epoch " << e + 1 << " mean frame log-likelihood " << ll[e] << '\n';
  return kExitOk;
}

int cmd_train(const CommonOptions& o, std::uint64_t seed, const std::string& method_name) {
  const auto cfg = load(o);
  const Method method = parse_method(method_name);
  const auto corpus = generate_corpus(cfg.world);
  fs::create_directories(o.out);
  const auto ce = ce_model_for(cfg, corpus, seed, o.out);
  const auto problem = make_problem(cfg, corpus, ce);
  const auto res = train(problem, ce, cfg.optimizer(method, seed));
  {
    std::ofstream os(fs::path(o.out) / run_log_filename(to_string(method), seed));
    write_run_log_csv(os, res.log);
  }
  write_checkpoint_file(fs::path(o.out) / (to_string(method) + "_seed" + std::to_string(seed) + ".ckpt"), res.theta);
  const auto s = final_summary(res.log);
  std::cout << "initial train " << res.log.initial->train_criterion << " valid " << res.log.initial->valid_criterion
            << " SER " << res.log.initial->valid_sequence_error_rate << '\n'
            << "final   train " << s.train_criterion << " valid " << s.valid_criterion << " SER "
            << s.valid_sequence_error_rate << " (" << res.log.rows.size() << " updates, " << res.seconds << " s)\n";
  return kExitOk;
}

int cmd_compare(const CommonOptions& o) {
  auto cfg = load(o);
  cfg.output_dir = o.out;
  const auto res = run_experiment(cfg, [](const std::string& msg) { std::cerr << msg << '\n'; });
  write_experiment(res, cfg.output_dir);
  write_summary(std::cout, res);
  return res.all_failed() ? kExitNumerical : kExitOk;
}

int cmd_report(const CommonOptions& o) {
  static const std::regex pattern(R"(runlog_.*_seed\d+\.csv)");
  std::vector<fs::path> files;
  if (!fs::is_directory(o.out)) throw ConfigError("no such directory '" + o.out + "'");
  for (const auto& e : fs::directory_iterator(o.out))
    if (std::regex_match(e.path().filename().string(), pattern)) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no run logs in '" + o.out + "'");
  ExperimentResult r;
  std::map<std::uint64_t, SummaryRow> baseline;
  for (const auto& f : files) {
    std::ifstream is(f);
    auto log = read_run_log_csv(is);
    if (log.initial) {
      auto b = *log.initial;
      baseline.emplace(log.seed, SummaryRow{"ce", log.seed, b.train_criterion, b.valid_criterion,
                                            b.valid_sequence_error_rate, b.mean_posterior_entropy});
    }
    r.finals.push_back(final_summary(log));
    r.runs.push_back({parse_method(log.method), log.seed, std::move(log), {}, 0.0, 0.0});
  }
  for (const auto& [seed, row] : baseline) r.baseline.push_back(row);
  r.medians = medians_with_baseline(r.baseline, r.finals);
  r.entropy = entropy_diagnostic(r.logs());
  emit_plots_data(r.logs(), o.out);
  {
    std::ofstream os(fs::path(o.out) / "summary.csv");
    write_summary_csv(os, r);
  }
  {
    std::ofstream os(fs::path(o.out) / "summary.txt");
    write_summary(os, r);
  }
  write_summary(std::cout, r);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Second-order sequence-training experiments (SGD, NG, HF, NGHF) on a synthetic lattice task"};
  app.require_subcommand(1);
  CommonOptions opts;
  std::uint64_t seed = 1;
  std::string method = "nghf";

  auto* gen = app.add_subcommand("generate", "Sample the toy corpus and write its cache and config");
  add_common(gen, opts);
  auto* pre = app.add_subcommand("pretrain", "Frame cross-entropy pre-training; writes ce_seed<N>.ckpt and its training lattices");
  add_common(pre, opts);
  pre->add_option("--seed", seed, "Initialization / training seed");
  auto* tr = app.add_subcommand("train", "Sequence-train one method from the CE model");
  add_common(tr, opts);
  tr->add_option("--seed", seed, "Initialization / training seed");
  tr->add_option("--method", method, "sgd | ng | hf | nghf");
  auto* cmp = app.add_subcommand("compare", "Every configured method x seed; run logs, summary, plot data");
  add_common(cmp, opts);
  auto* rep = app.add_subcommand("report", "Summaries and plot data from run logs in --out");
  add_common(rep, opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*gen) return cmd_generate(opts);
    if (*pre) return cmd_pretrain(opts, seed);
    if (*tr) return cmd_train(opts, seed, method);
    if (*cmp) return cmd_compare(opts);
    if (*rep) return cmd_report(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
