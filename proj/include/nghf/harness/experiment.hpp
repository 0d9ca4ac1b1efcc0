#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nghf/harness/config.hpp"
#include "nghf/harness/run_log.hpp"

namespace nghf {

/// Softmax entropy of the network outputs averaged over all frames.
inline double mean_posterior_entropy(const NetworkSpec& spec, const ParameterVector& theta, const Matrix& frames) {
  return mean_entropy_of_outputs(forward(spec, theta, frames).outputs);
}

/// Median of a copy; independent of input order.
inline double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Splits a corpus into training and held-out utterances.
inline std::pair<std::vector<Utterance>, std::vector<Utterance>> split_corpus(const Corpus& c) {
  std::vector<Utterance> train, valid;
  for (std::size_t i = 0; i < c.utterances.size(); ++i)
    (is_validation_utterance(c.config.seed, i) ? valid : train).push_back(c.utterances[i]);
  return {std::move(train), std::move(valid)};
}

/// CE-initialised model and frozen lattices for one seed.
struct SeedSetup {
  ParameterVector initial;
  ParameterVector ce_model;
  std::vector<double> ce_log_likelihood;
  TrainingProblem problem;
};

inline ParameterVector pretrain_model(const ExperimentConfig& cfg, const std::vector<Utterance>& train,
                                      std::uint64_t seed, std::vector<double>* log_likelihood = nullptr) {
  const auto spec = cfg.network();
  const auto theta0 = init_parameters(spec.make_layout(), seed, InitScheme::uniform_fan_in);
  PretrainConfig pc = cfg.pretrain;
  pc.seed = seed;
  auto r = pretrain_ce(spec, theta0, train, pc);
  if (log_likelihood) *log_likelihood = r.epoch_log_likelihood;
  return r.theta;
}

inline TrainingProblem make_problem(const ExperimentConfig& cfg, const Corpus& corpus, const ParameterVector& model) {
  auto [train, valid] = split_corpus(corpus);
  TrainingProblem p;
  p.spec = cfg.network();
  p.world = corpus.world;
  p.kappa = cfg.task.kappa;
  p.decode = cfg.decode();
  p.train.lattices = build_lattices(p.world, p.spec, model, train, p.decode, cfg.task.beam);
  p.valid.lattices = build_lattices(p.world, p.spec, model, valid, p.decode, cfg.task.beam);
  p.train.utterances = std::move(train);
  p.valid.utterances = std::move(valid);
  return p;
}

inline SeedSetup prepare_seed(const ExperimentConfig& cfg, const Corpus& corpus, std::uint64_t seed) {
  SeedSetup s;
  const auto spec = cfg.network();
  s.initial = init_parameters(spec.make_layout(), seed, InitScheme::uniform_fan_in);
  auto train = split_corpus(corpus).first;
  s.ce_model = pretrain_model(cfg, train, seed, &s.ce_log_likelihood);
  s.problem = make_problem(cfg, corpus, s.ce_model);
  return s;
}

struct RunOutcome {
  Method method = Method::nghf;
  std::uint64_t seed = 0;
  std::optional<RunLog> log;
  std::string error;
  double seconds = 0.0;
  double cg_seconds = 0.0;
  double learning_rate = 0.0;
};

/// Final metrics of one run (or of the CE baseline, method "ce").
struct SummaryRow {
  std::string method;
  std::uint64_t seed = 0;
  double train_criterion = 0.0;
  double valid_criterion = 0.0;
  double valid_sequence_error_rate = 0.0;
  double mean_posterior_entropy = 0.0;
};

struct MethodMedians {
  std::string method;
  std::size_t runs = 0;
  double train_criterion = 0.0;
  double valid_criterion = 0.0;
  double valid_sequence_error_rate = 0.0;
  double mean_posterior_entropy = 0.0;
};

inline SummaryRow final_summary(const RunLog& log) {
  const RunLogRow& r = log.rows.empty() ? log.initial.value() : log.rows.back();
  return {log.method, log.seed, r.train_criterion, r.valid_criterion, r.valid_sequence_error_rate,
          r.mean_posterior_entropy};
}

/// Per-method medians across seeds, in first-appearance order of methods.
inline std::vector<MethodMedians> summarize(const std::vector<SummaryRow>& rows) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SummaryRow*>> by;
  for (const auto& r : rows) {
    if (!by.count(r.method)) order.push_back(r.method);
    by[r.method].push_back(&r);
  }
  std::vector<MethodMedians> out;
  for (const auto& m : order) {
    std::vector<double> tc, vc, ser, ent;
    for (const auto* r : by[m]) {
      tc.push_back(r->train_criterion);
      vc.push_back(r->valid_criterion);
      ser.push_back(r->valid_sequence_error_rate);
      ent.push_back(r->mean_posterior_entropy);
    }
    out.push_back({m, by[m].size(), median(tc), median(vc), median(ser), median(ent)});
  }
  return out;
}

/// Entropy drop of each run at a common training-criterion gain, interpolated
/// linearly between the two updates that bracket it.
struct EntropyDrop {
  std::string method;
  std::uint64_t seed = 0;
  std::optional<std::size_t> update;  ///< empty when the run never reaches the target
  double criterion_gain = 0.0;
  double entropy_drop = 0.0;
};

struct EntropyDiagnostic {
  double target_gain = 0.0;
  std::vector<EntropyDrop> runs;
  std::map<std::string, double> median_drop;  ///< over runs that reached the target
};

/// `target_fraction` of the smallest positive best-gain over all runs sets the window.
inline EntropyDiagnostic entropy_diagnostic(const std::vector<RunLog>& logs, double target_fraction = 0.5) {
  EntropyDiagnostic d;
  double min_gain = std::numeric_limits<double>::infinity();
  for (const auto& log : logs) {
    if (!log.initial) continue;
    double best = 0.0;
    for (const auto& r : log.rows) best = std::max(best, r.train_criterion - log.initial->train_criterion);
    if (best > 0.0) min_gain = std::min(min_gain, best);
  }
  if (!std::isfinite(min_gain)) return d;
  d.target_gain = target_fraction * min_gain;
  std::map<std::string, std::vector<double>> drops;
  for (const auto& log : logs) {
    if (!log.initial) continue;
    EntropyDrop e{log.method, log.seed, std::nullopt, 0.0, 0.0};
    double prev_gain = 0.0, prev_drop = 0.0;
    for (const auto& r : log.rows) {
      const double gain = r.train_criterion - log.initial->train_criterion;
      const double drop = log.initial->mean_posterior_entropy - r.mean_posterior_entropy;
      if (gain >= d.target_gain) {
        const double t = gain > prev_gain ? (d.target_gain - prev_gain) / (gain - prev_gain) : 1.0;
        e.update = r.update_index;
        e.criterion_gain = d.target_gain;
        e.entropy_drop = prev_drop + t * (drop - prev_drop);
        drops[log.method].push_back(e.entropy_drop);
        break;
      }
      prev_gain = gain;
      prev_drop = drop;
    }
    d.runs.push_back(e);
  }
  for (auto& [m, v] : drops) d.median_drop[m] = median(v);
  return d;
}

/// One long-format data point: (update, method, seed, metric, value).
struct PlotPoint {
  std::size_t update = 0;
  std::string method;
  std::uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

inline const std::vector<std::string>& plot_metrics() {
  static const std::vector<std::string> m{"train_criterion", "valid_criterion", "valid_ser",
                                          "mean_posterior_entropy"};
  return m;
}

inline std::vector<PlotPoint> plot_points(const std::vector<RunLog>& logs, const std::string& metric) {
  std::vector<PlotPoint> out;
  for (const auto& log : logs)
    for (const auto& r : log.rows) {
      double v = 0.0;
      if (metric == "train_criterion")
        v = r.train_criterion;
      else if (metric == "valid_criterion")
        v = r.valid_criterion;
      else if (metric == "valid_ser")
        v = r.valid_sequence_error_rate;
      else if (metric == "mean_posterior_entropy")
        v = r.mean_posterior_entropy;
      else
        throw ConfigError("unknown plot metric '" + metric + "'");
      out.push_back({r.update_index, r.method, r.seed, metric, v});
    }
  return out;
}

inline constexpr const char* kPlotHeader = "update,method,seed,metric,value";

inline void write_plot_csv(std::ostream& os, const std::vector<PlotPoint>& pts) {
  os << kPlotHeader << '\n';
  for (const auto& p : pts)
    os << p.update << ',' << p.method << ',' << p.seed << ',' << p.metric << ',' << csv_detail::fmt(p.value) << '\n';
}

/// Writes `plot_<metric>.csv` for every metric; returns the paths written.
inline std::vector<std::filesystem::path> emit_plots_data(const std::vector<RunLog>& logs,
                                                          const std::filesystem::path& dir) {
  if (logs.empty()) throw ConfigError("no run logs to plot");
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  for (const auto& metric : plot_metrics()) {
    const auto path = dir / ("plot_" + metric + ".csv");
    std::ofstream os(path);
    write_plot_csv(os, plot_points(logs, metric));
    written.push_back(path);
  }
  return written;
}

inline std::string run_log_filename(const std::string& method, std::uint64_t seed) {
  return "runlog_" + method + "_seed" + std::to_string(seed) + ".csv";
}

struct ExperimentResult {
  std::vector<RunOutcome> runs;
  std::vector<SummaryRow> baseline;  ///< CE model per seed
  std::vector<SummaryRow> finals;
  std::vector<MethodMedians> medians;  ///< CE row first, then methods
  EntropyDiagnostic entropy;

  std::vector<RunLog> logs() const {
    std::vector<RunLog> out;
    for (const auto& r : runs)
      if (r.log) out.push_back(*r.log);
    return out;
  }
  bool all_failed() const {
    return std::none_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.log.has_value(); });
  }
};

inline void write_summary(std::ostream& os, const ExperimentResult& r) {
  os << std::left << std::setw(8) << "method" << std::right << std::setw(6) << "runs" << std::setw(14)
     << "train crit" << std::setw(14) << "valid crit" << std::setw(12) << "valid SER" << std::setw(12) << "entropy"
     << '\n';
  os << std::fixed << std::setprecision(4);
  for (const auto& m : r.medians)
    os << std::left << std::setw(8) << m.method << std::right << std::setw(6) << m.runs << std::setw(14)
       << m.train_criterion << std::setw(14) << m.valid_criterion << std::setw(12) << m.valid_sequence_error_rate
       << std::setw(12) << m.mean_posterior_entropy << '\n';
  if (!r.entropy.median_drop.empty()) {
    os << "entropy drop at matched train-criterion gain " << r.entropy.target_gain << ":";
    for (const auto& [m, v] : r.entropy.median_drop) os << ' ' << m << '=' << v;
    os << '\n';
  }
  for (const auto& run : r.runs)
    if (!run.log) os << "FAILED " << to_string(run.method) << " seed " << run.seed << ": " << run.error << '\n';
  os.unsetf(std::ios::floatfield);
}

inline void write_summary_csv(std::ostream& os, const ExperimentResult& r) {
  using csv_detail::fmt;
  os << "method,seed,train_criterion,valid_criterion,valid_ser,mean_posterior_entropy\n";
  auto put = [&](const SummaryRow& s) {
    os << s.method << ',' << s.seed << ',' << fmt(s.train_criterion) << ',' << fmt(s.valid_criterion) << ','
       << fmt(s.valid_sequence_error_rate) << ',' << fmt(s.mean_posterior_entropy) << '\n';
  };
  for (const auto& s : r.baseline) put(s);
  for (const auto& s : r.finals) put(s);
}

inline std::vector<MethodMedians> medians_with_baseline(const std::vector<SummaryRow>& baseline,
                                                        const std::vector<SummaryRow>& finals) {
  auto out = summarize(baseline);
  auto rest = summarize(finals);
  out.insert(out.end(), rest.begin(), rest.end());
  return out;
}

using ProgressFn = std::function<void(const std::string&)>;

struct GridChoice {
  double learning_rate = 0.0;
  TrainResult result;
};

/// Trains once per η and keeps the run with the highest final validation
/// criterion (earliest η on ties). Runs that abort numerically are skipped;
/// throws the last error if every η fails.
inline GridChoice sgd_grid_search(const TrainingProblem& problem, const ParameterVector& theta0,
                                  OptimizerConfig cfg, const std::vector<double>& etas) {
  if (etas.empty()) throw ConfigError("empty learning-rate grid");
  std::optional<GridChoice> best;
  std::string last_error;
  double elapsed = 0.0, cg = 0.0;
  for (double eta : etas) {
    cfg.learning_rate = eta;
    try {
      auto tr = train(problem, theta0, cfg);
      elapsed += tr.seconds;
      cg += tr.cg_seconds;
      if (!best || final_summary(tr.log).valid_criterion > final_summary(best->result.log).valid_criterion)
        best = GridChoice{eta, std::move(tr)};
    } catch (const NumericalError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw NumericalError(last_error);
  best->result.seconds = elapsed;
  best->result.cg_seconds = cg;
  return std::move(*best);
}

/// Every method × seed from a shared CE model per seed. Numerical failures of a
/// single run are recorded in its outcome and do not stop the others.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ProgressFn& progress = {}) {
  cfg.validate();
  const Corpus corpus = generate_corpus(cfg.world);
  ExperimentResult res;
  for (auto seed : cfg.seeds) {
    if (progress) progress("seed " + std::to_string(seed) + ": CE pre-training and lattice generation");
    const SeedSetup setup = prepare_seed(cfg, corpus, seed);
    const auto base = evaluate(setup.problem, setup.ce_model);
    res.baseline.push_back({"ce", seed, base.train_criterion, base.valid_criterion, base.valid_sequence_error_rate,
                            base.mean_posterior_entropy});
    for (auto m : cfg.methods) {
      RunOutcome out{m, seed, std::nullopt, {}, 0.0, 0.0, cfg.optimizer(m, seed).learning_rate};
      try {
        TrainResult tr;
        if (m == Method::sgd && !cfg.sgd_learning_rate_grid.empty()) {
          auto g = sgd_grid_search(setup.problem, setup.ce_model, cfg.optimizer(m, seed), cfg.sgd_learning_rate_grid);
          out.learning_rate = g.learning_rate;
          tr = std::move(g.result);
        } else {
          tr = train(setup.problem, setup.ce_model, cfg.optimizer(m, seed));
        }
        out.seconds = tr.seconds;
        out.cg_seconds = tr.cg_seconds;
        res.finals.push_back(final_summary(tr.log));
        out.log = std::move(tr.log);
      } catch (const NumericalError& e) {
        out.error = e.what();
      }
      if (progress)
        progress("seed " + std::to_string(seed) + " " + to_string(m) +
                 (out.log ? " done in " + std::to_string(out.seconds) + " s" +
                                (m == Method::sgd ? " (eta " + csv_detail::fmt(out.learning_rate) + ")" : "")
                          : " FAILED: " + out.error));
      res.runs.push_back(std::move(out));
    }
  }
  res.medians = medians_with_baseline(res.baseline, res.finals);
  res.entropy = entropy_diagnostic(res.logs());
  return res;
}

/// Run logs, summaries, entropy diagnostic, and plot data under `dir`.
inline void write_experiment(const ExperimentResult& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& run : r.runs)
    if (run.log) {
      std::ofstream os(dir / run_log_filename(run.log->method, run.log->seed));
      write_run_log_csv(os, *run.log);
    }
  {
    std::ofstream os(dir / "summary.csv");
    write_summary_csv(os, r);
  }
  {
    std::ofstream os(dir / "summary.txt");
    write_summary(os, r);
  }
  {
    std::ofstream os(dir / "entropy_diagnostic.csv");
    os << "method,seed,update,criterion_gain,entropy_drop\n";
    for (const auto& e : r.entropy.runs)
      os << e.method << ',' << e.seed << ',' << (e.update ? std::to_string(*e.update) : std::string("")) << ','
         << csv_detail::fmt(e.criterion_gain) << ',' << csv_detail::fmt(e.entropy_drop) << '\n';
  }
  {
    std::ofstream os(dir / "timing.csv");
    os << "method,seed,learning_rate,seconds,cg_seconds\n";
    for (const auto& run : r.runs)
      os << to_string(run.method) << ',' << run.seed << ',' << run.learning_rate << ',' << run.seconds << ','
         << run.cg_seconds << '\n';
  }
  const auto logs = r.logs();
  if (!logs.empty()) emit_plots_data(logs, dir);
}

}  // namespace nghf
