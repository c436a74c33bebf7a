#pragma once

// Training runs, grids and their on-disk records.
//
// One run = (config, seed). Everything random inside a run is drawn from
// streams derived from the seed, so a run is a pure function of the pair.
// Output tree: <out_dir>/<grid>/<cell>/<seed>/{manifest.json, attention.csv,
// metrics.csv}.

#include "slotdep/config.hpp"
#include "slotdep/metrics.hpp"
#include "slotdep/model.hpp"
#include "slotdep/optim.hpp"

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef SLOTDEP_CODE_VERSION
#define SLOTDEP_CODE_VERSION "unversioned"
#endif

namespace slotdep {

namespace fs = std::filesystem;

inline constexpr const char* kCodeVersion = SLOTDEP_CODE_VERSION;

/// splitmix64 finalizer over (seed, stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + stream * 0xD1B54A32D192ED03ull + 0x632BE59BD9B4E5ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

enum Stream : std::uint64_t { kInit = 1, kTrainData, kValData, kTrainLoop, kMonitor, kEval };

inline DatasetSpec train_spec(const ExperimentConfig& c, std::uint64_t seed) {
  return {c.task, c.train_size, derive_seed(seed, kTrainData), c.noise_sigma, c.tokenizer.samples, {}};
}

inline DatasetSpec val_spec(const ExperimentConfig& c, std::uint64_t seed) {
  return {c.task, c.val_size, derive_seed(seed, kValData), c.noise_sigma, c.tokenizer.samples, {}};
}

// ---------------------------------------------------------------- evaluation

struct SampleDump {
  std::size_t sample_id = 0;
  Matrix attention;       // S x L
  Matrix evidence_after;  // S x L, evidence after each slot's update
};

struct EvalResult {
  AttentionBatch attention;
  std::vector<std::vector<double>> exist_logits;
  std::vector<MatchResult> matches;
  std::vector<int> source_counts;
  std::vector<double> crps_sum;  // per theta dimension
  std::size_t crps_count = 0;
  std::vector<SampleDump> dumps;
};

/// Inference-mode pass over data[0, count). Slot noise comes from `rng`.
inline EvalResult evaluate(const SlotModel& model, ParameterStore& store, const std::vector<Mixture>& data,
                           std::size_t count, std::mt19937_64& rng, std::size_t dump = 0, std::size_t chunk = 100) {
  EvalResult r;
  const Index S = model.config().slots.slots;
  const Index P = model.config().theta_dim;
  r.crps_sum.assign(static_cast<std::size_t>(P), 0.0);
  count = std::min(count, data.size());
  for (std::size_t start = 0; start < count; start += chunk) {
    const std::size_t end = std::min(count, start + chunk);
    std::vector<const Mixture*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&data[i]);
    Tape tape(false);
    Context ctx(tape, store);
    ModelOutput out = model.forward(ctx, stack_signals(batch), rng, Mode::Eval);
    const Matrix& att = out.slots.attention.value();
    const Matrix& ex = out.exist.value();
    const Matrix& mu = out.mu.value();
    const Matrix& ls = out.log_sigma.value();
    for (std::size_t j = 0; j < batch.size(); ++j) {
      const Index b = static_cast<Index>(j);
      AttentionSample s;
      s.attention = att.middleRows(b * S, S);
      for (Index q = 0; q < S; ++q) s.exist.push_back(ex(b * S + q, 0));
      s.k = batch[j]->k();
      const Matrix theta = theta_matrix(*batch[j]);
      MatchResult m = hungarian(nll_cost_matrix(mu.middleRows(b * S, S), ls.middleRows(b * S, S), theta));
      for (Index k = 0; k < theta.rows(); ++k) {
        const Index slot = b * S + m.assignment[static_cast<std::size_t>(k)];
        for (Index p = 0; p < P; ++p) {
          r.crps_sum[static_cast<std::size_t>(p)] += crps_gaussian(mu(slot, p), std::exp(ls(slot, p)), theta(k, p));
        }
        ++r.crps_count;
      }
      const std::size_t id = start + j;
      if (id < dump) {
        SampleDump d;
        d.sample_id = id;
        d.attention = s.attention;
        d.evidence_after = Matrix::Ones(S, out.slots.num_tokens);
        const auto& order = out.slots.orders[j];
        for (std::size_t t = 0; t < out.slots.step_evidence.size(); ++t) {
          d.evidence_after.row(order[t]) = out.slots.step_evidence[t].row(b);
        }
        r.dumps.push_back(std::move(d));
      }
      r.exist_logits.push_back(s.exist);
      r.source_counts.push_back(s.k);
      r.matches.push_back(std::move(m));
      r.attention.push_back(std::move(s));
    }
  }
  return r;
}

// ------------------------------------------------------------------ records

using Optional = std::optional<double>;

struct MetricsRow {
  std::string grid, cell;
  std::string task, mechanism, form;
  double gamma = 0.0, tau = 0.0;
  double w_div = 0.0, w_ortho = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash, status;
  Optional peak_overlap, max_active_overlap;
  Optional crps_freq, crps_center, crps_amp;
  Optional exist_acc, completeness;
  int n_multi_source = 0;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double flow = 0.0;
  double exist = 0.0;
  Optional monitor_overlap;
};

struct RunManifest {
  std::string grid, cell;
  std::uint64_t seed = 0;
  std::string config_text, config_hash, code_version;
  std::string status = "OK";
  std::string failure;
  double wall_seconds = 0.0;
  std::vector<EpochRecord> epochs;
  MetricsRow metrics;
  fs::path dir;

  bool ok() const { return status == "OK"; }
};

inline const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> cols = {
      "task",  "mechanism", "form",     "gamma",     "tau",          "seed",      "config_hash",
      "status", "peak_overlap", "max_active_overlap", "crps_freq", "crps_center", "crps_amp", "exist_acc",
      "completeness", "n_multi_source", "w_div", "w_ortho", "grid", "cell"};
  return cols;
}

inline std::string csv_number(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline std::string csv_optional(const Optional& v) { return v ? csv_number(*v) : "NA"; }

inline std::string metrics_csv_line(const MetricsRow& r) {
  std::vector<std::string> f = {r.task,
                                r.mechanism,
                                r.form,
                                csv_number(r.gamma),
                                csv_number(r.tau),
                                std::to_string(r.seed),
                                r.config_hash,
                                r.status,
                                csv_optional(r.peak_overlap),
                                csv_optional(r.max_active_overlap),
                                csv_optional(r.crps_freq),
                                csv_optional(r.crps_center),
                                csv_optional(r.crps_amp),
                                csv_optional(r.exist_acc),
                                csv_optional(r.completeness),
                                std::to_string(r.n_multi_source),
                                csv_number(r.w_div),
                                csv_number(r.w_ortho),
                                r.grid,
                                r.cell};
  std::string line;
  for (std::size_t i = 0; i < f.size(); ++i) line += (i ? "," : "") + f[i];
  return line;
}

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline nlohmann::json optional_json(const Optional& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

inline Optional json_optional(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

inline nlohmann::json to_json(const MetricsRow& r) {
  return {{"grid", r.grid},
          {"cell", r.cell},
          {"task", r.task},
          {"mechanism", r.mechanism},
          {"form", r.form},
          {"gamma", r.gamma},
          {"tau", r.tau},
          {"w_div", r.w_div},
          {"w_ortho", r.w_ortho},
          {"seed", r.seed},
          {"config_hash", r.config_hash},
          {"status", r.status},
          {"peak_overlap", optional_json(r.peak_overlap)},
          {"max_active_overlap", optional_json(r.max_active_overlap)},
          {"crps_freq", optional_json(r.crps_freq)},
          {"crps_center", optional_json(r.crps_center)},
          {"crps_amp", optional_json(r.crps_amp)},
          {"exist_acc", optional_json(r.exist_acc)},
          {"completeness", optional_json(r.completeness)},
          {"n_multi_source", r.n_multi_source}};
}

inline MetricsRow metrics_from_json(const nlohmann::json& j) {
  MetricsRow r;
  r.grid = j.at("grid").get<std::string>();
  r.cell = j.at("cell").get<std::string>();
  r.task = j.at("task").get<std::string>();
  r.mechanism = j.at("mechanism").get<std::string>();
  r.form = j.at("form").get<std::string>();
  r.gamma = j.at("gamma").get<double>();
  r.tau = j.at("tau").get<double>();
  r.w_div = j.at("w_div").get<double>();
  r.w_ortho = j.at("w_ortho").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.status = j.at("status").get<std::string>();
  r.peak_overlap = json_optional(j.at("peak_overlap"));
  r.max_active_overlap = json_optional(j.at("max_active_overlap"));
  r.crps_freq = json_optional(j.at("crps_freq"));
  r.crps_center = json_optional(j.at("crps_center"));
  r.crps_amp = json_optional(j.at("crps_amp"));
  r.exist_acc = json_optional(j.at("exist_acc"));
  r.completeness = json_optional(j.at("completeness"));
  r.n_multi_source = j.at("n_multi_source").get<int>();
  return r;
}

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : m.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss", std::isfinite(e.loss) ? nlohmann::json(e.loss) : nlohmann::json(nullptr)},
                      {"flow", std::isfinite(e.flow) ? nlohmann::json(e.flow) : nlohmann::json(nullptr)},
                      {"exist", std::isfinite(e.exist) ? nlohmann::json(e.exist) : nlohmann::json(nullptr)},
                      {"monitor_overlap", optional_json(e.monitor_overlap)}});
  }
  return {{"grid", m.grid},
          {"cell", m.cell},
          {"seed", m.seed},
          {"status", m.status},
          {"failure", m.failure},
          {"config_hash", m.config_hash},
          {"code_version", m.code_version},
          {"wall_seconds", m.wall_seconds},
          {"config", m.config_text},
          {"epochs", epochs},
          {"metrics", to_json(m.metrics)}};
}

inline double json_number_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.grid = j.at("grid").get<std::string>();
  m.cell = j.at("cell").get<std::string>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.status = j.at("status").get<std::string>();
  m.failure = j.at("failure").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.code_version = j.at("code_version").get<std::string>();
  m.wall_seconds = j.at("wall_seconds").get<double>();
  m.config_text = j.at("config").get<std::string>();
  for (const auto& e : j.at("epochs")) {
    EpochRecord r;
    r.epoch = e.at("epoch").get<int>();
    r.loss = json_number_or_nan(e.at("loss"));
    r.flow = json_number_or_nan(e.at("flow"));
    r.exist = json_number_or_nan(e.at("exist"));
    r.monitor_overlap = json_optional(e.at("monitor_overlap"));
    m.epochs.push_back(r);
  }
  m.metrics = metrics_from_json(j.at("metrics"));
  return m;
}

inline RunManifest load_manifest(const fs::path& file) {
  RunManifest m = manifest_from_json(nlohmann::json::parse(read_text(file)));
  m.dir = file.parent_path();
  return m;
}

inline fs::path run_dir(const ExperimentConfig& c, std::uint64_t seed) {
  return fs::path(c.out_dir) / c.grid / cell_name(c) / std::to_string(seed);
}

inline std::string attention_csv(const std::vector<SampleDump>& dumps) {
  std::ostringstream os;
  os << "sample_id,slot,token,alpha,evidence_after\n";
  for (const auto& d : dumps) {
    for (Index s = 0; s < d.attention.rows(); ++s) {
      for (Index l = 0; l < d.attention.cols(); ++l) {
        os << d.sample_id << ',' << s << ',' << l << ',' << csv_number(d.attention(s, l)) << ','
           << csv_number(d.evidence_after(s, l)) << '\n';
      }
    }
  }
  return os.str();
}

inline void write_run(const RunManifest& m, const std::vector<SampleDump>& dumps) {
  write_text(m.dir / "manifest.json", to_json(m).dump(2) + "\n");
  write_text(m.dir / "metrics.csv", join(metrics_columns(), ",") + "\n" + metrics_csv_line(m.metrics) + "\n");
  write_text(m.dir / "attention.csv", attention_csv(dumps));
}

// ----------------------------------------------------------------- training

struct RunOptions {
  bool write = true;   // persist the run directory
  bool reuse = false;  // skip when an OK manifest with the same hash and code version exists
  std::ostream* log = nullptr;
};

inline MetricsRow base_row(const ExperimentConfig& c, std::uint64_t seed) {
  MetricsRow r;
  r.grid = c.grid;
  r.cell = cell_name(c);
  r.task = std::string(1, task_letter(c.task));
  r.mechanism = variant_name(c);
  r.form = std::string(form_name(c.slots.form));
  r.gamma = c.slots.gamma;
  r.tau = c.slots.tau;
  r.w_div = c.weights.div;
  r.w_ortho = c.weights.ortho;
  r.seed = seed;
  r.config_hash = config_hash(c);
  return r;
}

inline void fill_metrics(MetricsRow& row, const EvalResult& ev, Family task) {
  const CollapseReport rep = collapse_report(ev.attention);
  row.peak_overlap = rep.peak_overlap_rate;
  row.max_active_overlap = rep.max_active_overlap;
  row.n_multi_source = rep.n_multi_source;
  const auto names = theta_names(task);
  for (std::size_t p = 0; p < names.size(); ++p) {
    const double v = ev.crps_count ? ev.crps_sum[p] / static_cast<double>(ev.crps_count) : 0.0;
    if (names[p] == "freq") row.crps_freq = v;
    if (names[p] == "center") row.crps_center = v;
    if (names[p] == "amp") row.crps_amp = v;
  }
  row.exist_acc = existence_accuracy(ev.exist_logits, ev.matches);
  row.completeness = completeness(ev.matches, ev.source_counts);
}

inline RunManifest run_training(const ExperimentConfig& cfg, std::uint64_t seed, const RunOptions& opt = {}) {
  cfg.validate();
  RunManifest man;
  man.grid = cfg.grid;
  man.cell = cell_name(cfg);
  man.seed = seed;
  man.config_text = to_config_text(cfg);
  man.config_hash = config_hash(cfg);
  man.code_version = kCodeVersion;
  man.dir = run_dir(cfg, seed);
  man.metrics = base_row(cfg, seed);

  if (opt.reuse && fs::exists(man.dir / "manifest.json")) {
    try {
      RunManifest old = load_manifest(man.dir / "manifest.json");
      if (old.ok() && old.config_hash == man.config_hash && old.code_version == man.code_version) {
        if (opt.log) *opt.log << "reuse " << man.cell << " seed " << seed << "\n";
        return old;
      }
    } catch (const std::exception&) {
      // Unreadable manifest: rerun.
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<Mixture> train = generate_dataset(train_spec(cfg, seed));
  const std::vector<Mixture> val = generate_dataset(val_spec(cfg, seed));
  std::vector<Matrix> targets;
  targets.reserve(train.size());
  for (const auto& m : train) targets.push_back(theta_matrix(m));

  std::mt19937_64 init_rng(derive_seed(seed, kInit));
  std::mt19937_64 loop_rng(derive_seed(seed, kTrainLoop));
  ParameterStore store;
  const SlotModel model = SlotModel::create(store, cfg.model(), init_rng);
  Adam adam(cfg.adam);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  auto monitor = [&]() -> Optional {
    if (cfg.monitor_size == 0) return std::nullopt;
    std::mt19937_64 rng(derive_seed(seed, kMonitor));  // same noise every epoch
    return collapse_report(evaluate(model, store, val, cfg.monitor_size, rng).attention).peak_overlap_rate;
  };

  try {
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), loop_rng);
      EpochRecord rec;
      rec.epoch = epoch;
      std::size_t batches = 0;
      for (std::size_t start = 0; start < order.size(); start += bs) {
        const std::size_t end = std::min(order.size(), start + bs);
        std::vector<const Mixture*> batch;
        std::vector<Matrix> tgt;
        for (std::size_t i = start; i < end; ++i) {
          batch.push_back(&train[order[i]]);
          tgt.push_back(targets[order[i]]);
        }
        Tape tape(true);
        Context ctx(tape, store);
        ModelOutput out = model.forward(ctx, stack_signals(batch), loop_rng, Mode::Train);
        LossBreakdown lb = model.loss(ctx, out, tgt, cfg.weights, loop_rng);
        const double loss = lb.total.scalar();
        if (!std::isfinite(loss)) throw std::domain_error("non-finite loss at epoch " + std::to_string(epoch));
        store.zero_grad();
        tape.backward(lb.total);
        const double gnorm = clip_grad_norm(store, cfg.grad_clip);
        if (!std::isfinite(gnorm)) throw std::domain_error("non-finite gradient at epoch " + std::to_string(epoch));
        adam.step(store);
        rec.loss += loss;
        rec.flow += lb.flow;
        rec.exist += lb.exist;
        ++batches;
      }
      rec.loss /= static_cast<double>(batches);
      rec.flow /= static_cast<double>(batches);
      rec.exist /= static_cast<double>(batches);
      rec.monitor_overlap = monitor();
      man.epochs.push_back(rec);
      if (opt.log && (epoch + 1) % 10 == 0) {
        *opt.log << man.cell << " seed " << seed << " epoch " << epoch + 1 << "/" << cfg.epochs << " loss "
                 << rec.loss << "\n";
      }
    }
  } catch (const std::domain_error& e) {
    man.status = "FAILED";
    man.failure = e.what();
  }

  std::vector<SampleDump> dumps;
  if (man.ok()) {
    try {
      std::mt19937_64 rng(derive_seed(seed, kEval));
      EvalResult ev = evaluate(model, store, val, val.size(), rng, cfg.dump_samples);
      fill_metrics(man.metrics, ev, cfg.task);
      dumps = std::move(ev.dumps);
    } catch (const std::domain_error& e) {
      man.status = "FAILED";
      man.failure = std::string("evaluation: ") + e.what();
    }
  }
  if (!man.ok()) man.metrics = base_row(cfg, seed);  // no partial metrics for a failed run
  man.metrics.status = man.status;
  man.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opt.write) write_run(man, dumps);
  if (opt.log) {
    *opt.log << "done " << man.cell << " seed " << seed << " " << man.status << " peak_overlap "
             << csv_optional(man.metrics.peak_overlap) << " (" << std::fixed << std::setprecision(1)
             << man.wall_seconds << " s)\n"
             << std::defaultfloat;
  }
  return man;
}

// -------------------------------------------------------------------- grids

struct GridResult {
  std::vector<RunManifest> runs;
  int failed() const {
    return static_cast<int>(std::count_if(runs.begin(), runs.end(), [](const RunManifest& m) { return !m.ok(); }));
  }
};

/// Runs every (cell, seed) pair with up to `jobs` worker threads. Results keep
/// the cell-major, seed-minor order of the request whatever the schedule.
inline GridResult run_grid(const std::vector<ExperimentConfig>& cells, int jobs, const RunOptions& opt = {}) {
  struct Task {
    const ExperimentConfig* cfg;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& c : cells) {
    c.validate();
    for (auto s : c.seeds) tasks.push_back({&c, s});
  }
  GridResult res;
  res.runs.resize(tasks.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mu;
  std::vector<std::exception_ptr> errors(tasks.size());
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      std::ostringstream local;
      RunOptions o = opt;
      o.log = opt.log ? &local : nullptr;
      try {
        res.runs[i] = run_training(*tasks[i].cfg, tasks[i].seed, o);
      } catch (...) {
        errors[i] = std::current_exception();
      }
      if (opt.log) {
        std::lock_guard<std::mutex> lock(log_mu);
        *opt.log << local.str() << std::flush;
      }
    }
  };
  const int n = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return res;
}

inline std::vector<ExperimentConfig> ablation_cells(const ExperimentConfig& base, const std::vector<Family>& tasks,
                                                    const std::vector<std::string>& variants) {
  std::vector<ExperimentConfig> cells;
  for (Family t : tasks) {
    for (const auto& v : variants) {
      ExperimentConfig c = base;
      c.task = t;
      apply_variant(c, v);
      cells.push_back(c);
    }
  }
  return cells;
}

inline const std::vector<std::string>& table1_variants() {
  static const std::vector<std::string> v = {"vanilla",           "sequential", "evidence-linear",
                                             "evidence-quadratic", "dataspace",  "dataspace-bias"};
  return v;
}

inline const std::vector<std::string>& form_variants() {
  static const std::vector<std::string> v = {"evidence-binary", "evidence-linear", "evidence-quadratic",
                                             "evidence-cubic"};
  return v;
}

inline std::vector<ExperimentConfig> sensitivity_cells(const ExperimentConfig& base, const std::vector<double>& gammas,
                                                       const std::vector<double>& taus) {
  std::vector<ExperimentConfig> cells;
  for (double g : gammas) {
    for (double t : taus) {
      ExperimentConfig c = base;
      apply_variant(c, "evidence-quadratic");
      c.slots.gamma = g;
      c.slots.tau = t;
      cells.push_back(c);
    }
  }
  return cells;
}

/// {vanilla, sequential} x {div, ortho, both} per task, plus the
/// evidence-linear reference with no auxiliary loss.
inline std::vector<ExperimentConfig> loss_baseline_cells(const ExperimentConfig& base, const std::vector<Family>& tasks,
                                                         double w_div = 5.0, double w_ortho = 3.0) {
  std::vector<ExperimentConfig> cells;
  for (Family t : tasks) {
    for (const char* v : {"vanilla", "sequential"}) {
      for (int mode = 0; mode < 3; ++mode) {
        ExperimentConfig c = base;
        c.task = t;
        apply_variant(c, v);
        c.weights.div = mode != 1 ? w_div : 0.0;
        c.weights.ortho = mode != 0 ? w_ortho : 0.0;
        cells.push_back(c);
      }
    }
    ExperimentConfig ref = base;
    ref.task = t;
    apply_variant(ref, "evidence-linear");
    ref.weights.div = ref.weights.ortho = 0.0;
    cells.push_back(ref);
  }
  return cells;
}

// ---------------------------------------------------------------- aggregation

struct CellSummary {
  std::string grid, cell, task, mechanism, form;
  double gamma = 0.0, tau = 0.0, w_div = 0.0, w_ortho = 0.0;
  int n_runs = 0, n_ok = 0, n_failed = 0;
  Optional peak_mean, peak_std, max_active_mean, max_active_std, exist_acc_mean;
  std::vector<Optional> peak_per_seed;
};

/// Mean and population std (ddof = 0) of the present values; absent if none.
inline std::pair<Optional, Optional> mean_std(const std::vector<Optional>& xs) {
  double sum = 0.0;
  int n = 0;
  for (const auto& x : xs) {
    if (x) {
      sum += *x;
      ++n;
    }
  }
  if (n == 0) return {std::nullopt, std::nullopt};
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& x : xs) {
    if (x) ss += (*x - mean) * (*x - mean);
  }
  return {mean, std::sqrt(ss / n)};
}

/// Groups rows by (grid, cell); order follows first appearance.
inline std::vector<CellSummary> summarize(const std::vector<MetricsRow>& rows) {
  std::vector<CellSummary> out;
  std::vector<std::vector<const MetricsRow*>> members;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const CellSummary& s) { return s.grid == r.grid && s.cell == r.cell; });
    if (it == out.end()) {
      CellSummary s;
      s.grid = r.grid;
      s.cell = r.cell;
      s.task = r.task;
      s.mechanism = r.mechanism;
      s.form = r.form;
      s.gamma = r.gamma;
      s.tau = r.tau;
      s.w_div = r.w_div;
      s.w_ortho = r.w_ortho;
      out.push_back(s);
      members.emplace_back();
      it = out.end() - 1;
    }
    members[static_cast<std::size_t>(it - out.begin())].push_back(&r);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<Optional> peak, maxa, acc;
    for (const MetricsRow* r : members[i]) {
      ++out[i].n_runs;
      const bool ok = r->status == "OK";
      out[i].n_ok += ok ? 1 : 0;
      out[i].n_failed += ok ? 0 : 1;
      peak.push_back(ok ? r->peak_overlap : std::nullopt);
      maxa.push_back(ok ? r->max_active_overlap : std::nullopt);
      acc.push_back(ok ? r->exist_acc : std::nullopt);
    }
    out[i].peak_per_seed = peak;
    std::tie(out[i].peak_mean, out[i].peak_std) = mean_std(peak);
    std::tie(out[i].max_active_mean, out[i].max_active_std) = mean_std(maxa);
    out[i].exist_acc_mean = mean_std(acc).first;
  }
  return out;
}

inline std::vector<MetricsRow> rows_of(const GridResult& g) {
  std::vector<MetricsRow> rows;
  for (const auto& m : g.runs) rows.push_back(m.metrics);
  return rows;
}

inline const CellSummary* find_cell(const std::vector<CellSummary>& s, const std::string& cell) {
  for (const auto& c : s) {
    if (c.cell == cell) return &c;
  }
  return nullptr;
}

}  // namespace slotdep
