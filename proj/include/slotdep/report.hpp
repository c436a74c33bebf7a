#pragma once

// Aggregates run manifests under a results directory into summary tables
// and the figure-input CSVs.
//
//   <dir>/report/results.csv        every run, one row per (cell, seed)
//   <dir>/report/summary.csv        mean/std over seeds per cell
//   <dir>/report/summary.txt        task-by-row tables, one per grid
//   <dir>/report/fig_bars.csv       grid,task,mechanism,cell,mean,std,n
//   <dir>/report/fig_curves.csv     grid,cell,task,mechanism,seed,epoch,loss,overlap
//
// Manifests are visited in sorted path order, so the output depends only on
// the manifests, not on when they were written.

#include "slotdep/harness.hpp"

#include <map>
#include <set>

namespace slotdep {

inline std::vector<fs::path> find_manifests(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) throw std::runtime_error("report: no such directory " + dir.string());
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "manifest.json") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string mean_pm_std(const Optional& m, const Optional& s) {
  if (!m) return "NA";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << *m << " +- " << (s ? *s : 0.0);
  return os.str();
}

inline std::string summary_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  os << "grid,cell,task,mechanism,form,gamma,tau,w_div,w_ortho,n_runs,n_ok,n_failed,peak_overlap_mean,"
        "peak_overlap_std,max_active_overlap_mean,max_active_overlap_std,exist_acc_mean\n";
  for (const auto& c : cells) {
    os << c.grid << ',' << c.cell << ',' << c.task << ',' << c.mechanism << ',' << c.form << ',' << csv_number(c.gamma)
       << ',' << csv_number(c.tau) << ',' << csv_number(c.w_div) << ',' << csv_number(c.w_ortho) << ',' << c.n_runs
       << ',' << c.n_ok << ',' << c.n_failed << ',' << csv_optional(c.peak_mean) << ',' << csv_optional(c.peak_std)
       << ',' << csv_optional(c.max_active_mean) << ',' << csv_optional(c.max_active_std) << ','
       << csv_optional(c.exist_acc_mean) << '\n';
  }
  return os.str();
}

/// Row label: the cell name without its task prefix.
inline std::string row_label(const CellSummary& c) {
  const auto us = c.cell.find('_');
  return us == std::string::npos ? c.cell : c.cell.substr(us + 1);
}

inline std::string summary_tables(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  std::vector<std::string> grids;
  for (const auto& c : cells) {
    if (std::find(grids.begin(), grids.end(), c.grid) == grids.end()) grids.push_back(c.grid);
  }
  for (const auto& g : grids) {
    std::vector<std::string> tasks, rows;
    std::map<std::pair<std::string, std::string>, const CellSummary*> at;
    for (const auto& c : cells) {
      if (c.grid != g) continue;
      if (std::find(tasks.begin(), tasks.end(), c.task) == tasks.end()) tasks.push_back(c.task);
      const std::string r = row_label(c);
      if (std::find(rows.begin(), rows.end(), r) == rows.end()) rows.push_back(r);
      at[{r, c.task}] = &c;
    }
    std::size_t width = 10;
    for (const auto& r : rows) width = std::max(width, r.size() + 2);
    os << "== " << g << ": peak overlap rate (mean +- std over seeds; failed runs listed as NA)\n";
    os << std::left << std::setw(static_cast<int>(width)) << "variant";
    for (const auto& t : tasks) os << std::setw(18) << ("task " + t);
    os << "\n";
    for (const auto& r : rows) {
      os << std::setw(static_cast<int>(width)) << r;
      for (const auto& t : tasks) {
        auto it = at.find({r, t});
        std::string cell = "-";
        if (it != at.end()) {
          cell = mean_pm_std(it->second->peak_mean, it->second->peak_std);
          if (it->second->n_failed > 0) cell += " (" + std::to_string(it->second->n_failed) + " NA)";
        }
        os << std::setw(18) << cell;
      }
      os << "\n";
    }
    os << "\n";
  }
  return os.str();
}

inline std::string bars_csv(const std::vector<CellSummary>& cells) {
  std::ostringstream os;
  os << "grid,task,mechanism,cell,mean,std,n\n";
  for (const auto& c : cells) {
    os << c.grid << ',' << c.task << ',' << c.mechanism << ',' << c.cell << ',' << csv_optional(c.peak_mean) << ','
       << csv_optional(c.peak_std) << ',' << c.n_ok << '\n';
  }
  return os.str();
}

inline std::string curves_csv(const std::vector<RunManifest>& runs) {
  std::ostringstream os;
  os << "grid,cell,task,mechanism,seed,epoch,loss,overlap\n";
  for (const auto& m : runs) {
    for (const auto& e : m.epochs) {
      os << m.grid << ',' << m.cell << ',' << m.metrics.task << ',' << m.metrics.mechanism << ',' << m.seed << ','
         << e.epoch << ',' << (std::isfinite(e.loss) ? csv_number(e.loss) : "NA") << ','
         << csv_optional(e.monitor_overlap) << '\n';
    }
  }
  return os.str();
}

struct ReportResult {
  std::vector<RunManifest> runs;
  std::vector<CellSummary> cells;
  fs::path out;
};

inline ReportResult report(const fs::path& dir) {
  ReportResult r;
  for (const auto& p : find_manifests(dir)) r.runs.push_back(load_manifest(p));
  std::vector<MetricsRow> rows;
  for (const auto& m : r.runs) rows.push_back(m.metrics);
  r.cells = summarize(rows);
  r.out = dir / "report";
  std::string results = join(metrics_columns(), ",") + "\n";
  for (const auto& row : rows) results += metrics_csv_line(row) + "\n";
  write_text(r.out / "results.csv", results);
  write_text(r.out / "summary.csv", summary_csv(r.cells));
  write_text(r.out / "summary.txt", summary_tables(r.cells));
  write_text(r.out / "fig_bars.csv", bars_csv(r.cells));
  write_text(r.out / "fig_curves.csv", curves_csv(r.runs));
  return r;
}

// -------------------------------------------------------------- dataset dump

/// <stem>.csv: sample_id,K,family,dominant_index, then for each source slot
/// k < k_max the normalized targets s<k>_theta_<name> and the raw parameters
/// s<k>_{amplitude,frequency,center,width,phase}; empty past K.
/// <stem>_signals.csv and <stem>_noise.csv: sample_id,x0..x<N-1>.
inline void write_dataset(const std::vector<Mixture>& data, Family family, const fs::path& stem,
                          int k_max = SynthRanges{}.k_max) {
  const auto names = theta_names(family);
  std::ostringstream meta, sig, noise;
  meta << "sample_id,K,family,dominant_index";
  for (int k = 0; k < k_max; ++k) {
    for (const auto& n : names) meta << ",s" << k << "_theta_" << n;
    for (const char* n : {"amplitude", "frequency", "center", "width", "phase"}) meta << ",s" << k << '_' << n;
  }
  meta << '\n';
  const Index N = data.empty() ? 0 : data.front().signal.size();
  sig << "sample_id";
  noise << "sample_id";
  for (Index t = 0; t < N; ++t) {
    sig << ",x" << t;
    noise << ",x" << t;
  }
  sig << '\n';
  noise << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Mixture& m = data[i];
    meta << i << ',' << m.k() << ',' << family_name(family) << ',' << m.dominant_index;
    for (int k = 0; k < k_max; ++k) {
      if (k < m.k()) {
        const SourceParams& p = m.sources[static_cast<std::size_t>(k)];
        for (double v : p.theta) meta << ',' << csv_number(v);
        for (double v : {p.amplitude, p.frequency, p.center, p.width, p.phase}) meta << ',' << csv_number(v);
      } else {
        for (std::size_t j = 0; j < names.size() + 5; ++j) meta << ',';
      }
    }
    meta << '\n';
    sig << i;
    noise << i;
    for (Index t = 0; t < N; ++t) {
      sig << ',' << csv_number(m.signal(t));
      noise << ',' << csv_number(m.noise(t));
    }
    sig << '\n';
    noise << '\n';
  }
  write_text(stem.string() + ".csv", meta.str());
  write_text(stem.string() + "_signals.csv", sig.str());
  write_text(stem.string() + "_noise.csv", noise.str());
}

}  // namespace slotdep
