// slotdep: data generation, training grids, dominance check and reporting.
//
//   slotdep gen-data --task A --size 1000 --seed 0 --out data/A_val
//   slotdep train --profile desk --set slots.mechanism=evidence
//   slotdep ablate --tasks A,B,C [--forms]
//   slotdep sweep --gammas 1,3,10 --taus 0.1,0.3,1
//   slotdep loss-baselines --tasks A,B,C
//   slotdep grad-dominance --ratios 1,2,5,20,100 --trials 100
//   slotdep report --dir out
//
// Exit status is 0 only when every requested run completed.

#include "slotdep/config.hpp"
#include "slotdep/dominance.hpp"
#include "slotdep/harness.hpp"
#include "slotdep/report.hpp"

#include "CLI11.hpp"

#include <iostream>
#include <sstream>

using namespace slotdep;

namespace {

struct Common {
  std::string profile = "paper";
  std::string config_file;
  std::vector<std::string> sets;
  std::string seeds;
  std::string out;
  int jobs = 1;
  bool reuse = false;
  bool quiet = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--profile", c.profile, "paper or desk")->check(CLI::IsMember({"paper", "desk"}));
  app->add_option("--config", c.config_file, "config file applied over the profile");
  app->add_option("--set", c.sets, "section.key=value override (repeatable)");
  app->add_option("--seeds", c.seeds, "comma-separated seeds, overrides the profile");
  app->add_option("--out", c.out, "output root directory");
  app->add_option("--jobs", c.jobs, "concurrent runs")->check(CLI::PositiveNumber);
  app->add_flag("--reuse", c.reuse, "skip runs whose manifest already matches");
  app->add_flag("--quiet", c.quiet, "no progress log");
}

ExperimentConfig build_config(const Common& c, const std::string& grid) {
  ExperimentConfig cfg = profile(c.profile);
  cfg.grid = grid;
  if (!c.config_file.empty()) cfg = parse_config(read_text(c.config_file), cfg);
  if (!c.seeds.empty()) apply_override(cfg, "run.seeds", c.seeds);
  if (!c.out.empty()) cfg.out_dir = c.out;
  for (const auto& s : c.sets) apply_assignment(cfg, s);
  cfg.validate();
  return cfg;
}

std::vector<Family> parse_tasks(const std::string& s) {
  std::vector<Family> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(family_from_task(item));
  return out;
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

std::vector<std::string> parse_words(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

int finish(const GridResult& g, const ExperimentConfig& base, bool quiet) {
  const fs::path grid_dir = fs::path(base.out_dir) / base.grid;
  std::vector<MetricsRow> rows = rows_of(g);
  std::string csv = join(metrics_columns(), ",") + "\n";
  for (const auto& r : rows) csv += metrics_csv_line(r) + "\n";
  write_text(grid_dir / "results.csv", csv);
  auto cells = summarize(rows);
  write_text(grid_dir / "summary.csv", summary_csv(cells));
  const std::string tables = summary_tables(cells);
  write_text(grid_dir / "summary.txt", tables);
  if (!quiet) std::cout << tables;
  const int failed = g.failed();
  if (failed > 0) {
    std::cerr << failed << " of " << g.runs.size() << " runs FAILED:\n";
    for (const auto& m : g.runs) {
      if (!m.ok()) std::cerr << "  " << m.cell << " seed " << m.seed << ": " << m.failure << "\n";
    }
    return 2;
  }
  return 0;
}

RunOptions run_options(const Common& c) {
  RunOptions o;
  o.reuse = c.reuse;
  o.log = c.quiet ? nullptr : &std::cerr;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"slot attention with evidence depletion: benchmark harness"};
  app.require_subcommand(1);

  // gen-data
  std::string gd_task = "A", gd_out = "data/A";
  std::size_t gd_size = 1000;
  std::uint64_t gd_seed = 0;
  double gd_noise = 0.1;
  auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset as CSV");
  gen->add_option("--task", gd_task, "A (sinusoids), B (bumps) or C (multi-scale)");
  gen->add_option("--size", gd_size, "number of mixtures");
  gen->add_option("--seed", gd_seed, "dataset seed");
  gen->add_option("--noise", gd_noise, "noise standard deviation");
  gen->add_option("--out", gd_out, "output path stem");

  Common train_c, ablate_c, sweep_c, loss_c;
  auto* train = app.add_subcommand("train", "train one configuration over its seeds");
  add_common(train, train_c);
  std::string dump_config;
  train->add_option("--dump-config", dump_config, "write the resolved config to this file and exit");

  auto* ablate = app.add_subcommand("ablate", "mechanism ablation grid (tasks x variants x seeds)");
  add_common(ablate, ablate_c);
  std::string ab_tasks = "A,B,C", ab_variants;
  bool ab_forms = false;
  ablate->add_option("--tasks", ab_tasks, "comma-separated tasks");
  ablate->add_option("--variants", ab_variants,
                     "comma-separated variants (vanilla, sequential, evidence-<form>, dataspace, dataspace-bias)");
  ablate->add_flag("--forms", ab_forms, "use the four depletion forms as variants");

  auto* sweep = app.add_subcommand("sweep", "gamma x tau sensitivity grid, quadratic form");
  add_common(sweep, sweep_c);
  std::string sw_gammas = "1,3,10", sw_taus = "0.1,0.3,1", sw_task = "A";
  sweep->add_option("--gammas", sw_gammas);
  sweep->add_option("--taus", sw_taus);
  sweep->add_option("--task", sw_task);

  auto* loss = app.add_subcommand("loss-baselines", "auxiliary-loss baselines plus the evidence-linear reference");
  add_common(loss, loss_c);
  std::string lb_tasks = "A,B,C";
  double lb_div = 5.0, lb_ortho = 3.0;
  loss->add_option("--tasks", lb_tasks);
  loss->add_option("--w-div", lb_div);
  loss->add_option("--w-ortho", lb_ortho);

  auto* dom = app.add_subcommand("grad-dominance", "own-logit gradient direction vs. component amplitude ratio");
  std::string dm_ratios = "1,2,5,20,100", dm_out;
  int dm_trials = 100;
  std::uint64_t dm_seed = 0;
  dom->add_option("--ratios", dm_ratios);
  dom->add_option("--trials", dm_trials)->check(CLI::PositiveNumber);
  dom->add_option("--seed", dm_seed);
  dom->add_option("--out", dm_out, "optional CSV path");

  auto* rep = app.add_subcommand("report", "aggregate manifests into tables and figure CSVs");
  std::string rp_dir = "out";
  rep->add_option("--dir", rp_dir, "results root");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      DatasetSpec spec;
      spec.family = family_from_task(gd_task);
      spec.size = gd_size;
      spec.seed = gd_seed;
      spec.noise_sigma = gd_noise;
      write_dataset(generate_dataset(spec), spec.family, gd_out);
      std::cout << "wrote " << gd_out << ".csv, " << gd_out << "_signals.csv, " << gd_out << "_noise.csv\n";
      return 0;
    }
    if (*train) {
      ExperimentConfig cfg = build_config(train_c, "train");
      if (!dump_config.empty()) {
        write_text(dump_config, to_config_text(cfg));
        return 0;
      }
      GridResult g = run_grid({cfg}, train_c.jobs, run_options(train_c));
      return finish(g, cfg, train_c.quiet);
    }
    if (*ablate) {
      ExperimentConfig base = build_config(ablate_c, ab_forms ? "forms" : "ablate");
      std::vector<std::string> variants = ab_forms ? form_variants() : table1_variants();
      if (!ab_variants.empty()) variants = parse_words(ab_variants);
      GridResult g = run_grid(ablation_cells(base, parse_tasks(ab_tasks), variants), ablate_c.jobs,
                              run_options(ablate_c));
      return finish(g, base, ablate_c.quiet);
    }
    if (*sweep) {
      Common c = sweep_c;
      if (c.seeds.empty()) c.seeds = "0,1,2";
      ExperimentConfig base = build_config(c, "sweep");
      base.task = family_from_task(sw_task);
      GridResult g = run_grid(sensitivity_cells(base, parse_list(sw_gammas), parse_list(sw_taus)), c.jobs,
                              run_options(c));
      return finish(g, base, c.quiet);
    }
    if (*loss) {
      ExperimentConfig base = build_config(loss_c, "loss-baselines");
      GridResult g =
          run_grid(loss_baseline_cells(base, parse_tasks(lb_tasks), lb_div, lb_ortho), loss_c.jobs, run_options(loss_c));
      return finish(g, base, loss_c.quiet);
    }
    if (*dom) {
      auto rows = gradient_dominance_check(parse_list(dm_ratios), dm_trials, dm_seed);
      std::ostringstream csv;
      csv << "ratio,trials,mean_cos_dominant,min_cos_dominant,mean_cos_secondary,mean_cos_dominant_depleted,"
             "reduced\n";
      std::cout << "ratio   cos(dominant)  min      cos(secondary)  after depletion  reduced\n";
      for (const auto& r : rows) {
        csv << csv_number(r.ratio) << ',' << r.trials << ',' << csv_number(r.mean_dominant) << ','
            << csv_number(r.min_dominant) << ',' << csv_number(r.mean_secondary) << ','
            << csv_number(r.mean_dominant_after) << ',' << r.reduced << '\n';
        std::cout << std::left << std::setw(8) << r.ratio << std::fixed << std::setprecision(4) << std::setw(15)
                  << r.mean_dominant << std::setw(9) << r.min_dominant << std::setw(16) << r.mean_secondary
                  << std::setw(17) << r.mean_dominant_after << r.reduced << "/" << r.trials << "\n"
                  << std::defaultfloat;
      }
      if (!dm_out.empty()) write_text(dm_out, csv.str());
      return 0;
    }
    if (*rep) {
      ReportResult r = report(rp_dir);
      std::cout << summary_tables(r.cells);
      std::cout << "wrote " << (r.out / "summary.csv").string() << " and figure CSVs for " << r.runs.size()
                << " runs\n";
      int failed = 0;
      for (const auto& m : r.runs) failed += m.ok() ? 0 : 1;
      return failed > 0 ? 2 : 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
