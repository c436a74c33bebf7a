// Acceptance gate. Prints one PASS/FAIL line per criterion A1..A10 and exits
// nonzero if any line is FAIL.
//
// The trend criteria (A1-A4) train the desk profile: 2000 samples, 100
// epochs, seeds 0-2. Runs land under <out>/acceptance/ and are reused on the
// next invocation when the config hash and code version still match; pass
// --fresh to retrain everything.

#include "oracles.hpp"

#include "slotdep/dominance.hpp"
#include "slotdep/harness.hpp"
#include "slotdep/report.hpp"

#include "CLI11.hpp"

#include <bit>
#include <iostream>
#include <sstream>

using namespace slotdep;

namespace {

// A1 bands
constexpr double kLinearMax = 0.15;
constexpr double kVanillaMin = 0.10, kVanillaMax = 0.50;
constexpr double kSequentialMin = 0.60;
// A3
constexpr double kTemperatureFactor = 3.0;
// A4
constexpr double kRegularizedSequentialMin = 0.20;
// A5
constexpr int kProp1Passes = 1000;
constexpr double kLogBoundTolerance = 1e-15;  // rounding in the running product
// A6
constexpr int kGradInstances = 20;
constexpr double kGradStep = 1e-5;
constexpr double kGradMaxRelError = 1e-4;
// A7
constexpr int kHungarianMatrices = 1000;
// A8
constexpr int kPlantedBatches = 100;
constexpr double kOverlapTolerance = 1e-12;
constexpr int kCrpsCases = 20;
constexpr std::size_t kCrpsDraws = 4000000;
constexpr double kCrpsTolerance = 1e-3;
// A9
constexpr double kDominanceRatios[] = {20.0, 50.0, 100.0};
constexpr int kDominanceTrials = 100;
constexpr double kDominantCosineMin = 0.95;

struct Line {
  std::string id;
  bool pass = false;
  std::string detail;
};

std::string num(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

std::string opt(const Optional& v) { return v ? num(*v) : "NA"; }

const std::vector<Family> kTasks{Family::Sinusoid, Family::GaussianBump, Family::MultiScale};

ExperimentConfig desk_base(const std::string& out) {
  ExperimentConfig c = desk_profile();
  c.out_dir = out;
  c.grid = "acceptance";
  return c;
}

ExperimentConfig variant(ExperimentConfig c, Family task, const std::string& v) {
  c.task = task;
  apply_variant(c, v);
  return c;
}

ExperimentConfig regularized_sequential(const ExperimentConfig& base, Family task) {
  ExperimentConfig c = variant(base, task, "sequential");
  c.weights.div = 5.0;
  c.weights.ortho = 3.0;
  return c;
}

ExperimentConfig quadratic_at(const ExperimentConfig& base, double gamma, double tau) {
  return sensitivity_cells(variant(base, Family::Sinusoid, "vanilla"), {gamma}, {tau}).front();
}

// Mean peak overlap of a cell; absent if any seed failed.
Optional cell_mean(const std::vector<CellSummary>& s, const ExperimentConfig& c) {
  const CellSummary* cell = find_cell(s, cell_name(c));
  if (cell == nullptr || cell->n_failed > 0) return std::nullopt;
  return cell->peak_mean;
}

bool same_bits(const Optional& a, const Optional& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::bit_cast<std::uint64_t>(*a) == std::bit_cast<std::uint64_t>(*b);
}

bool same_run(const RunManifest& a, const RunManifest& b) {
  const MetricsRow &x = a.metrics, &y = b.metrics;
  bool same = a.status == b.status && x.n_multi_source == y.n_multi_source && a.epochs.size() == b.epochs.size();
  for (auto f : {&MetricsRow::peak_overlap, &MetricsRow::max_active_overlap, &MetricsRow::crps_freq,
                 &MetricsRow::crps_center, &MetricsRow::crps_amp, &MetricsRow::exist_acc, &MetricsRow::completeness}) {
    same = same && same_bits(x.*f, y.*f);
  }
  for (std::size_t e = 0; same && e < a.epochs.size(); ++e) {
    same = std::bit_cast<std::uint64_t>(a.epochs[e].loss) == std::bit_cast<std::uint64_t>(b.epochs[e].loss) &&
           same_bits(a.epochs[e].monitor_overlap, b.epochs[e].monitor_overlap);
  }
  return same;
}

// ------------------------------------------------------------ criteria

std::vector<Line> trend_criteria(const std::vector<CellSummary>& s, const ExperimentConfig& base) {
  std::vector<Line> out;

  Line a1{"A1", false, ""}, a2{"A2", false, ""}, a4{"A4", false, ""};
  a1.pass = a2.pass = a4.pass = true;
  for (Family t : kTasks) {
    const std::string task(1, task_letter(t));
    const Optional lin = cell_mean(s, variant(base, t, "evidence-linear"));
    const Optional van = cell_mean(s, variant(base, t, "vanilla"));
    const Optional seq = cell_mean(s, variant(base, t, "sequential"));
    const bool ok = lin && van && seq && *lin <= kLinearMax && *van >= kVanillaMin && *van <= kVanillaMax &&
                    *seq >= kSequentialMin && *lin < *van && *van < *seq;
    a1.pass = a1.pass && ok;
    a1.detail += task + ": linear " + opt(lin) + " vanilla " + opt(van) + " sequential " + opt(seq) + "; ";

    const Optional bin = cell_mean(s, variant(base, t, "evidence-binary"));
    a2.pass = a2.pass && bin && lin && *bin > *lin;
    a2.detail += task + ": binary " + opt(bin) + " linear " + opt(lin) + "; ";

    const Optional reg = cell_mean(s, regularized_sequential(base, t));
    a4.pass = a4.pass && reg && lin && *reg >= kRegularizedSequentialMin && *lin < *reg;
    a4.detail += task + ": sequential+div5+ortho3 " + opt(reg) + " linear " + opt(lin) + "; ";
  }
  out.push_back(a1);
  out.push_back(a2);

  Line a3{"A3", false, ""};
  const Optional cold = cell_mean(s, quadratic_at(base, 1.0, 0.3));
  const Optional hot = cell_mean(s, quadratic_at(base, 1.0, 1.0));
  a3.pass = cold && hot && kTemperatureFactor * *cold <= *hot;
  a3.detail = "A quadratic gamma 1: tau 0.3 " + opt(cold) + " tau 1.0 " + opt(hot) + " (need hot >= " +
              num(kTemperatureFactor) + "x cold)";
  out.push_back(a3);
  out.push_back(a4);
  return out;
}

Line proposition1() {
  const oracle::Prop1Report r = oracle::proposition1_suite(kProp1Passes, 21, kLogBoundTolerance);
  Line l{"A5", false, ""};
  l.pass = r.i_checked > 0 && r.ii_checked > 0 && r.iii_checked > 0 && r.i_violations == 0 &&
           r.ii_violations == 0 && r.iii_violations == 0;
  l.detail = std::to_string(r.passes) + " passes; monotone " + std::to_string(r.i_violations) + "/" +
             std::to_string(r.i_checked) + " violations; log bound " + std::to_string(r.ii_violations) + "/" +
             std::to_string(r.ii_checked) + " (worst slack " + num(r.ii_worst_slack, 3) + ", tol " +
             num(kLogBoundTolerance) + "); argmax decrease " + std::to_string(r.iii_violations) + "/" +
             std::to_string(r.iii_checked);
  return l;
}

Line gradients() {
  double worst = 0.0;
  std::uint64_t worst_seed = 0;
  std::string where;
  for (int i = 0; i < kGradInstances; ++i) {
    const std::uint64_t seed = 100 + static_cast<std::uint64_t>(i);
    const GradCheckResult g = oracle::evidence_gradient_instance(seed, kGradStep);
    if (!(g.max_rel_error <= worst)) {
      worst = g.max_rel_error;
      worst_seed = seed;
      where = g.worst_parameter;
    }
  }
  Line l{"A6", false, ""};
  l.pass = worst < kGradMaxRelError;
  l.detail = std::to_string(kGradInstances) + " instances, max relative error " + num(worst, 3) + " (seed " +
             std::to_string(worst_seed) + ", " + where + "), limit " + num(kGradMaxRelError);
  return l;
}

Line hungarian_oracle() {
  const oracle::HungarianAgreement r = oracle::hungarian_vs_enumeration(kHungarianMatrices, 3);
  Line l{"A7", false, ""};
  l.pass = r.matrices == kHungarianMatrices && r.cost_mismatch == 0 && r.assignment_mismatch == 0;
  l.detail = std::to_string(r.matrices) + " matrices up to 6x6: " + std::to_string(r.cost_mismatch) +
             " cost mismatches, " + std::to_string(r.assignment_mismatch) + " assignment mismatches";
  return l;
}

Line metrics_oracle() {
  std::mt19937_64 rng(1);
  int peak_bad = 0, overlap_bad = 0;
  double worst_overlap = 0.0;
  for (int i = 0; i < kPlantedBatches; ++i) {
    const AttentionBatch b = oracle::planted_batch(rng, 12);
    const auto p = peak_overlap_rate(b), q = oracle::enumerated_peak_overlap(b);
    if (p.has_value() != q.has_value() || (p && *p != *q)) ++peak_bad;
    const auto m = max_active_overlap(b), n = oracle::enumerated_max_active_overlap(b);
    if (m.has_value() != n.has_value()) {
      ++overlap_bad;
    } else if (m) {
      worst_overlap = std::max(worst_overlap, std::abs(*m - *n));
      if (std::abs(*m - *n) > kOverlapTolerance) ++overlap_bad;
    }
  }
  std::mt19937_64 crng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_crps = 0.0;
  for (int i = 0; i < kCrpsCases; ++i) {
    const double mu = u(crng), sigma = 0.05 + 0.5 * u(crng), y = u(crng);
    const double mc = oracle::crps_monte_carlo(mu, sigma, y, kCrpsDraws, 1000 + static_cast<std::uint64_t>(i));
    worst_crps = std::max(worst_crps, std::abs(crps_gaussian(mu, sigma, y) - mc));
  }
  Line l{"A8", false, ""};
  l.pass = peak_bad == 0 && overlap_bad == 0 && worst_crps < kCrpsTolerance;
  l.detail = std::to_string(kPlantedBatches) + " planted batches: peak mismatches " + std::to_string(peak_bad) +
             ", max-overlap mismatches " + std::to_string(overlap_bad) + " (worst " + num(worst_overlap, 3) +
             "); CRPS vs Monte Carlo worst " + num(worst_crps, 3) + " over " + std::to_string(kCrpsCases) +
             " cases";
  return l;
}

// "Strictly reduced after depletion" is tested on the mean over draws. Per
// draw it fails now and then at large ratios: with the cosine already within
// 1e-4 of 1, floor-clamping one token moves softmax mass onto other tokens
// where the dominant component is also strong, and the cosine can rise by
// ~1e-6. The per-draw count is printed.
Line dominance() {
  const std::vector<double> ratios(std::begin(kDominanceRatios), std::end(kDominanceRatios));
  const auto rows = gradient_dominance_check(ratios, kDominanceTrials, 0);
  Line l{"A9", false, ""};
  l.pass = true;
  for (const auto& r : rows) {
    const bool ok = r.min_dominant >= kDominantCosineMin && r.mean_dominant_after < r.mean_dominant;
    l.pass = l.pass && ok;
    l.detail += "ratio " + num(r.ratio) + ": min cos " + num(r.min_dominant) + " mean " + num(r.mean_dominant) +
                " -> " + num(r.mean_dominant_after) + " after depletion, reduced in " + std::to_string(r.reduced) +
                "/" + std::to_string(r.trials) + "; ";
  }
  return l;
}

Line determinism(const ExperimentConfig& base, const RunManifest* stored) {
  ExperimentConfig small = base;
  small.train_size = 200;
  small.val_size = 100;
  small.monitor_size = 50;
  small.epochs = 3;
  small.seeds = {5};
  const RunOptions quiet{false, false, nullptr};
  int checked = 0, differ = 0;
  for (const auto& v : table1_variants()) {
    const ExperimentConfig c = variant(small, Family::GaussianBump, v);
    ++checked;
    if (!same_run(run_training(c, 5, quiet), run_training(c, 5, quiet))) ++differ;
  }
  Line l{"A10", false, ""};
  l.detail = std::to_string(checked) + " small configs run twice: " + std::to_string(differ) + " differ";
  if (stored != nullptr) {
    // One full desk run recomputed against its manifest on disk.
    ExperimentConfig c = parse_config(stored->config_text);
    ++checked;
    const bool same = same_run(run_training(c, stored->seed, quiet), *stored);
    differ += same ? 0 : 1;
    l.detail += "; desk run " + stored->cell + " seed " + std::to_string(stored->seed) + " recomputed: " +
                (same ? "identical" : "differs");
  }
  l.pass = differ == 0;
  return l;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance gate"};
  std::string out = "acceptance_runs";
  bool fresh = false, skip_training = false;
  int jobs = 1;
  app.add_option("--out", out, "run directory root");
  app.add_flag("--fresh", fresh, "retrain instead of reusing matching runs");
  app.add_option("--jobs", jobs, "concurrent training runs")->check(CLI::PositiveNumber);
  app.add_flag("--skip-training", skip_training, "report A1-A4 as FAIL without training");
  CLI11_PARSE(app, argc, argv);

  const ExperimentConfig base = desk_base(out);
  std::vector<ExperimentConfig> cells;
  for (Family t : kTasks) {
    for (const char* v : {"vanilla", "sequential", "evidence-linear", "evidence-binary"}) {
      cells.push_back(variant(base, t, v));
    }
    cells.push_back(regularized_sequential(base, t));
  }
  cells.push_back(quadratic_at(base, 1.0, 0.3));
  cells.push_back(quadratic_at(base, 1.0, 1.0));

  std::vector<Line> lines;
  const RunManifest* stored = nullptr;
  GridResult grid;
  if (!skip_training) {
    std::cerr << "training " << cells.size() << " cells x " << base.seeds.size() << " seeds under " << out << "\n";
    try {
      grid = run_grid(cells, jobs, {true, !fresh, &std::cerr});
    } catch (const std::exception& e) {
      std::cerr << "grid aborted: " << e.what() << "\n";
    }
    const auto summary = summarize(rows_of(grid));
    lines = trend_criteria(summary, base);
    for (const auto& m : grid.runs) {
      if (m.ok() && m.cell == cell_name(variant(base, Family::Sinusoid, "evidence-linear"))) {
        stored = &m;
        break;
      }
    }
    if (!grid.runs.empty()) report(fs::path(out) / base.grid);
  } else {
    for (const char* id : {"A1", "A2", "A3", "A4"}) lines.push_back({id, false, "not run (--skip-training)"});
  }

  lines.push_back(proposition1());
  lines.push_back(gradients());
  lines.push_back(hungarian_oracle());
  lines.push_back(metrics_oracle());
  lines.push_back(dominance());
  lines.push_back(determinism(base, stored));

  int failed = 0;
  for (const auto& l : lines) {
    std::cout << l.id << " " << (l.pass ? "PASS" : "FAIL") << "  " << l.detail << "\n";
    failed += l.pass ? 0 : 1;
  }
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria fail") << "\n";
  return failed == 0 ? 0 : 1;
}
