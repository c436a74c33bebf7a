#pragma once

// Synthetic additive-superposition benchmarks: every mixture is the
// sample-wise sum of K parametric sources plus white Gaussian noise, with one
// source 5-10x stronger than the rest.

#include "slotdep/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotdep {

enum class Family { Sinusoid, GaussianBump, MultiScale };

inline std::string_view family_name(Family f) {
  switch (f) {
    case Family::Sinusoid:
      return "sinusoid";
    case Family::GaussianBump:
      return "bump";
    case Family::MultiScale:
      return "multiscale";
  }
  return "?";
}

/// Task letters A/B/C map onto the three families.
inline Family family_from_task(std::string_view task) {
  if (task == "A" || task == "SyntheticA" || task == "sinusoid") return Family::Sinusoid;
  if (task == "B" || task == "SyntheticB" || task == "bump") return Family::GaussianBump;
  if (task == "C" || task == "SyntheticC" || task == "multiscale") return Family::MultiScale;
  throw std::invalid_argument("unknown task '" + std::string(task) + "' (expected A, B or C)");
}

inline char task_letter(Family f) {
  switch (f) {
    case Family::Sinusoid:
      return 'A';
    case Family::GaussianBump:
      return 'B';
    case Family::MultiScale:
      return 'C';
  }
  return '?';
}

struct SynthRanges {
  double freq_min = 2.0;  // cycles per window
  double freq_max = 30.0;
  double center_min = 0.1;  // fraction of window
  double center_max = 0.9;
  double width_min = 0.02;
  double width_max = 0.15;
  double amp_min = 0.5;  // non-dominant band
  double amp_max = 1.0;
  double ratio_min = 5.0;  // dominant / strongest other
  double ratio_max = 10.0;
  int k_max = 4;

  double amp_ceiling() const { return ratio_max * amp_max; }
};

struct SourceParams {
  Family family = Family::Sinusoid;
  double frequency = 0.0;
  double center = 0.0;
  double width = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  std::vector<double> theta;  // regression target in [0,1]^P
};

/// Regression-target layout per family:
///   sinusoid   (freq, amp)
///   bump       (center, amp)
///   multiscale (freq, center, amp)
inline std::vector<std::string> theta_names(Family f) {
  switch (f) {
    case Family::Sinusoid:
      return {"freq", "amp"};
    case Family::GaussianBump:
      return {"center", "amp"};
    case Family::MultiScale:
      return {"freq", "center", "amp"};
  }
  return {};
}

inline Index theta_dim(Family f) { return static_cast<Index>(theta_names(f).size()); }

inline double unit_clamp(double x) { return std::min(1.0, std::max(0.0, x)); }

/// Amplitudes span more than a decade, so they are normalized on a log scale.
inline std::vector<double> normalized_theta(const SourceParams& p, const SynthRanges& r) {
  const double f = unit_clamp((p.frequency - r.freq_min) / (r.freq_max - r.freq_min));
  const double c = unit_clamp((p.center - r.center_min) / (r.center_max - r.center_min));
  const double a = unit_clamp(std::log(p.amplitude / r.amp_min) / std::log(r.amp_ceiling() / r.amp_min));
  switch (p.family) {
    case Family::Sinusoid:
      return {f, a};
    case Family::GaussianBump:
      return {c, a};
    case Family::MultiScale:
      return {f, c, a};
  }
  return {};
}

struct SourceDraw {
  int k = 0;
  std::vector<SourceParams> sources;
  int dominant_index = 0;
};

/// Draws K ~ U{1..k_max} sources of one family. Non-dominant amplitudes come
/// from [amp_min, amp_max]; the dominant one is r times the strongest other
/// with r ~ U[ratio_min, ratio_max] (for K = 1, r times a base-band draw).
inline SourceDraw sample_sources(Family family, std::mt19937_64& rng, const SynthRanges& r = {}) {
  std::uniform_int_distribution<int> kdist(1, r.k_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  SourceDraw draw;
  draw.k = kdist(rng);
  draw.dominant_index = std::uniform_int_distribution<int>(0, draw.k - 1)(rng);
  draw.sources.resize(static_cast<std::size_t>(draw.k));
  double strongest_other = 0.0;
  for (int i = 0; i < draw.k; ++i) {
    SourceParams& p = draw.sources[static_cast<std::size_t>(i)];
    p.family = family;
    p.frequency = uniform(r.freq_min, r.freq_max);
    p.center = uniform(r.center_min, r.center_max);
    p.width = uniform(r.width_min, r.width_max);
    p.phase = uniform(0.0, 2.0 * std::numbers::pi);
    p.amplitude = uniform(r.amp_min, r.amp_max);
    if (i != draw.dominant_index) strongest_other = std::max(strongest_other, p.amplitude);
  }
  const double ratio = uniform(r.ratio_min, r.ratio_max);
  SourceParams& dom = draw.sources[static_cast<std::size_t>(draw.dominant_index)];
  dom.amplitude = ratio * (draw.k == 1 ? dom.amplitude : strongest_other);
  for (auto& p : draw.sources) p.theta = normalized_theta(p, r);
  return draw;
}

/// Renders one source on t = 0..n-1.
///   sinusoid   a sin(2 pi f t / n + phi)
///   bump       a exp(-(t - c n)^2 / (2 (w n)^2))
///   multiscale product of the two (the bump factor without its own amplitude)
inline Eigen::VectorXd render_source(const SourceParams& p, Index n) {
  Eigen::VectorXd x(n);
  const double nn = static_cast<double>(n);
  for (Index t = 0; t < n; ++t) {
    const double td = static_cast<double>(t);
    const double wave = std::sin(2.0 * std::numbers::pi * p.frequency * td / nn + p.phase);
    const double dt = td - p.center * nn;
    const double sw = p.width * nn;
    const double env = std::exp(-(dt * dt) / (2.0 * sw * sw));
    switch (p.family) {
      case Family::Sinusoid:
        x(t) = p.amplitude * wave;
        break;
      case Family::GaussianBump:
        x(t) = p.amplitude * env;
        break;
      case Family::MultiScale:
        x(t) = p.amplitude * wave * env;
        break;
    }
  }
  return x;
}

struct Mixture {
  Eigen::VectorXd signal;
  Eigen::VectorXd noise;  // the realization added to the rendered sum
  std::vector<SourceParams> sources;
  int dominant_index = 0;
  double noise_sigma = 0.0;

  int k() const { return static_cast<int>(sources.size()); }
};

/// signal = sum_k render(theta_k) + n with n ~ N(0, noise_sigma^2) i.i.d.
inline Mixture assemble_mixture(std::vector<SourceParams> sources, double noise_sigma, std::mt19937_64& rng,
                                Index n = 256) {
  if (sources.empty()) throw std::invalid_argument("assemble_mixture: empty source list");
  Mixture m;
  m.noise_sigma = noise_sigma;
  m.signal = Eigen::VectorXd::Zero(n);
  double best = -1.0;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    m.signal += render_source(sources[i], n);
    if (sources[i].amplitude > best) {
      best = sources[i].amplitude;
      m.dominant_index = static_cast<int>(i);
    }
  }
  m.noise = Eigen::VectorXd::Zero(n);
  if (noise_sigma > 0.0) {
    std::normal_distribution<double> gauss(0.0, noise_sigma);
    for (Index t = 0; t < n; ++t) m.noise(t) = gauss(rng);
  }
  m.signal += m.noise;
  m.sources = std::move(sources);
  return m;
}

struct DatasetSpec {
  Family family = Family::Sinusoid;
  std::size_t size = 0;
  std::uint64_t seed = 0;
  double noise_sigma = 0.1;
  Index samples = 256;
  SynthRanges ranges{};
};

/// Pure function of the spec: the same spec always yields the same bits.
inline std::vector<Mixture> generate_dataset(const DatasetSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<Mixture> out;
  out.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    SourceDraw d = sample_sources(spec.family, rng, spec.ranges);
    Mixture m = assemble_mixture(std::move(d.sources), spec.noise_sigma, rng, spec.samples);
    m.dominant_index = d.dominant_index;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace slotdep
