#pragma once

// Experiment configuration: a flat key = value text format with [sections].
// One field table drives parsing, serialization and CLI overrides so the
// three can never disagree.
//
//   [run]     task, seeds
//   [data]    train_size, val_size, monitor_size, noise_sigma, samples
//   [model]   tokens, dim, tokenizer, positional, head_hidden
//   [slots]   slots, iterations, mlp_hidden, mechanism, dataspace_bias,
//             form, gamma, tau, epsilon, ordering
//   [loss]    w_flow, w_exist, w_div, w_ortho, w_ent, w_prior
//   [train]   epochs, batch_size, lr, beta1, beta2, adam_eps, grad_clip
//   [output]  out_dir, grid, dump_samples
//
// Lines starting with '#' or ';' are comments. Unknown keys are errors.

#include "slotdep/heads.hpp"
#include "slotdep/model.hpp"
#include "slotdep/optim.hpp"
#include "slotdep/signal.hpp"
#include "slotdep/slot_attention.hpp"
#include "slotdep/tokenizer.hpp"

#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace slotdep {

struct ExperimentConfig {
  Family task = Family::Sinusoid;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  std::size_t train_size = 5000;
  std::size_t val_size = 1000;
  std::size_t monitor_size = 200;  // validation prefix scored every epoch
  double noise_sigma = 0.1;

  TokenizerConfig tokenizer{};
  SlotConfig slots{};
  Index head_hidden = 64;

  LossWeights weights{};

  int epochs = 200;
  int batch_size = 64;
  AdamSettings adam{};
  double grad_clip = 1.0;  // global-norm clip; <= 0 disables

  std::string out_dir = "out";
  std::string grid = "single";
  std::size_t dump_samples = 32;  // validation samples written to attention.csv

  ModelConfig model() const {
    ModelConfig m;
    m.tokenizer = tokenizer;
    m.slots = slots;
    m.head_hidden = head_hidden;
    m.theta_dim = theta_dim(task);
    return m;
  }

  void validate() const {
    slots.validate();
    weights.validate();
    if (tokenizer.dim != slots.dim) throw std::invalid_argument("config: model.dim must equal slots dim");
    if (tokenizer.tokens <= 0 || tokenizer.samples % tokenizer.tokens != 0) {
      throw std::invalid_argument("config: data.samples must be divisible by model.tokens");
    }
    if (train_size == 0 || val_size == 0) throw std::invalid_argument("config: dataset sizes must be positive");
    if (monitor_size > val_size) throw std::invalid_argument("config: monitor_size exceeds val_size");
    if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("config: lr must be > 0");
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("config: noise_sigma must be >= 0");
    if (seeds.empty()) throw std::invalid_argument("config: seeds must be nonempty");
    if (slots.slots < SynthRanges{}.k_max) {
      throw std::invalid_argument("config: need at least " + std::to_string(SynthRanges{}.k_max) + " slots");
    }
  }
};

inline ExperimentConfig paper_profile() { return ExperimentConfig{}; }

/// CI-speed profile: 2000 training samples, 100 epochs, 3 seeds.
inline ExperimentConfig desk_profile() {
  ExperimentConfig c;
  c.train_size = 2000;
  c.epochs = 100;
  c.seeds = {0, 1, 2};
  return c;
}

inline ExperimentConfig profile(std::string_view name) {
  if (name == "paper") return paper_profile();
  if (name == "desk") return desk_profile();
  throw std::invalid_argument("unknown profile '" + std::string(name) + "' (expected paper or desk)");
}

namespace detail {

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline double parse_double(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw std::invalid_argument("config: '" + key + "' expects a number, got '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s, const std::string& key) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got '" + s + "'");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct Field {
  std::string section;
  std::string key;
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;

  std::string path() const { return section + "." + key; }
};

template <class T>
Field real_field(std::string section, std::string key, T& ref) {
  const std::string path = section + "." + key;
  return {std::move(section), std::move(key), [&ref] { return format_double(static_cast<double>(ref)); },
          [&ref, path](const std::string& s) { ref = static_cast<T>(parse_double(s, path)); }};
}

template <class T>
Field int_field(std::string section, std::string key, T& ref, long long min_value = 0) {
  const std::string path = section + "." + key;
  return {std::move(section), std::move(key), [&ref] { return std::to_string(ref); },
          [&ref, path, min_value](const std::string& s) {
            const long long v = parse_int(s, path);
            if (v < min_value) throw std::invalid_argument("config: '" + path + "' must be >= " + std::to_string(min_value));
            ref = static_cast<T>(v);
          }};
}

inline Field bool_field(std::string section, std::string key, bool& ref) {
  const std::string path = section + "." + key;
  return {std::move(section), std::move(key), [&ref] { return std::string(ref ? "true" : "false"); },
          [&ref, path](const std::string& s) { ref = parse_bool(s, path); }};
}

inline Field string_field(std::string section, std::string key, std::string& ref) {
  return {std::move(section), std::move(key), [&ref] { return ref; }, [&ref](const std::string& s) { ref = s; }};
}

inline std::vector<Field> fields(ExperimentConfig& c) {
  std::vector<Field> f;
  f.push_back({"run", "task", [&c] { return std::string(1, task_letter(c.task)); },
               [&c](const std::string& s) { c.task = family_from_task(s); }});
  f.push_back({"run", "seeds",
               [&c] {
                 std::string out;
                 for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                 return out;
               },
               [&c](const std::string& s) {
                 c.seeds.clear();
                 std::stringstream ss(s);
                 std::string item;
                 while (std::getline(ss, item, ',')) {
                   const long long v = parse_int(trim(item), "run.seeds");
                   if (v < 0) throw std::invalid_argument("config: seeds must be nonnegative");
                   c.seeds.push_back(static_cast<std::uint64_t>(v));
                 }
               }});
  f.push_back(int_field("data", "train_size", c.train_size, 1));
  f.push_back(int_field("data", "val_size", c.val_size, 1));
  f.push_back(int_field("data", "monitor_size", c.monitor_size));
  f.push_back(real_field("data", "noise_sigma", c.noise_sigma));
  f.push_back(int_field("data", "samples", c.tokenizer.samples, 1));
  f.push_back(int_field("model", "tokens", c.tokenizer.tokens, 1));
  f.push_back({"model", "dim", [&c] { return std::to_string(c.tokenizer.dim); },
               [&c](const std::string& s) {
                 const long long v = parse_int(s, "model.dim");
                 if (v < 1) throw std::invalid_argument("config: model.dim must be >= 1");
                 c.tokenizer.dim = c.slots.dim = static_cast<Index>(v);
               }});
  f.push_back({"model", "tokenizer", [&c] { return std::string(tokenizer_name(c.tokenizer.kind)); },
               [&c](const std::string& s) { c.tokenizer.kind = tokenizer_from_string(s); }});
  f.push_back(bool_field("model", "positional", c.tokenizer.positional));
  f.push_back(int_field("model", "head_hidden", c.head_hidden, 1));
  f.push_back(int_field("slots", "slots", c.slots.slots, 1));
  f.push_back(int_field("slots", "iterations", c.slots.iterations, 1));
  f.push_back(int_field("slots", "mlp_hidden", c.slots.mlp_hidden, 1));
  f.push_back({"slots", "mechanism", [&c] { return std::string(mechanism_name(c.slots.mechanism)); },
               [&c](const std::string& s) { c.slots.mechanism = mechanism_from_string(s); }});
  f.push_back(bool_field("slots", "dataspace_bias", c.slots.dataspace_bias));
  f.push_back({"slots", "form", [&c] { return std::string(form_name(c.slots.form)); },
               [&c](const std::string& s) { c.slots.form = form_from_string(s); }});
  f.push_back(real_field("slots", "gamma", c.slots.gamma));
  f.push_back(real_field("slots", "tau", c.slots.tau));
  f.push_back(real_field("slots", "epsilon", c.slots.epsilon));
  f.push_back({"slots", "ordering",
               [&c] { return std::string(c.slots.ordering == Ordering::Canonical ? "canonical" : "random"); },
               [&c](const std::string& s) {
                 if (s == "canonical") {
                   c.slots.ordering = Ordering::Canonical;
                 } else if (s == "random") {
                   c.slots.ordering = Ordering::RandomPermutation;
                 } else {
                   throw std::invalid_argument("config: slots.ordering must be random or canonical");
                 }
               }});
  f.push_back(real_field("loss", "w_flow", c.weights.flow));
  f.push_back(real_field("loss", "w_exist", c.weights.exist));
  f.push_back(real_field("loss", "w_div", c.weights.div));
  f.push_back(real_field("loss", "w_ortho", c.weights.ortho));
  f.push_back(real_field("loss", "w_ent", c.weights.ent));
  f.push_back(real_field("loss", "w_prior", c.weights.prior));
  f.push_back(int_field("train", "epochs", c.epochs));
  f.push_back(int_field("train", "batch_size", c.batch_size, 1));
  f.push_back(real_field("train", "lr", c.adam.learning_rate));
  f.push_back(real_field("train", "beta1", c.adam.beta1));
  f.push_back(real_field("train", "beta2", c.adam.beta2));
  f.push_back(real_field("train", "adam_eps", c.adam.epsilon));
  f.push_back(real_field("train", "grad_clip", c.grad_clip));
  f.push_back(string_field("output", "out_dir", c.out_dir));
  f.push_back(string_field("output", "grid", c.grid));
  f.push_back(int_field("output", "dump_samples", c.dump_samples));
  return f;
}

}  // namespace detail

/// Sets one field by dotted path ("slots.gamma") or bare key when unique.
inline void apply_override(ExperimentConfig& c, const std::string& path, const std::string& value) {
  auto fs = detail::fields(c);
  const detail::Field* hit = nullptr;
  for (const auto& f : fs) {
    if (f.path() == path || (path.find('.') == std::string::npos && f.key == path)) {
      if (hit != nullptr) throw std::invalid_argument("config: ambiguous key '" + path + "'");
      hit = &f;
    }
  }
  if (hit == nullptr) throw std::invalid_argument("config: unknown key '" + path + "'");
  hit->set(detail::trim(value));
}

/// "section.key=value" form used on the command line.
inline void apply_assignment(ExperimentConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("config: expected key=value, got '" + assignment + "'");
  apply_override(c, detail::trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

/// Serializes every field. With `identity_only`, run.seeds and the [output]
/// section are left out: the result then names the experiment, not where
/// or how often it was run.
inline std::string to_config_text(const ExperimentConfig& cfg, bool identity_only = false) {
  ExperimentConfig c = cfg;
  std::string out, section;
  for (const auto& f : detail::fields(c)) {
    if (identity_only && (f.section == "output" || f.path() == "run.seeds")) continue;
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get() + "\n";
  }
  return out;
}

/// Parses text over `base` (defaults), so partial files are allowed.
inline ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw std::invalid_argument("config line " + std::to_string(lineno) + ": bad section header");
      section = detail::trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": key outside a section");
    try {
      apply_override(base, section + "." + detail::trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

/// FNV-1a 64 over bytes, printed as 16 hex digits.
inline std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_config_text(c, true)); }

/// Mechanism variants as named on the command line and in tables:
///   vanilla, sequential, evidence-{binary,linear,quadratic,cubic},
///   dataspace, dataspace-bias
inline void apply_variant(ExperimentConfig& c, std::string_view variant) {
  if (variant == "vanilla") {
    c.slots.mechanism = Mechanism::Vanilla;
    c.slots.form = DepletionForm::None;
  } else if (variant == "sequential") {
    c.slots.mechanism = Mechanism::Sequential;
    c.slots.form = DepletionForm::None;
  } else if (variant.rfind("evidence-", 0) == 0) {
    c.slots.mechanism = Mechanism::EvidenceDepletion;
    c.slots.form = form_from_string(variant.substr(9));
    if (c.slots.form == DepletionForm::None) throw std::invalid_argument("evidence variant needs a depletion form");
  } else if (variant == "dataspace" || variant == "dataspace-bias") {
    c.slots.mechanism = Mechanism::DataSpace;
    c.slots.form = DepletionForm::Quadratic;
    c.slots.dataspace_bias = variant == "dataspace-bias";
  } else {
    throw std::invalid_argument("unknown variant '" + std::string(variant) + "'");
  }
  if (c.slots.mechanism != Mechanism::DataSpace) c.slots.dataspace_bias = false;
}

inline std::string variant_name(const ExperimentConfig& c) {
  switch (c.slots.mechanism) {
    case Mechanism::Vanilla:
      return "vanilla";
    case Mechanism::Sequential:
      return "sequential";
    case Mechanism::EvidenceDepletion:
      return "evidence-" + std::string(form_name(c.slots.form));
    case Mechanism::DataSpace:
      return c.slots.dataspace_bias ? "dataspace-bias" : "dataspace";
  }
  return "?";
}

inline std::string short_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

/// Directory-safe cell label, e.g. "A_evidence-linear_g3_t0.3" or
/// "B_sequential_div5_ortho3".
inline std::string cell_name(const ExperimentConfig& c) {
  std::string name = std::string(1, task_letter(c.task)) + "_" + variant_name(c);
  const bool uses_bias = c.slots.mechanism == Mechanism::EvidenceDepletion ||
                         (c.slots.mechanism == Mechanism::DataSpace && c.slots.dataspace_bias);
  if (uses_bias) name += "_g" + short_number(c.slots.gamma);
  if (c.slots.mechanism != Mechanism::Vanilla) name += "_t" + short_number(c.slots.tau);
  const std::pair<const char*, double> aux[] = {
      {"div", c.weights.div}, {"ortho", c.weights.ortho}, {"ent", c.weights.ent}, {"prior", c.weights.prior}};
  for (const auto& [tag, w] : aux) {
    if (w > 0.0) name += std::string("_") + tag + short_number(w);
  }
  return name;
}

}  // namespace slotdep
