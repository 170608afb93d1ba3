#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "distill/cart.hpp"
#include "distill/dataset.hpp"
#include "distill/error.hpp"
#include "distill/forest.hpp"
#include "distill/frl.hpp"
#include "distill/parallel.hpp"
#include "distill/sampler.hpp"
#include "distill/sr.hpp"
#include "distill/stability.hpp"
#include "distill/stat_kernel.hpp"
#include "distill/student.hpp"

namespace distill {

/// Candidate budgets per student family.
struct FamilyConfig {
  Family family = Family::dt;
  std::size_t n_candidates = 100;  ///< N: trees per round (DT)
  std::size_t trajectories = 10;   ///< P (FRL)
  std::size_t steps = 1000;        ///< trajectory length (FRL)
  FrlOptions frl;
  GpConfig gp;  ///< SR; max_depth is overridden by C
};

/// Candidate generator for the family with complexity cap C. `seed` feeds
/// the family's own randomness (MCMC, GP); corpus randomness comes from the
/// source.
inline CandidateGenerator make_generator(const FamilyConfig& fam, int complexity, std::uint64_t seed) {
  switch (fam.family) {
    case Family::dt:
      return [fam, complexity](const CorpusSource& src, std::size_t n, std::uint64_t first) {
        return cart_candidates(src, n, fam.n_candidates, complexity, first);
      };
    case Family::frl:
      return [fam, complexity, seed](const CorpusSource& src, std::size_t n, std::uint64_t first) {
        return frl_candidates(src, n, fam.trajectories, fam.steps, static_cast<std::size_t>(complexity), fam.frl,
                              first, seed);
      };
    case Family::sr:
      return [fam, complexity, seed](const CorpusSource& src, std::size_t n, std::uint64_t first) {
        GpConfig gp = fam.gp;
        gp.max_depth = complexity;
        gp.seed = seed;
        return sr_candidates(src, n, gp, first);
      };
    case Family::synthetic: break;
  }
  throw DomainError("make_generator: unsupported family");
}

/// Full distillation run for one repetition: pseudo-data from `real`
/// labelled by `teacher`, candidates from the family, stability loop.
inline StabilityResult run_algorithm1(std::shared_ptr<const Dataset> real, const Forest& teacher,
                                      const FamilyConfig& fam, const StabilityConfig& cfg, const SamplerSpec& sampler,
                                      bool stabilize = true) {
  CorpusStream stream(std::move(real), teacher_labels(teacher), sampler, 0);
  return run_stability(stream, make_generator(fam, cfg.complexity, derive_seed(sampler.seed, {0x5eed})), cfg,
                       stabilize);
}

// ---------------------------------------------------------------------------
// Datasets

inline const std::vector<std::string>& dataset_names() {
  static const std::vector<std::string> names = {"mammographic", "breast-cancer"};
  return names;
}

/// Loads the working representation of a bundled dataset for a family.
/// Mammographic Mass: one-hot preprocessing. Breast Cancer: the 30
/// continuous features, or for FRL the last ten features quantile-binned.
inline Dataset load_working_dataset(const std::string& name, Family family, const std::string& data_dir,
                                    std::size_t frl_bins = 5) {
  namespace fs = std::filesystem;
  auto file = [&](const std::string& f) { return (fs::path(data_dir) / f).string(); };
  if (name == "mammographic") {
    auto cfg = load_schema_json(file("mammographic_masses.schema.json"));
    return preprocess_mammographic(load_csv(file("mammographic_masses.csv"), cfg.label, cfg.schema));
  }
  if (name == "breast-cancer") {
    auto cfg = load_schema_json(file("wdbc.schema.json"));
    Dataset raw = load_csv(file("wdbc.csv"), cfg.label, cfg.schema);
    if (family != Family::frl) return raw;
    std::vector<std::string> last;
    for (std::size_t j = raw.cols() - 10; j < raw.cols(); ++j) last.push_back(raw.schema[j].name);
    return quantile_discretize(select_columns(raw, last), last, frl_bins);
  }
  throw DomainError("unknown dataset '" + name + "' (expected mammographic|breast-cancer)");
}

// ---------------------------------------------------------------------------
// Proportion tables

struct ProportionRow {
  std::string key;
  std::size_t count = 0;
  double proportion = 0.0;
};

struct ProportionTable {
  std::vector<ProportionRow> rows;  ///< descending count, then key
  std::size_t repetitions = 0;
  double entropy_bits = 0.0;

  static ProportionTable from_keys(const std::vector<std::string>& keys) {
    if (keys.empty()) throw DomainError("ProportionTable: no repetitions");
    std::map<std::string, std::size_t> counts;
    for (const auto& k : keys) ++counts[k];
    ProportionTable t;
    t.repetitions = keys.size();
    std::vector<double> props;
    for (const auto& [k, c] : counts) {
      double p = static_cast<double>(c) / static_cast<double>(keys.size());
      t.rows.push_back({k, c, p});
      props.push_back(p);
    }
    std::stable_sort(t.rows.begin(), t.rows.end(),
                     [](const ProportionRow& a, const ProportionRow& b) { return a.count > b.count; });
    t.entropy_bits = entropy(props);
    return t;
  }

  double top_proportion() const { return rows.empty() ? 0.0 : rows.front().proportion; }
};

inline std::string csv_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_double(double v, const char* fmt = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, v);
  return buf;
}

inline void write_proportions_csv(const ProportionTable& t, std::ostream& out) {
  out << "structure_key,count,proportion\n";
  for (const auto& r : t.rows) out << csv_quote(r.key) << ',' << r.count << ',' << format_double(r.proportion) << '\n';
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
  std::string dataset = "mammographic";
  std::string data_dir = ".";
  std::string teacher_path;  ///< cached teacher model; trained and written when missing
  std::size_t repetitions = 20;
  bool stabilize = true;
  std::uint64_t seed = 0;
  std::size_t frl_bins = 5;
  StabilityConfig stability{0.05, 1000, 20000, 0.1, 3};
  FamilyConfig students;
  SamplerSpec sampler;
  ForestOptions teacher;

  ExperimentConfig() { students.gp.population = 2000; }

  /// Full-size budgets.
  void apply_full_scale() {
    repetitions = 100;
    stability.n_max = 100000;
    students.gp.population = 10000;
  }

  void validate() const {
    stability.validate();
    sampler.validate();
    if (repetitions == 0) throw DomainError("repetitions must be positive");
    if (std::find(dataset_names().begin(), dataset_names().end(), dataset) == dataset_names().end()) {
      throw DomainError("unknown dataset '" + dataset + "'");
    }
    if (students.family == Family::synthetic) throw DomainError("experiments need a dt, frl or sr family");
  }
};

inline nlohmann::ordered_json to_json(const ExperimentConfig& c) {
  nlohmann::ordered_json j;
  j["dataset"] = c.dataset;
  j["family"] = to_string(c.students.family);
  j["stabilize"] = c.stabilize;
  j["reps"] = c.repetitions;
  j["seed"] = c.seed;
  j["alpha"] = c.stability.alpha;
  j["n_init"] = c.stability.n_init;
  j["n_max"] = c.stability.n_max;
  j["rate"] = c.stability.rate;
  j["C"] = c.stability.complexity;
  j["N"] = c.students.n_candidates;
  j["P"] = c.students.trajectories;
  j["steps"] = c.students.steps;
  j["min_support"] = c.students.frl.min_support;
  j["population"] = c.students.gp.population;
  j["generations"] = c.students.gp.generations;
  j["sampler"] = to_string(c.sampler.strategy);
  j["bandwidth"] = c.sampler.bandwidth;
  j["flip_prob"] = c.sampler.flip_prob;
  j["group_prob"] = c.sampler.group_switch_prob;
  j["bins"] = c.frl_bins;
  j["teacher_trees"] = c.teacher.n_trees;
  j["teacher_depth"] = c.teacher.max_depth;
  j["teacher_seed"] = c.teacher.seed;
  return j;
}

/// Applies the keys present in `j` on top of `c`. Key names mirror to_json.
inline void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  try {
    for (auto it = j.begin(); it != j.end(); ++it) {
      const std::string& k = it.key();
      const auto& v = it.value();
      if (k == "dataset") c.dataset = v.get<std::string>();
      else if (k == "family") c.students.family = parse_family(v.get<std::string>());
      else if (k == "stabilize") c.stabilize = v.get<bool>();
      else if (k == "reps") c.repetitions = v.get<std::size_t>();
      else if (k == "seed") c.seed = v.get<std::uint64_t>();
      else if (k == "alpha") c.stability.alpha = v.get<double>();
      else if (k == "n_init") c.stability.n_init = v.get<std::size_t>();
      else if (k == "n_max") c.stability.n_max = v.get<std::size_t>();
      else if (k == "rate") c.stability.rate = v.get<double>();
      else if (k == "C") c.stability.complexity = v.get<int>();
      else if (k == "N") c.students.n_candidates = v.get<std::size_t>();
      else if (k == "P") c.students.trajectories = v.get<std::size_t>();
      else if (k == "steps") c.students.steps = v.get<std::size_t>();
      else if (k == "min_support") c.students.frl.min_support = v.get<double>();
      else if (k == "population") c.students.gp.population = v.get<std::size_t>();
      else if (k == "generations") c.students.gp.generations = v.get<std::size_t>();
      else if (k == "sampler") c.sampler.strategy = parse_sampler_strategy(v.get<std::string>());
      else if (k == "bandwidth") c.sampler.bandwidth = v.get<double>();
      else if (k == "flip_prob") c.sampler.flip_prob = v.get<double>();
      else if (k == "group_prob") c.sampler.group_switch_prob = v.get<double>();
      else if (k == "bins") c.frl_bins = v.get<std::size_t>();
      else if (k == "teacher_trees") c.teacher.n_trees = v.get<std::size_t>();
      else if (k == "teacher_depth") c.teacher.max_depth = v.get<int>();
      else if (k == "teacher_seed") c.teacher.seed = v.get<std::uint64_t>();
      else if (k == "data_dir") c.data_dir = v.get<std::string>();
      else if (k == "teacher") c.teacher_path = v.get<std::string>();
      else throw ParseError("config: unknown key '" + k + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
}

/// Loads the cached teacher when it fits the data, otherwise trains one and
/// writes it to the cache path (if set).
inline Forest obtain_teacher(const Dataset& data, const ForestOptions& opts, const std::string& cache_path) {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    Forest f = load_forest(cache_path);
    if (f.n_features != data.cols()) {
      throw ShapeError("teacher model '" + cache_path + "' expects " + std::to_string(f.n_features) +
                       " features but the dataset has " + std::to_string(data.cols()));
    }
    return f;
  }
  Forest f = fit_forest(data, opts);
  if (!cache_path.empty()) save_forest(f, cache_path);
  return f;
}

struct RepetitionResult {
  std::string key;
  StabilityState state;
  std::vector<RoundRecord> audit;
};

struct ExperimentResult {
  ProportionTable table;
  std::vector<RepetitionResult> reps;
};

/// Runs the repetitions for an already loaded dataset and teacher.
/// Repetition r uses sampler seed (seed XOR r).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, std::shared_ptr<const Dataset> real,
                                       const Forest& teacher) {
  cfg.validate();
  ExperimentResult res;
  res.reps.resize(cfg.repetitions);
  parallel_for(cfg.repetitions, [&](std::size_t r) {
    SamplerSpec spec = cfg.sampler;
    spec.seed = cfg.seed ^ static_cast<std::uint64_t>(r);
    StabilityResult out = run_algorithm1(real, teacher, cfg.students, cfg.stability, spec, cfg.stabilize);
    res.reps[r] = {out.winner.key, out.state, std::move(out.audit)};
  });
  std::vector<std::string> keys;
  for (const auto& rep : res.reps) keys.push_back(rep.key);
  res.table = ProportionTable::from_keys(keys);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  auto real = std::make_shared<const Dataset>(
      load_working_dataset(cfg.dataset, cfg.students.family, cfg.data_dir, cfg.frl_bins));
  Forest teacher = obtain_teacher(*real, cfg.teacher, cfg.teacher_path);
  return run_experiment(cfg, real, teacher);
}

/// One JSON line per round, tagged with the repetition; the last round of a
/// repetition also carries the stop reason.
inline void write_audit_jsonl(const ExperimentResult& res, std::ostream& out) {
  for (std::size_t r = 0; r < res.reps.size(); ++r) {
    const auto& rep = res.reps[r];
    for (std::size_t k = 0; k < rep.audit.size(); ++k) {
      nlohmann::ordered_json j;
      j["rep"] = r;
      auto round = to_json(rep.audit[k]);
      for (auto& [name, v] : round.items()) j[name] = v;
      if (k + 1 == rep.audit.size()) j["stop_reason"] = to_string(rep.state.stop_reason);
      out << j.dump() << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Sensitivity analysis

enum class SweepAxis { n_candidates, complexity, n_max, sampler };

inline SweepAxis parse_sweep_axis(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "n") return SweepAxis::n_candidates;
  if (s == "c") return SweepAxis::complexity;
  if (s == "n_max" || s == "nmax") return SweepAxis::n_max;
  if (s == "sampler") return SweepAxis::sampler;
  throw DomainError("unknown sweep axis '" + s + "' (expected N|C|n_max|sampler)");
}

/// Sets one hyperparameter. N means the family's candidate budget: trees for
/// DT, trajectories for FRL, population for SR.
inline void set_axis(ExperimentConfig& cfg, SweepAxis axis, const std::string& value) {
  auto as_size = [&]() -> std::size_t {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(value, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != value.size() || v == 0) throw DomainError("sweep value '" + value + "' is not a positive integer");
    return static_cast<std::size_t>(v);
  };
  switch (axis) {
    case SweepAxis::n_candidates: {
      std::size_t v = as_size();
      if (cfg.students.family == Family::dt) cfg.students.n_candidates = v;
      else if (cfg.students.family == Family::frl) cfg.students.trajectories = v;
      else cfg.students.gp.population = std::max<std::size_t>(v, 2);
      break;
    }
    case SweepAxis::complexity: cfg.stability.complexity = static_cast<int>(as_size()); break;
    case SweepAxis::n_max:
      cfg.stability.n_max = as_size();
      cfg.stability.n_init = std::min(cfg.stability.n_init, cfg.stability.n_max);
      break;
    case SweepAxis::sampler: cfg.sampler.strategy = parse_sampler_strategy(value); break;
  }
}

struct SweepPoint {
  std::string value;
  ExperimentResult result;
};

inline std::vector<SweepPoint> sensitivity_sweep(const ExperimentConfig& cfg, SweepAxis axis,
                                                 const std::vector<std::string>& values) {
  if (values.empty()) throw DomainError("sensitivity_sweep: empty value list");
  cfg.validate();
  auto real = std::make_shared<const Dataset>(
      load_working_dataset(cfg.dataset, cfg.students.family, cfg.data_dir, cfg.frl_bins));
  Forest teacher = obtain_teacher(*real, cfg.teacher, cfg.teacher_path);
  std::vector<SweepPoint> out;
  for (const auto& v : values) {
    ExperimentConfig c = cfg;
    set_axis(c, axis, v);
    out.push_back({v, run_experiment(c, real, teacher)});
  }
  return out;
}

struct EntropyGrid {
  std::vector<std::string> complexity;  ///< rows
  std::vector<std::string> n_max;       ///< columns
  std::vector<std::vector<double>> entropy;
};

/// Entropy of the structure proportions for every (C, n_max) pair.
inline EntropyGrid entropy_grid(const ExperimentConfig& cfg, const std::vector<std::string>& c_values,
                                const std::vector<std::string>& nmax_values) {
  if (c_values.empty() || nmax_values.empty()) throw DomainError("entropy_grid: empty value list");
  cfg.validate();
  auto real = std::make_shared<const Dataset>(
      load_working_dataset(cfg.dataset, cfg.students.family, cfg.data_dir, cfg.frl_bins));
  Forest teacher = obtain_teacher(*real, cfg.teacher, cfg.teacher_path);
  EntropyGrid g{c_values, nmax_values, {}};
  for (const auto& cv : c_values) {
    std::vector<double> row;
    for (const auto& nv : nmax_values) {
      ExperimentConfig c = cfg;
      set_axis(c, SweepAxis::complexity, cv);
      set_axis(c, SweepAxis::n_max, nv);
      row.push_back(run_experiment(c, real, teacher).table.entropy_bits);
    }
    g.entropy.push_back(std::move(row));
  }
  return g;
}

inline void write_entropy_grid_csv(const EntropyGrid& g, std::ostream& out) {
  out << "C";
  for (const auto& v : g.n_max) out << ',' << v;
  out << '\n';
  for (std::size_t i = 0; i < g.complexity.size(); ++i) {
    out << g.complexity[i];
    for (double e : g.entropy[i]) out << ',' << format_double(e);
    out << '\n';
  }
}

}  // namespace distill
