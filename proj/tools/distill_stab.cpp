#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "distill/distill.hpp"

#ifndef DISTILL_DATA_DIR
#define DISTILL_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace distill;

namespace {

struct Flags {
  std::string config;
  std::string dataset = "mammographic";
  std::string family = "dt";
  std::string sampler = "kernel";
  std::string data_dir = DISTILL_DATA_DIR;
  std::string teacher;
  std::string out = "results";
  bool stabilize = false;
  bool full_scale = false;
  std::uint64_t seed = 0;
  std::size_t reps = 0, n_init = 0, n_max = 0, N = 0, P = 0, steps = 0, population = 0, generations = 0;
  int C = 0;
  double alpha = -1, rate = -1, bandwidth = -1, flip_prob = -1, group_prob = -1;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON config file; flags given on the command line override it");
  cmd->add_option("--dataset", f.dataset, "mammographic | breast-cancer");
  cmd->add_option("--family", f.family, "dt | frl | sr");
  cmd->add_flag("--stabilize", f.stabilize, "run the stability test loop (otherwise one round at n_init)");
  cmd->add_option("--reps", f.reps, "repetitions");
  cmd->add_option("--seed", f.seed, "base seed");
  cmd->add_option("--alpha", f.alpha, "significance level");
  cmd->add_option("--n-init", f.n_init, "initial corpus size");
  cmd->add_option("--n-max", f.n_max, "maximum corpus size");
  cmd->add_option("-C,--complexity", f.C, "complexity cap: tree depth, list length or formula depth");
  cmd->add_option("--N", f.N, "DT candidates per round");
  cmd->add_option("--P", f.P, "FRL trajectories per round");
  cmd->add_option("--steps", f.steps, "FRL trajectory length");
  cmd->add_option("--population", f.population, "SR population");
  cmd->add_option("--generations", f.generations, "SR generations");
  cmd->add_option("--rate", f.rate, "linear-search step L");
  cmd->add_option("--sampler", f.sampler, "kernel | independent");
  cmd->add_option("--bandwidth", f.bandwidth, "kernel smoother bandwidth");
  cmd->add_option("--flip-prob", f.flip_prob, "binary flip probability");
  cmd->add_option("--group-prob", f.group_prob, "one-hot group switch probability");
  cmd->add_flag("--full-scale", f.full_scale, "100 repetitions, n_max 100000, SR population 10000");
  cmd->add_option("--data-dir", f.data_dir, "directory with the bundled CSV files");
  cmd->add_option("--teacher", f.teacher, "teacher model cache (JSON); trained and written if missing");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads (0 = all cores)");
}

ExperimentConfig build_config(const Flags& f, const CLI::App* cmd) {
  ExperimentConfig c;
  auto given = [&](const char* name) { return cmd->count(name) > 0; };
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ParseError("cannot open config '" + f.config + "'");
    try {
      apply_json(c, nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("config: ") + e.what());
    }
  }
  if (f.full_scale) c.apply_full_scale();
  if (given("--dataset") || f.config.empty()) c.dataset = f.dataset;
  if (given("--family") || f.config.empty()) c.students.family = parse_family(f.family);
  if (given("--sampler")) c.sampler.strategy = parse_sampler_strategy(f.sampler);
  if (given("--stabilize")) c.stabilize = true;
  else if (f.config.empty()) c.stabilize = false;
  if (given("--seed")) c.seed = f.seed;
  if (given("--reps")) c.repetitions = f.reps;
  if (given("--alpha")) c.stability.alpha = f.alpha;
  if (given("--n-init")) c.stability.n_init = f.n_init;
  if (given("--n-max")) c.stability.n_max = f.n_max;
  if (given("--complexity")) c.stability.complexity = f.C;
  if (given("--rate")) c.stability.rate = f.rate;
  if (given("--N")) c.students.n_candidates = f.N;
  if (given("--P")) c.students.trajectories = f.P;
  if (given("--steps")) c.students.steps = f.steps;
  if (given("--population")) c.students.gp.population = f.population;
  if (given("--generations")) c.students.gp.generations = f.generations;
  if (given("--bandwidth")) c.sampler.bandwidth = f.bandwidth;
  if (given("--flip-prob")) c.sampler.flip_prob = f.flip_prob;
  if (given("--group-prob")) c.sampler.group_switch_prob = f.group_prob;
  if (given("--data-dir") || c.data_dir == ".") c.data_dir = f.data_dir;
  if (given("--teacher")) c.teacher_path = f.teacher;
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto t = std::string(detail::trim(item));
    if (!t.empty()) out.push_back(t);
  }
  return out;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write '" + p.string() + "'");
  return out;
}

void write_run(const ExperimentResult& res, const fs::path& dir) {
  fs::create_directories(dir);
  auto props = open_out(dir / "proportions.csv");
  write_proportions_csv(res.table, props);
  auto audit = open_out(dir / "audit.jsonl");
  write_audit_jsonl(res, audit);
}

void print_summary(const ExperimentResult& res) {
  std::cout << "repetitions " << res.table.repetitions << ", structures " << res.table.rows.size() << ", entropy "
            << format_double(res.table.entropy_bits, "%.4f") << " bits\n";
  for (std::size_t i = 0; i < std::min<std::size_t>(res.table.rows.size(), 5); ++i) {
    const auto& r = res.table.rows[i];
    std::cout << "  " << format_double(r.proportion, "%.2f") << "  " << r.key << '\n';
  }
}

int theory(const std::string& grid_path, const std::string& out_path) {
  std::ifstream in(grid_path);
  if (!in) throw ParseError("cannot open grid '" + grid_path + "'");
  nlohmann::json g;
  try {
    g = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("grid: ") + e.what());
  }
  auto list = [&](const char* key, std::vector<double> def) {
    return g.contains(key) ? g.at(key).get<std::vector<double>>() : def;
  };
  auto ns = list("n", {100, 1000, 10000});
  auto ss = list("S", {0.05, 0.1, 0.5});
  auto cs = list("N", {2});
  auto as = list("alpha", {0.05, 0.01});
  auto trials = g.value("trials", std::size_t{100000});
  auto seed = g.value("seed", std::uint64_t{1});

  fs::path p(out_path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  auto out = open_out(p);
  out << "n,S_star,N_C,alpha,omega2_exact,omega2_sim,omega2_bound,n_prime_bound,in_regime\n";
  std::uint64_t cell = 0;
  for (double n : ns)
    for (double s : ss)
      for (double nc : cs)
        for (double a : as) {
          TheoryParams tp;
          tp.mu = s;
          tp.sigma = 1.0;
          tp.n = n;
          tp.alpha = a;
          tp.n_candidates = static_cast<std::size_t>(nc);
          tp.s_star = s;
          auto b = theorem1_bounds(tp);
          double sim = simulate_stopping(tp, trials, derive_seed(seed, {cell++}));
          out << format_double(n, "%g") << ',' << format_double(s, "%g") << ',' << tp.n_candidates << ','
              << format_double(a, "%g") << ',' << format_double(omega2_exact(tp), "%.8g") << ','
              << format_double(sim, "%.8g") << ',' << format_double(b.omega2_upper, "%.8g") << ','
              << format_double(b.n_prime_upper, "%.8g") << ',' << (b.in_regime ? 1 : 0) << '\n';
        }
  std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stable model distillation: structure-stability testing for interpretable students"};
  app.require_subcommand(1);

  Flags run_flags;
  auto* run = app.add_subcommand("run", "repeated distillation runs and a structure proportion table");
  add_common(run, run_flags);

  Flags sweep_flags;
  std::string axis, values, c_values, nmax_values;
  auto* sweep = app.add_subcommand("sweep", "vary one hyperparameter, or a C x n_max entropy grid (--axis grid)");
  add_common(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "N | C | n_max | sampler | grid")->required();
  sweep->add_option("--values", values, "comma-separated values for the axis");
  sweep->add_option("--c-values", c_values, "grid rows (C)");
  sweep->add_option("--nmax-values", nmax_values, "grid columns (n_max)");

  std::string grid_path, theory_out = "theory.csv";
  auto* th = app.add_subcommand("theory", "stopping-process grid: exact, simulated and bounded omega2");
  th->add_option("--grid", grid_path, "JSON with lists n, S, N, alpha and optional trials, seed")->required();
  th->add_option("--out", theory_out, "output CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      parallel_threads() = run_flags.threads;
      auto cfg = build_config(run_flags, run);
      auto res = run_experiment(cfg);
      write_run(res, run_flags.out);
      print_summary(res);
      return 0;
    }
    if (*sweep) {
      parallel_threads() = sweep_flags.threads;
      auto cfg = build_config(sweep_flags, sweep);
      fs::path dir(sweep_flags.out);
      fs::create_directories(dir);
      if (axis == "grid") {
        auto grid = entropy_grid(cfg, split_list(c_values), split_list(nmax_values));
        auto out = open_out(dir / "entropy_grid.csv");
        write_entropy_grid_csv(grid, out);
        std::cout << "wrote " << (dir / "entropy_grid.csv").string() << '\n';
        return 0;
      }
      auto ax = parse_sweep_axis(axis);
      auto points = sensitivity_sweep(cfg, ax, split_list(values));
      auto summary = open_out(dir / "sweep.csv");
      summary << "axis,value,structures,top_proportion,entropy_bits\n";
      for (const auto& p : points) {
        write_run(p.result, dir / (axis + "_" + p.value));
        summary << axis << ',' << p.value << ',' << p.result.table.rows.size() << ','
                << format_double(p.result.table.top_proportion()) << ','
                << format_double(p.result.table.entropy_bits) << '\n';
        std::cout << axis << '=' << p.value << ": ";
        print_summary(p.result);
      }
      return 0;
    }
    if (*th) return theory(grid_path, theory_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
