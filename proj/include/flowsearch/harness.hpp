#pragma once

// Experiment configuration, seeded runs, budget sweeps, the interpolant
// ablation and CSV output.

#include "flowsearch/analytic_flow.hpp"
#include "flowsearch/rewards.hpp"
#include "flowsearch/samplers.hpp"
#include "flowsearch/sde_engine.hpp"
#include "flowsearch/types.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <ostream>
#include <set>
#include <string>
#include <thread>
#include <vector>

namespace flowsearch {

inline const std::vector<std::size_t> kDefaultBudgets = {50, 100, 300, 500, 1000};

struct ExperimentConfig {
  GaussianMixture gmm = GaussianMixture::default_benchmark();
  RewardSpec reward = RewardSpec::rare_mode(GaussianMixture::default_benchmark());
  Process process = Process::vp_sde;
  SamplerKind sampler = SamplerKind::rbf;
  std::size_t nfe = 500;
  int steps = 10;
  std::vector<std::uint64_t> seeds = {0};
  SamplerOptions opts{};
  GridMode grid = GridMode::uniform;
  DiffusionCoefficient diffusion{};
  InterpolantSchedule converted = InterpolantSchedule::vp();
  int diversity_k = 50;
  std::string out;

  PlanOptions plan_options(Process p) const {
    PlanOptions o;
    o.process = p;
    o.steps = steps;
    o.grid = grid;
    o.diffusion = diffusion;
    o.converted = converted;
    return o;
  }
};

namespace detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& j, const std::string& where,
                                const std::set<std::string>& allowed) {
  if (!j.is_object()) throw ConfigError(where, "expected an object");
  for (const auto& item : j.items())
    if (!allowed.count(item.key()))
      throw ConfigError(where.empty() ? item.key() : where + "." + item.key(), "unknown key");
}

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(key, std::string("wrong type: ") + e.what());
  }
}

inline Vec to_vec(const json& j, const std::string& key) {
  const auto v = get_as<std::vector<double>>(j, key);
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[i];
  return out;
}

inline GaussianMixture parse_gmm(const json& j) {
  reject_unknown_keys(j, "gmm", {"dim", "weights", "means", "variances"});
  for (const char* key : {"dim", "weights", "means", "variances"})
    if (!j.contains(key)) throw ConfigError(std::string("gmm.") + key, "missing");
  const int dim = get_as<int>(j["dim"], "gmm.dim");
  if (dim < 1) throw ConfigError("gmm.dim", "must be >= 1");
  const auto weights = get_as<std::vector<double>>(j["weights"], "gmm.weights");
  if (!j["means"].is_array()) throw ConfigError("gmm.means", "expected an array");
  if (!j["variances"].is_array()) throw ConfigError("gmm.variances", "expected an array");
  std::vector<Vec> means, vars;
  for (const auto& m : j["means"]) {
    means.push_back(to_vec(m, "gmm.means"));
    if (means.back().size() != dim) throw ConfigError("gmm.means", "entry length differs from dim");
  }
  for (const auto& v : j["variances"]) {
    // A scalar is an isotropic variance.
    vars.push_back(v.is_number() ? Vec(Vec::Constant(dim, v.get<double>())) : to_vec(v, "gmm.variances"));
    if (vars.back().size() != dim) throw ConfigError("gmm.variances", "entry length differs from dim");
  }
  try {
    return GaussianMixture(weights, std::move(means), std::move(vars));
  } catch (const DomainError& e) {
    throw ConfigError("gmm", e.what());
  }
}

inline RewardSpec parse_reward(const json& j, const GaussianMixture& gmm) {
  reject_unknown_keys(j, "reward", {"kind", "params", "beta"});
  if (!j.contains("kind")) throw ConfigError("reward.kind", "missing");
  const auto kind = parse_reward_kind(get_as<std::string>(j["kind"], "reward.kind"));
  if (!kind) throw ConfigError("reward.kind", "unknown reward kind");
  const double beta = j.contains("beta") ? get_as<double>(j["beta"], "reward.beta") : 0.1;
  if (!(beta > 0.0)) throw ConfigError("reward.beta", "must be positive");
  const json params = j.contains("params") ? j["params"] : json::object();
  try {
    switch (*kind) {
      case RewardKind::target_point: {
        reject_unknown_keys(params, "reward.params", {"target"});
        if (!params.contains("target")) throw ConfigError("reward.params.target", "missing");
        Vec target = to_vec(params["target"], "reward.params.target");
        if (static_cast<std::size_t>(target.size()) != gmm.dim())
          throw ConfigError("reward.params.target", "length differs from gmm.dim");
        return RewardSpec::target_point(std::move(target), beta);
      }
      case RewardKind::rare_mode: {
        reject_unknown_keys(params, "reward.params", {"component"});
        std::optional<std::size_t> comp;
        if (params.contains("component"))
          comp = get_as<std::size_t>(params["component"], "reward.params.component");
        return RewardSpec::rare_mode(gmm, comp, beta);
      }
      case RewardKind::ring: {
        reject_unknown_keys(params, "reward.params", {"radius", "width"});
        const double radius =
            params.contains("radius") ? get_as<double>(params["radius"], "reward.params.radius") : 1.0;
        const double width =
            params.contains("width") ? get_as<double>(params["width"], "reward.params.width") : 1.0;
        return RewardSpec::ring(radius, width, beta);
      }
    }
  } catch (const DomainError& e) {
    throw ConfigError("reward.params", e.what());
  }
  throw ConfigError("reward.kind", "unknown reward kind");
}

inline void parse_sampler_opts(const json& j, ExperimentConfig& cfg) {
  reject_unknown_keys(j, "sampler_opts",
                      {"n", "k", "L", "n_keep", "sop_forward", "ess_threshold", "grid",
                       "diversity_k", "g_norm", "g_exponent", "vp_beta_min", "vp_beta_max"});
  auto positive_int = [&](const char* key, int& dst) {
    if (!j.contains(key)) return;
    dst = get_as<int>(j[key], std::string("sampler_opts.") + key);
    if (dst < 1) throw ConfigError(std::string("sampler_opts.") + key, "must be >= 1");
  };
  positive_int("n", cfg.opts.n);
  positive_int("k", cfg.opts.k);
  positive_int("L", cfg.opts.interval);
  positive_int("n_keep", cfg.opts.n_keep);
  positive_int("diversity_k", cfg.diversity_k);
  if (cfg.diversity_k < 2) throw ConfigError("sampler_opts.diversity_k", "must be >= 2");
  if (j.contains("sop_forward")) {
    cfg.opts.sop_forward = get_as<int>(j["sop_forward"], "sampler_opts.sop_forward");
    if (cfg.opts.sop_forward < 0) throw ConfigError("sampler_opts.sop_forward", "must be >= 0");
  }
  if (j.contains("ess_threshold")) {
    cfg.opts.ess_threshold = get_as<double>(j["ess_threshold"], "sampler_opts.ess_threshold");
    if (!(cfg.opts.ess_threshold >= 0.0 && cfg.opts.ess_threshold <= 1.0))
      throw ConfigError("sampler_opts.ess_threshold", "must lie in [0, 1]");
  }
  if (j.contains("grid")) {
    const auto g = parse_grid_mode(get_as<std::string>(j["grid"], "sampler_opts.grid"));
    if (!g) throw ConfigError("sampler_opts.grid", "expected uniform or adaptive");
    cfg.grid = *g;
  }
  if (j.contains("g_norm")) cfg.diffusion.norm = get_as<double>(j["g_norm"], "sampler_opts.g_norm");
  if (j.contains("g_exponent"))
    cfg.diffusion.exponent = get_as<double>(j["g_exponent"], "sampler_opts.g_exponent");
  if (!(cfg.diffusion.norm >= 0.0) || !(cfg.diffusion.exponent > 0.0))
    throw ConfigError("sampler_opts.g_norm", "need norm >= 0 and exponent > 0");
  double bmin = cfg.converted.vp_beta_min, bmax = cfg.converted.vp_beta_max;
  if (j.contains("vp_beta_min")) bmin = get_as<double>(j["vp_beta_min"], "sampler_opts.vp_beta_min");
  if (j.contains("vp_beta_max")) bmax = get_as<double>(j["vp_beta_max"], "sampler_opts.vp_beta_max");
  try {
    cfg.converted = InterpolantSchedule::vp(bmin, bmax);
  } catch (const DomainError& e) {
    throw ConfigError("sampler_opts.vp_beta_min", e.what());
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::get_as;
  detail::reject_unknown_keys(j, "", {"gmm", "reward", "process", "sampler", "nfe", "steps",
                                      "seeds", "sampler_opts", "out"});
  ExperimentConfig cfg;
  if (j.contains("gmm")) cfg.gmm = detail::parse_gmm(j["gmm"]);
  cfg.reward = j.contains("reward") ? detail::parse_reward(j["reward"], cfg.gmm)
                                    : RewardSpec::rare_mode(cfg.gmm);

  if (!j.contains("process")) throw ConfigError("process", "missing");
  const auto process = parse_process(get_as<std::string>(j["process"], "process"));
  if (!process) throw ConfigError("process", "unknown process");
  cfg.process = *process;

  if (!j.contains("sampler")) throw ConfigError("sampler", "missing");
  const auto sampler = parse_sampler(get_as<std::string>(j["sampler"], "sampler"));
  if (!sampler) throw ConfigError("sampler", "unknown sampler");
  cfg.sampler = *sampler;

  if (j.contains("steps")) cfg.steps = get_as<int>(j["steps"], "steps");
  if (cfg.steps < 1) throw ConfigError("steps", "must be >= 1");
  if (j.contains("nfe")) {
    const auto nfe = get_as<long long>(j["nfe"], "nfe");
    if (nfe < 1) throw ConfigError("nfe", "must be positive");
    cfg.nfe = static_cast<std::size_t>(nfe);
  }
  if (cfg.nfe < static_cast<std::size_t>(cfg.steps)) throw ConfigError("nfe", "must be >= steps");
  if (j.contains("seeds")) {
    cfg.seeds = get_as<std::vector<std::uint64_t>>(j["seeds"], "seeds");
    if (cfg.seeds.empty()) throw ConfigError("seeds", "must not be empty");
  }
  if (j.contains("sampler_opts")) detail::parse_sampler_opts(j["sampler_opts"], cfg);
  if (j.contains("out")) cfg.out = get_as<std::string>(j["out"], "out");
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(j);
}

struct RunRecord {
  std::uint64_t seed = 0;
  std::string method;
  std::string process;
  std::size_t nfe_budget = 0;
  int steps = 0;
  double best_reward = 0.0;
  double diversity_mpd = 0.0;
  std::size_t nfe_used = 0;
  double wall_ms = 0.0;
};

/// Mean pairwise Euclidean distance.
inline double diversity_mpd(const std::vector<Vec>& points) {
  if (points.size() < 2) throw DomainError("diversity_mpd: need at least two points");
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t j = i + 1; j < points.size(); ++j) sum += (points[i] - points[j]).norm();
  const double pairs = 0.5 * static_cast<double>(points.size()) * static_cast<double>(points.size() - 1);
  return sum / pairs;
}

namespace detail {

inline double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// One sampler run. `nfe` overrides the configured budget when nonzero.
inline RunRecord run_experiment(const ExperimentConfig& cfg, std::uint64_t seed,
                                std::size_t nfe = 0, std::optional<Process> process = {}) {
  const auto start = std::chrono::steady_clock::now();
  const Process p = process.value_or(cfg.process);
  const std::size_t budget = nfe ? nfe : cfg.nfe;
  const StepPlan plan = make_plan(cfg.plan_options(p));
  FlowModel oracle(cfg.gmm);
  const SearchResult res = run_sampler(cfg.sampler, plan, cfg.reward, budget, seed, oracle, cfg.opts);

  RunRecord rec;
  rec.seed = seed;
  rec.method = sampler_name(cfg.sampler);
  rec.process = process_name(p);
  rec.nfe_budget = budget;
  rec.steps = cfg.steps;
  rec.best_reward = res.best_reward;
  rec.diversity_mpd = res.final_candidates.size() >= 2 ? diversity_mpd(res.final_candidates) : 0.0;
  rec.nfe_used = res.nfe_used;
  rec.wall_ms = detail::elapsed_ms(start);
  return rec;
}

/// Branched-proposal diversity for one seed: one initial noise, k branches
/// that differ only in the first step's noise, completed without noise.
inline RunRecord run_diversity(const ExperimentConfig& cfg, std::uint64_t seed,
                               std::optional<Process> process = {}) {
  const auto start = std::chrono::steady_clock::now();
  const Process p = process.value_or(cfg.process);
  const StepPlan plan = make_plan(cfg.plan_options(p));
  FlowModel oracle(cfg.gmm);
  const Vec x1 = initial_noise(seed, 0, static_cast<Eigen::Index>(cfg.gmm.dim()));
  const auto ends = branched_endpoints(plan, x1, {seed, Stream::diversity, 0, 0}, cfg.diversity_k, oracle);

  RunRecord rec;
  rec.seed = seed;
  rec.method = "diversity";
  rec.process = process_name(p);
  rec.nfe_budget = 1 + static_cast<std::size_t>(cfg.diversity_k) * static_cast<std::size_t>(cfg.steps - 1);
  rec.steps = cfg.steps;
  rec.best_reward = -std::numeric_limits<double>::infinity();
  for (const Vec& x : ends) rec.best_reward = std::max(rec.best_reward, evaluate_reward(cfg.reward, x));
  rec.diversity_mpd = diversity_mpd(ends);
  rec.nfe_used = oracle.calls();
  rec.wall_ms = detail::elapsed_ms(start);
  return rec;
}

/// Runs `tasks` on up to `jobs` threads; results keep task order. The first
/// exception by task index is rethrown.
template <class T>
std::vector<T> run_parallel(const std::vector<std::function<T()>>& tasks, int jobs) {
  std::vector<T> out(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        out[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), tasks.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

/// Sorts by (seed, budget); rows that tie keep their task order.
inline void sort_records(std::vector<RunRecord>& rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const RunRecord& a, const RunRecord& b) {
    if (a.seed != b.seed) return a.seed < b.seed;
    return a.nfe_budget < b.nfe_budget;
  });
}

inline std::vector<RunRecord> run_seeds(const ExperimentConfig& cfg, std::uint64_t seed_offset,
                                        int jobs) {
  std::vector<std::function<RunRecord()>> tasks;
  for (std::uint64_t s : cfg.seeds)
    tasks.emplace_back([&cfg, seed = s + seed_offset] { return run_experiment(cfg, seed); });
  auto rows = run_parallel(tasks, jobs);
  sort_records(rows);
  return rows;
}

inline std::vector<RunRecord> sweep(const ExperimentConfig& cfg, std::vector<std::size_t> budgets,
                                    std::uint64_t seed_offset = 0, int jobs = 1) {
  if (budgets.empty()) throw ConfigError("budgets", "must not be empty");
  if (!std::is_sorted(budgets.begin(), budgets.end()))
    throw ConfigError("budgets", "must be sorted ascending");
  for (std::size_t b : budgets)
    if (b < static_cast<std::size_t>(cfg.steps)) throw ConfigError("budgets", "each budget must be >= steps");
  std::vector<std::function<RunRecord()>> tasks;
  for (std::size_t b : budgets)
    for (std::uint64_t s : cfg.seeds)
      tasks.emplace_back([&cfg, b, seed = s + seed_offset] { return run_experiment(cfg, seed, b); });
  auto rows = run_parallel(tasks, jobs);
  sort_records(rows);
  return rows;
}

/// The five processes under identical seeds and budget. best_reward and
/// nfe_used come from the configured sampler; diversity_mpd from the
/// branched-proposal protocol.
inline std::vector<RunRecord> ablate_interpolant(const ExperimentConfig& cfg,
                                                 std::uint64_t seed_offset = 0, int jobs = 1) {
  if (cfg.sampler == SamplerKind::bon)
    throw ConfigError("sampler", "the ablation needs a sampler with stochastic proposals");
  std::vector<std::function<RunRecord()>> tasks;
  for (std::uint64_t s : cfg.seeds)
    for (Process p : kAllProcesses)
      tasks.emplace_back([&cfg, p, seed = s + seed_offset] {
        RunRecord rec = run_experiment(cfg, seed, 0, p);
        rec.diversity_mpd = run_diversity(cfg, seed, p).diversity_mpd;
        return rec;
      });
  auto rows = run_parallel(tasks, jobs);
  sort_records(rows);
  return rows;
}

inline std::vector<RunRecord> diversity_table(const ExperimentConfig& cfg,
                                              std::uint64_t seed_offset = 0, int jobs = 1) {
  std::vector<std::function<RunRecord()>> tasks;
  for (std::uint64_t s : cfg.seeds)
    tasks.emplace_back([&cfg, seed = s + seed_offset] { return run_diversity(cfg, seed); });
  auto rows = run_parallel(tasks, jobs);
  sort_records(rows);
  return rows;
}

inline const char* kCsvHeader =
    "seed,method,process,nfe_budget,steps,best_reward,diversity_mpd,nfe_used,wall_ms";

/// %.12g
inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline void validate_record(const RunRecord& r) {
  if (r.nfe_used > r.nfe_budget) throw InvariantError("record: nfe_used exceeds nfe_budget");
  if (!(r.diversity_mpd >= 0.0) || !std::isfinite(r.diversity_mpd))
    throw InvariantError("record: diversity_mpd must be finite and nonnegative");
  if (std::isnan(r.best_reward)) throw InvariantError("record: best_reward is NaN");
}

inline std::string csv_row(const RunRecord& r) {
  return std::to_string(r.seed) + "," + r.method + "," + r.process + "," +
         std::to_string(r.nfe_budget) + "," + std::to_string(r.steps) + "," +
         format_real(r.best_reward) + "," + format_real(r.diversity_mpd) + "," +
         std::to_string(r.nfe_used) + "," + format_real(r.wall_ms);
}

/// Writes header and rows; every row is validated before anything is written.
inline void write_csv(std::ostream& os, const std::vector<RunRecord>& rows) {
  for (const auto& r : rows) validate_record(r);
  os << kCsvHeader << "\n";
  for (const auto& r : rows) os << csv_row(r) << "\n";
}

}  // namespace flowsearch
