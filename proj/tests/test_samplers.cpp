#include "flowsearch/samplers.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace flowsearch;

namespace {

const InterpolantSchedule kLinear = InterpolantSchedule::linear();

Vec v2(double a, double b) { return Vec{{a, b}}; }

// Velocity chosen so that the linear-path posterior mean x - t u lands on
// path(t) whatever the latent; values then depend on t alone.
struct ScriptedOracle {
  GaussianMixture g = GaussianMixture::single(Vec::Zero(2), Vec::Ones(2));
  std::function<Vec(double)> path;
  std::size_t n = 0;
  Vec operator()(const Vec& x, double t) {
    ++n;
    return (x - path(t)) / t;
  }
  std::size_t calls() const { return n; }
  const GaussianMixture& gmm() const { return g; }
};

// Analytic oracle that logs every query.
struct RecordingOracle {
  GaussianMixture g = GaussianMixture::default_benchmark();
  std::vector<Vec> xs, us;
  std::vector<double> ts;
  Vec operator()(const Vec& x, double t) {
    Vec u = velocity_at(g, kLinear, t, x);
    xs.push_back(x);
    ts.push_back(t);
    us.push_back(u);
    return u;
  }
  std::size_t calls() const { return xs.size(); }
  const GaussianMixture& gmm() const { return g; }
};

void expect_consistent(const SearchResult& r, const RewardSpec& spec, std::size_t total, std::size_t calls) {
  EXPECT_LE(r.nfe_used, total);
  EXPECT_EQ(r.nfe_used, calls);
  std::size_t sum = r.init_consumption;
  for (auto c : r.per_step_consumption) sum += c;
  EXPECT_EQ(sum, r.nfe_used);
  ASSERT_EQ(r.best_x.size(), 2);
  EXPECT_EQ(r.best_reward, evaluate_reward(spec, r.best_x));
  for (const Vec& x : r.final_candidates) EXPECT_GE(r.best_reward, evaluate_reward(spec, x));
}

}  // namespace

TEST(Selection, ArgmaxLowestIndexOnTies) {
  EXPECT_EQ(argmax_lowest({3, 7, 5}), 1u);
  EXPECT_EQ(argmax_lowest({0.1, 0.9, 0.9}), 1u);
  EXPECT_EQ(argmax_lowest({2, 2, 2}), 0u);
  EXPECT_THROW(argmax_lowest({}), DomainError);
}

TEST(Selection, TopN) {
  EXPECT_EQ(top_n({1, 9, 4, 9, 2}, 2), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(top_n({1, 2}, 5), (std::vector<std::size_t>{1, 0}));
}

TEST(Budget, UniformSplitRemainderToEarliest) {
  EXPECT_EQ(uniform_split(23, 5), (std::vector<std::size_t>{5, 5, 5, 4, 4}));
  const auto b = SearchBudget::uniform(500, 10);
  std::size_t s = 0;
  for (auto q : b.quotas) s += q;
  EXPECT_EQ(s, 500u);
}

TEST(Budget, ChargeNeverExceedsTotal) {
  auto b = SearchBudget::uniform(3, 1);
  b.charge(2);
  EXPECT_EQ(b.remaining(), 1u);
  EXPECT_THROW(b.charge(2), BudgetError);
  EXPECT_EQ(b.consumed, 2u);
}

TEST(Budget, ChainCount) {
  EXPECT_EQ(chain_count(500, 500, 10), 50u);
  EXPECT_EQ(chain_count(2, 500, 10), 2u);
  EXPECT_EQ(chain_count(2, 15, 10), 1u);
  EXPECT_THROW(chain_count(1, 9, 10), BudgetError);
}

TEST(BestOfN, FiftyAtFiveHundred) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  FlowModel model(g);
  const auto r = best_of_n(make_plan(Process::linear_ode, 10), spec, 500, 3, model);
  EXPECT_EQ(r.final_candidates.size(), 50u);
  EXPECT_EQ(r.nfe_used, 500u);
  expect_consistent(r, spec, 500, model.calls());
}

TEST(BestOfN, SingleTrajectoryIsReturned) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  const auto plan = make_plan(Process::linear_sde, 10);
  FlowModel m1(g), m2(g);
  const auto r = best_of_n(plan, spec, 10, 9, m1);
  const auto direct = run_process(plan, initial_noise(9, 0, 2), {9, Stream::proposal, 0, 0}, m2);
  EXPECT_EQ(r.best_x, direct.x0);
  EXPECT_EQ(r.final_candidates.size(), 1u);
}

TEST(BestOfN, TiesKeepEarliestCandidate) {
  SearchResult r;
  r.offer(v2(1, 0), 3.0);
  r.offer(v2(2, 0), 7.0);
  r.offer(v2(3, 0), 7.0);
  r.offer(v2(4, 0), 5.0);
  EXPECT_EQ(r.best_x, v2(2, 0));
}

TEST(Ess, Examples) {
  EXPECT_DOUBLE_EQ(ess({1, 1, 1, 1}), 4.0);
  EXPECT_DOUBLE_EQ(ess({1, 0, 0, 0}), 1.0);
  EXPECT_NEAR(ess({2, 1, 1}), 16.0 / 6.0, 1e-15);
  EXPECT_THROW(ess({0, 0}), DegenerateWeightsError);
  EXPECT_THROW(ess({1, -1}), DomainError);
}

TEST(Ess, LogFormMatchesDirect) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(-3, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> lw(12), w(12);
    for (std::size_t i = 0; i < lw.size(); ++i) w[i] = std::exp(lw[i] = unif(rng));
    EXPECT_NEAR(ess_from_log(lw), ess(w), 1e-12);
  }
  EXPECT_NEAR(ess_from_log({1000, 1000}), 2.0, 1e-12);
  EXPECT_THROW(ess_from_log({-INFINITY, -INFINITY}), DegenerateWeightsError);
}

TEST(Resample, PointMass) {
  const auto a = resample_multinomial({0, 1, 0}, 100, {1, Stream::resample, 0, 0});
  for (auto i : a) EXPECT_EQ(i, 1u);
}

TEST(Resample, ZeroDraws) { EXPECT_TRUE(resample_multinomial({1, 2}, 0, {1, Stream::resample, 0, 0}).empty()); }

TEST(Resample, Degenerate) {
  EXPECT_THROW(resample_multinomial({0, 0}, 3, {1, Stream::resample, 0, 0}), DegenerateWeightsError);
  EXPECT_THROW(resample_multinomial({}, 3, {1, Stream::resample, 0, 0}), DegenerateWeightsError);
}

TEST(Resample, UniformCountsPassChiSquare) {
  const std::size_t cats = 10, n = 100000;
  const auto a = resample_multinomial(std::vector<double>(cats, 1.0), n, {42, Stream::resample, 0, 0});
  std::vector<double> counts(cats, 0.0);
  for (auto i : a) counts[i] += 1.0;
  const double expect = static_cast<double>(n) / cats;
  double stat = 0.0;
  for (double c : counts) stat += (c - expect) * (c - expect) / expect;
  const boost::math::chi_squared dist(static_cast<double>(cats - 1));
  EXPECT_LT(stat, boost::math::quantile(dist, 0.99));
}

TEST(Smc, WeightUpdateIsExpOfScaledValueGain) {
  ScriptedOracle oracle;
  oracle.path = [](double t) { return Vec{{t >= 0.95 ? std::sqrt(0.5) : std::sqrt(0.2), 0.0}}; };
  const auto spec = RewardSpec::target_point(Vec::Zero(2), 0.1);
  const auto plan = make_plan(Process::linear_sde, 10);
  SamplerOptions opt;
  opt.n = 4;
  const auto r = run_smc(plan, spec, 40, 1, oracle, opt);
  ASSERT_FALSE(r.trace.empty());
  for (double lw : r.trace[0].log_weights) EXPECT_NEAR(std::exp(lw), std::exp(3.0), 1e-9);
  EXPECT_NEAR(std::exp(3.0), 20.0855, 1e-4);
}

TEST(Smc, EqualValuesNeverResample) {
  ScriptedOracle oracle;
  oracle.path = [](double t) { return Vec{{t, 1.0}}; };
  const auto spec = RewardSpec::target_point(Vec::Zero(2), 0.1);
  SamplerOptions opt;
  opt.n = 5;
  const auto r = run_smc(make_plan(Process::linear_sde, 10), spec, 50, 1, oracle, opt);
  for (const auto& tr : r.trace) {
    EXPECT_FALSE(tr.resampled);
    EXPECT_NEAR(tr.ess, 5.0, 1e-12);
  }
}

TEST(Smc, WeightsResetAfterResampling) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g, {}, 0.05);
  int resamples = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    FlowModel model(g);
    const auto r = run_smc(make_plan(Process::linear_sde, 10), spec, 500, seed, model);
    for (const auto& tr : r.trace)
      if (tr.resampled) {
        ++resamples;
        for (double lw : tr.log_weights) EXPECT_EQ(lw, 0.0);
      }
    expect_consistent(r, spec, 500, model.calls());
  }
  EXPECT_GT(resamples, 0);
}

TEST(Smc, RejectsNonPositiveBeta) {
  const auto g = GaussianMixture::default_benchmark();
  auto spec = RewardSpec::rare_mode(g);
  spec.kl_temperature = 0.0;
  FlowModel model(g);
  EXPECT_THROW(run_smc(make_plan(Process::linear_sde, 10), spec, 100, 0, model), DomainError);
}

TEST(Code, LongIntervalIsBestOfCopies) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  const auto plan = make_plan(Process::linear_sde, 10);
  SamplerOptions opt;
  opt.n = 1;
  opt.k = 5;
  opt.interval = 20;
  FlowModel model(g);
  const auto r = run_code(plan, spec, 500, 4, model, opt);
  double best = -INFINITY;
  for (std::size_t j = 0; j < 5; ++j) {
    FlowModel m(g);
    const auto out = run_process(plan, initial_noise(4, 0, 2), {4, Stream::proposal, 0, particle_id(0, j)}, m);
    best = std::max(best, evaluate_reward(spec, out.x0));
  }
  EXPECT_EQ(r.best_reward, best);
  EXPECT_EQ(r.nfe_used, 1u + 5u * 9u);
}

TEST(Code, SingleCopyIsPlainTrajectory) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  const auto plan = make_plan(Process::vp_sde, 10);
  for (bool svdd : {false, true}) {
    SamplerOptions opt;
    opt.n = 1;
    opt.k = 1;
    FlowModel m1(g), m2(g);
    const auto r = svdd ? run_svdd(plan, spec, 500, 8, m1, opt) : run_code(plan, spec, 500, 8, m1, opt);
    const auto out = run_process(plan, initial_noise(8, 0, 2), {8, Stream::proposal, 0, particle_id(0, 0)}, m2);
    EXPECT_EQ(r.best_x, out.x0);
    EXPECT_EQ(r.nfe_used, 10u);
  }
}

TEST(Code, DerivedCopiesFillTheChainBudget) {
  EXPECT_EQ(detail::derived_k(250, 10), 27u);
  EXPECT_EQ(detail::derived_k(5, 1), 1u);
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  FlowModel model(g);
  const auto r = run_svdd(make_plan(Process::linear_sde, 10), spec, 500, 0, model);
  EXPECT_GT(r.nfe_used, 480u);
  expect_consistent(r, spec, 500, model.calls());
}

TEST(Svdd, EachStepKeepsTheBestCopy) {
  const auto spec = RewardSpec::rare_mode(GaussianMixture::default_benchmark());
  const auto plan = make_plan(Process::linear_sde, 10);
  const std::size_t k = 4;
  SamplerOptions opt;
  opt.n = 1;
  opt.k = static_cast<int>(k);
  RecordingOracle oracle;
  const std::uint64_t seed = 13;
  const auto r = run_svdd(plan, spec, 1 + k * 9, seed, oracle, opt);
  ASSERT_EQ(oracle.calls(), 1 + k * 9);
  // Calls 1 + s k .. 1 + (s + 1) k - 1 are the copies landing at grid point s + 1.
  for (int s = 0; s < 9; ++s) {
    std::vector<double> values;
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t c = 1 + static_cast<std::size_t>(s) * k + j;
      if (s < 8) {
        values.push_back(evaluate_reward(spec, plan_posterior_mean(plan, s + 1, oracle.xs[c], oracle.us[c])));
      } else {
        values.push_back(evaluate_reward(spec, advance(plan, 9, oracle.xs[c], oracle.us[c], Vec::Zero(2))));
      }
    }
    const std::size_t pick = 1 + static_cast<std::size_t>(s) * k + argmax_lowest(values);
    if (s < 8) {
      Node chosen{oracle.xs[pick], s + 1, oracle.us[pick], Vec(), 0.0};
      EXPECT_EQ(propose(plan, chosen, seed, particle_id(0, 0)), oracle.xs[1 + (s + 1) * k]) << s;
    } else {
      EXPECT_EQ(r.best_reward, *std::max_element(values.begin(), values.end()));
    }
  }
}

TEST(Rollover, QuotaCarriesForward) {
  RolloverLedger ledger({5, 5}, 0);
  ledger.close_step(0, 2);
  EXPECT_EQ(ledger.quota(1), 8u);
  EXPECT_TRUE(ledger.conserved());
  ledger.close_step(1, 6);
  EXPECT_EQ(ledger.forfeited(), 2u);
  EXPECT_TRUE(ledger.conserved());
  EXPECT_EQ(ledger.consumed() + ledger.forfeited(), ledger.total());
}

TEST(Rollover, TransitiveSurplus) {
  RolloverLedger ledger({3, 3, 3}, 1);
  ledger.close_step(0, 1);
  ledger.close_step(1, 1);
  EXPECT_EQ(ledger.quota(2), 7u);
  EXPECT_THROW(ledger.close_step(2, 8), InvariantError);
}

TEST(Rbf, EveryProposalImproves) {
  ScriptedOracle oracle;
  oracle.path = [](double t) { return Vec{{1.0 + t, 0.0}}; };
  const auto spec = RewardSpec::target_point(Vec::Zero(2));
  SamplerOptions opt;
  opt.n = 1;
  const auto r = run_rbf(make_plan(Process::linear_sde, 10), spec, 500, 0, oracle, opt);
  EXPECT_EQ(r.nfe_used, 10u);
  for (const auto& tr : r.trace) {
    EXPECT_TRUE(tr.improved);
    EXPECT_EQ(tr.consumed, 1u);
  }
  EXPECT_EQ(r.trace.back().forfeited, 499u - 9u);
}

TEST(Rbf, NoProposalImproves) {
  ScriptedOracle oracle;
  oracle.path = [](double t) { return Vec{{2.0 - t, 0.0}}; };
  const auto spec = RewardSpec::target_point(Vec::Zero(2));
  SamplerOptions opt;
  opt.n = 1;
  const auto r = run_rbf(make_plan(Process::linear_sde, 10), spec, 500, 0, oracle, opt);
  EXPECT_EQ(r.nfe_used, 500u);
  const auto quotas = uniform_split(499, 9);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_FALSE(r.trace[i].improved);
    EXPECT_EQ(r.per_step_consumption[i], quotas[i]);
  }
}

TEST(Rbf, FuzzBudgetAndConservation) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> steps_d(1, 12), extra_d(0, 150), chains_d(1, 4), proc_d(0, 4);
  for (int run = 0; run < 1000; ++run) {
    const int m = steps_d(rng);
    const std::size_t total = static_cast<std::size_t>(m) + static_cast<std::size_t>(extra_d(rng));
    SamplerOptions opt;
    opt.n = chains_d(rng);
    FlowModel model(g);
    const auto plan = make_plan(kAllProcesses[static_cast<std::size_t>(proc_d(rng))], m);
    const auto r = run_rbf(plan, spec, total, static_cast<std::uint64_t>(run), model, opt);
    expect_consistent(r, spec, total, model.calls());
    for (const auto& tr : r.trace)
      EXPECT_EQ(tr.consumed_total + tr.remaining_quota + tr.forfeited, tr.chain_budget);
  }
}

TEST(Sop, SingleBranchWithoutNoisingIsOde) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  SamplerOptions opt;
  opt.n_keep = 1;
  opt.k = 1;
  opt.sop_forward = 0;
  FlowModel m1(g), m2(g);
  const auto r = search_over_paths(make_plan(Process::linear_sde, 10), spec, 500, 6, m1, opt);
  const auto ode = run_process(make_plan(Process::linear_ode, 10), initial_noise(6, 0, 2), {6, Stream::proposal, 0, 0}, m2);
  EXPECT_TRUE(r.best_x.isApprox(ode.x0, 1e-12));
  EXPECT_EQ(r.nfe_used, 10u);
}

TEST(Sop, DefaultConfigurationStaysInBudget) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  for (std::size_t total : {10u, 25u, 100u, 500u}) {
    FlowModel model(g);
    const auto r = search_over_paths(make_plan(Process::vp_sde, 10), spec, total, 1, model);
    expect_consistent(r, spec, total, model.calls());
  }
}

TEST(Sop, ForwardKernelMatchesMarginal) {
  // Pushing N(0, I) data at t = 0.3 forward must give the t = 0.7 marginal.
  const auto a = eval_schedule(kLinear, 0.3), b = eval_schedule(kLinear, 0.7);
  const double var_from = a.alpha * a.alpha + a.sigma * a.sigma;
  const double var_to = b.alpha * b.alpha + b.sigma * b.sigma;
  const double ratio = b.alpha / a.alpha;
  const double kernel_var = b.sigma * b.sigma - ratio * ratio * a.sigma * a.sigma;
  EXPECT_NEAR(ratio * ratio * var_from + kernel_var, var_to, 1e-14);
  EXPECT_EQ(forward_kernel(kLinear, 0.3, 0.7, v2(1, 0), Vec::Zero(2)), ratio * v2(1, 0));
  EXPECT_THROW(forward_kernel(kLinear, 0.7, 0.3, v2(1, 0), Vec::Zero(2)), DomainError);
}

TEST(AllSamplers, BudgetSafetyAndDeterminism) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  for (SamplerKind kind : kAllSamplers)
    for (Process p : kAllProcesses)
      for (std::size_t total : {10u, 37u, 100u, 500u}) {
        const auto plan = make_plan(p, 10);
        FlowModel m1(g), m2(g);
        const auto a = run_sampler(kind, plan, spec, total, 21, m1);
        const auto b = run_sampler(kind, plan, spec, total, 21, m2);
        expect_consistent(a, spec, total, m1.calls());
        EXPECT_EQ(a.best_x, b.best_x) << sampler_name(kind);
        EXPECT_EQ(a.nfe_used, b.nfe_used);
      }
}

TEST(AllSamplers, BudgetBelowStepsIsRejected) {
  const auto g = GaussianMixture::default_benchmark();
  const auto spec = RewardSpec::rare_mode(g);
  for (SamplerKind kind : kAllSamplers) {
    FlowModel model(g);
    EXPECT_THROW(run_sampler(kind, make_plan(Process::linear_sde, 10), spec, 9, 0, model), BudgetError)
        << sampler_name(kind);
  }
}

TEST(AllSamplers, NamesRoundTrip) {
  for (SamplerKind k : kAllSamplers) EXPECT_EQ(parse_sampler(sampler_name(k)), k);
  EXPECT_FALSE(parse_sampler("beam").has_value());
}
