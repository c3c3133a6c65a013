#pragma once

#include "flowsearch/samplers/bon.hpp"
#include "flowsearch/samplers/code.hpp"
#include "flowsearch/samplers/common.hpp"
#include "flowsearch/samplers/rbf.hpp"
#include "flowsearch/samplers/smc.hpp"
#include "flowsearch/samplers/sop.hpp"

namespace flowsearch {

template <class Oracle>
SearchResult run_sampler(SamplerKind kind, const StepPlan& plan, const RewardSpec& spec,
                         std::size_t total_nfe, std::uint64_t seed, Oracle& oracle,
                         const SamplerOptions& opt = {}) {
  switch (kind) {
    case SamplerKind::bon: return best_of_n(plan, spec, total_nfe, seed, oracle, opt);
    case SamplerKind::sop: return search_over_paths(plan, spec, total_nfe, seed, oracle, opt);
    case SamplerKind::smc: return run_smc(plan, spec, total_nfe, seed, oracle, opt);
    case SamplerKind::code: return run_code(plan, spec, total_nfe, seed, oracle, opt);
    case SamplerKind::svdd: return run_svdd(plan, spec, total_nfe, seed, oracle, opt);
    case SamplerKind::rbf: return run_rbf(plan, spec, total_nfe, seed, oracle, opt);
  }
  throw DomainError("run_sampler: unknown sampler");
}

}  // namespace flowsearch
