// Benchmark driver: run | sweep | ablate | diversity <config.json>
//
// Exit status: 0 success, 2 configuration error, 3 invariant violation.

#include "flowsearch/harness.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitInvariant = 3;

std::vector<std::size_t> parse_budgets(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const long long v = std::stoll(item, &pos);
      if (pos != item.size() || v < 1) throw std::invalid_argument(item);
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw flowsearch::ConfigError("--budgets", "not a positive integer: '" + item + "'");
    }
  }
  return out;
}

void emit(const std::vector<flowsearch::RunRecord>& rows, const std::string& path) {
  if (path.empty() || path == "-") {
    flowsearch::write_csv(std::cout, rows);
    return;
  }
  std::ofstream os(path);
  if (!os) throw flowsearch::ConfigError("out", "cannot open " + path);
  flowsearch::write_csv(os, rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reward-guided search over analytic flow models"};
  app.require_subcommand(1);

  std::string config_path, out_path, budgets_text;
  std::uint64_t seed_offset = 0;
  int jobs = 1;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed-offset", seed_offset, "added to every configured seed");
    sub->add_option("--out", out_path, "CSV output path; overrides the config's \"out\"");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  };
  auto* run = app.add_subcommand("run", "one record per seed");
  auto* sweep = app.add_subcommand("sweep", "one record per (budget, seed)");
  auto* ablate = app.add_subcommand("ablate", "all five processes under the same seeds");
  auto* diversity = app.add_subcommand("diversity", "branched-proposal diversity per seed");
  for (auto* sub : {run, sweep, ablate, diversity}) add_common(sub);
  sweep->add_option("--budgets", budgets_text, "comma-separated NFE budgets")
      ->default_str("50,100,300,500,1000");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    const auto cfg = flowsearch::load_config(config_path);
    const std::string dest = out_path.empty() ? cfg.out : out_path;
    std::vector<flowsearch::RunRecord> rows;
    if (*run) {
      rows = flowsearch::run_seeds(cfg, seed_offset, jobs);
    } else if (*sweep) {
      const auto budgets =
          budgets_text.empty() ? flowsearch::kDefaultBudgets : parse_budgets(budgets_text);
      rows = flowsearch::sweep(cfg, budgets, seed_offset, jobs);
    } else if (*ablate) {
      rows = flowsearch::ablate_interpolant(cfg, seed_offset, jobs);
    } else {
      rows = flowsearch::diversity_table(cfg, seed_offset, jobs);
    }
    emit(rows, dest);
  } catch (const flowsearch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const flowsearch::BudgetError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const flowsearch::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  } catch (const flowsearch::DomainError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return kExitInvariant;
  }
  return 0;
}
