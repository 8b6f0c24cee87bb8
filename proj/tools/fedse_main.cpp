// fedse command-line entry point: run, sweep, verify-appendix.

#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "fedse/experiment.hpp"
#include "fedse/surrogate.hpp"

namespace fx = fedse::experiment;

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> mode, transport, out;
  std::optional<std::size_t> rounds, rank;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "key = value config file");
  cmd->add_option("--mode", o.mode, "fedse, local, centralized, fedavg_static, ablation_*");
  cmd->add_option("--rounds", o.rounds, "communication rounds T");
  cmd->add_option("--rank", o.rank, "adapter rank");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--transport", o.transport, "inproc or tcp")
      ->check(CLI::IsMember({"inproc", "tcp"}));
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
}

fx::ExperimentConfig resolve(const Overrides& o) {
  fx::ExperimentConfig c = o.config.empty() ? fx::ExperimentConfig{} : fx::ExperimentConfig::load(o.config);
  if (o.mode) c.set("mode", *o.mode);
  if (o.rounds) c.rounds = *o.rounds;
  if (o.rank) c.rank = *o.rank;
  if (o.seed) c.master_seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.transport) c.set("transport", *o.transport);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--set", "expected key=value");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  c.validate();
  return c;
}

int run(const Overrides& o) {
  const auto config = resolve(o);
  const auto result = fx::run_and_emit(config);
  std::printf("%s: final mean success %.3f (last 3 rounds), wrote %s\n", result.run_id.c_str(),
              fx::final_mean_success(result), config.out_dir.string().c_str());
  return 0;
}

int sweep(const Overrides& o, const std::string& ranks_text) {
  const auto config = resolve(o);
  std::vector<std::size_t> ranks;
  std::stringstream ss(ranks_text);
  for (std::string item; std::getline(ss, item, ',');) ranks.push_back(std::stoul(item));
  std::printf("%6s %14s %14s %12s\n", "rank", "final_success", "payload_bytes", "header_bytes");
  for (const auto& r : fx::run_rank_sweep(config, ranks))
    std::printf("%6zu %14.3f %14llu %12llu\n", r.rank, r.final_success,
                static_cast<unsigned long long>(r.payload_bytes),
                static_cast<unsigned long long>(r.header_bytes));
  return 0;
}

// Numerical checks of the surrogate lower bound on random enumerable MDPs.
int verify_appendix(std::uint64_t seed) {
  namespace sg = fedse::surrogate;
  fedse::Rng rng(seed);
  bool ok = true;
  auto report = [&](const char* name, bool pass, const std::string& detail) {
    std::printf("%-4s %-28s %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
    ok = ok && pass;
  };

  double worst_gap = INFINITY, worst_tight = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto mdp = sg::random_mdp(rng, false);
    const auto old_p = sg::random_policy(mdp, 1.0, rng);
    const auto new_p = sg::perturb(old_p, 0.5, rng);
    const auto b = sg::surrogate_bound(new_p, old_p, mdp);
    worst_gap = std::min(worst_gap, b.j - b.bound);
    const auto same = sg::surrogate_bound(old_p, old_p, mdp);
    worst_tight = std::max(worst_tight, std::abs(same.j - same.bound));
  }
  report("bound J >= bound", worst_gap >= -1e-12, "min(J - bound) = " + std::to_string(worst_gap));
  report("bound tight at identity", worst_tight <= 1e-12,
         "max |J - bound| = " + std::to_string(worst_tight));

  double worst_const = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto mdp = sg::random_mdp(rng, true);
    const auto old_p = sg::random_policy(mdp, 1.0, rng);
    const double c1 = sg::dropped_terms(sg::perturb(old_p, 0.5, rng), old_p, mdp);
    const double c2 = sg::dropped_terms(sg::perturb(old_p, 0.5, rng), old_p, mdp);
    worst_const = std::max(worst_const, std::abs(c1 - c2));
  }
  report("dropped terms constant", worst_const <= 1e-12,
         "max spread = " + std::to_string(worst_const));

  int improved = 0;
  double total = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto mdp = sg::random_mdp(rng, true);
    const auto step = sg::mle_step_improves(sg::random_policy(mdp, 1.0, rng), mdp, 1e-2);
    improved += step.j_after >= step.j_before - 1e-9;
    total += step.j_after - step.j_before;
  }
  report("success MLE improves J", improved >= 95 && total > 0,
         std::to_string(improved) + "/100, mean gain " + std::to_string(total / 100));
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated self-evolution with low-rank adapters"};
  app.require_subcommand(1);

  Overrides run_o, sweep_o;
  auto* run_cmd = app.add_subcommand("run", "run one study mode and write metric files");
  add_overrides(run_cmd, run_o);

  std::string ranks = "2,4,8,16";
  auto* sweep_cmd = app.add_subcommand("sweep", "fedse runs over several adapter ranks");
  add_overrides(sweep_cmd, sweep_o);
  sweep_cmd->add_option("--ranks", ranks, "comma-separated ranks");

  std::uint64_t verify_seed = 2024;
  auto* verify_cmd = app.add_subcommand("verify-appendix", "check the surrogate lower bound numerically");
  verify_cmd->add_option("--seed", verify_seed, "seed for the random instances");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return run(run_o);
    if (*sweep_cmd) return sweep(sweep_o, ranks);
    if (*verify_cmd) return verify_appendix(verify_seed);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fedse: error: %s\n", e.what());
    return 1;
  }
  return 0;
}
