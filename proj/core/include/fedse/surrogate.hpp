#pragma once

#include <cstdint>
#include <vector>

#include "fedse/rng.hpp"

namespace fedse::surrogate {

inline constexpr std::size_t kMaxStates = 20;
inline constexpr std::size_t kMaxActions = 4;
inline constexpr std::size_t kMaxHorizon = 5;
inline constexpr std::size_t kMaxTrajectories = 1024;

/// Finite-horizon deterministic MDP small enough to enumerate. Every episode
/// lasts exactly `horizon` steps from `start`; the reward is 1 iff the final
/// state is rewarding.
struct EnumerableMdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t horizon = 0;
  std::size_t start = 0;
  std::vector<std::size_t> next;  // next[s * n_actions + a]
  std::vector<int> reward;        // per state, 0 or 1

  std::size_t step(std::size_t s, std::size_t a) const { return next[s * n_actions + a]; }

  /// Throws ContractViolation outside the enumerable limits or on a
  /// malformed table.
  void validate() const;
};

/// Time-indexed softmax policy: logits for every (step, state) pair.
struct TabularPolicy {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t horizon = 0;
  std::vector<double> logits;  // [(t * n_states + s) * n_actions + a]

  static TabularPolicy uniform(const EnumerableMdp& mdp);

  double& logit(std::size_t t, std::size_t s, std::size_t a) {
    return logits[(t * n_states + s) * n_actions + a];
  }
  double logit(std::size_t t, std::size_t s, std::size_t a) const {
    return logits[(t * n_states + s) * n_actions + a];
  }
  std::vector<double> probs(std::size_t t, std::size_t s) const;
};

struct EnumeratedTrajectory {
  std::vector<std::size_t> actions;
  std::vector<std::size_t> states;  // horizon + 1 entries, states[0] = start
  int reward = 0;
};

/// All n_actions^horizon action sequences in lexicographic order.
std::vector<EnumeratedTrajectory> enumerate_trajectories(const EnumerableMdp& mdp);

double log_prob(const TabularPolicy& policy, const EnumeratedTrajectory& tau);

/// Σ_τ p(τ) R(τ) by full enumeration.
double expected_return_exact(const TabularPolicy& policy, const EnumerableMdp& mdp);

struct Estimate {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation of the weighted returns
};

/// (1/n) Σ [π_new(τ_i)/π_old(τ_i)] R(τ_i) with τ_i ~ π_old. Throws
/// NumericalError if a sampled trajectory has zero probability under π_old.
Estimate is_estimate(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                     const EnumerableMdp& mdp, std::size_t n_samples, std::uint64_t seed);

struct BoundResult {
  double j = 0.0;      // exact return of π_new
  double bound = 0.0;  // E_old[R] + E_old[R log(π_new/π_old)]
};

BoundResult surrogate_bound(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                            const EnumerableMdp& mdp);

/// bound − E_old[R log π_new]: the part of the bound that the derivation
/// drops before maximizing. Should not depend on π_new.
double dropped_terms(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                     const EnumerableMdp& mdp);

/// Exact gradient of E_{τ~D+}[log π(τ)] with D+ the successes weighted by
/// π_old conditioned on R = 1. Throws ContractViolation if no success has
/// positive probability under π_old.
std::vector<double> success_loglik_gradient(const TabularPolicy& policy,
                                            const TabularPolicy& policy_old,
                                            const EnumerableMdp& mdp);

struct MleStep {
  double j_before = 0.0;
  double j_after = 0.0;
  TabularPolicy policy;  // after the step
};

/// One gradient-ascent step of size lr on the success log-likelihood.
MleStep mle_step_improves(const TabularPolicy& policy_old, const EnumerableMdp& mdp, double lr);

/// Repeats mle_step_improves, re-conditioning on the current policy each
/// time. Returns J after every step.
std::vector<double> mle_iterate(TabularPolicy policy, const EnumerableMdp& mdp, double lr,
                                std::size_t steps);

// --- random instances ------------------------------------------------------

/// Random enumerable MDP. With `require_success` the generator retries until
/// some action sequence earns reward 1.
EnumerableMdp random_mdp(Rng& rng, bool require_success = true);

/// Logits drawn from N(0, scale²).
TabularPolicy random_policy(const EnumerableMdp& mdp, double scale, Rng& rng);

/// Adds N(0, scale²) noise to every logit.
TabularPolicy perturb(const TabularPolicy& policy, double scale, Rng& rng);

}  // namespace fedse::surrogate
