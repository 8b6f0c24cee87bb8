#include "fedse/surrogate.hpp"

#include <algorithm>
#include <cmath>

#include "fedse/errors.hpp"

namespace fedse::surrogate {

namespace {

std::size_t power(std::size_t base, std::size_t exp) {
  std::size_t n = 1;
  for (std::size_t t = 0; t < exp; ++t) n *= base;
  return n;
}

std::size_t trajectory_count(const EnumerableMdp& mdp) { return power(mdp.n_actions, mdp.horizon); }

void check_policy(const TabularPolicy& p, const EnumerableMdp& mdp) {
  if (p.n_states != mdp.n_states || p.n_actions != mdp.n_actions || p.horizon != mdp.horizon ||
      p.logits.size() != mdp.n_states * mdp.n_actions * mdp.horizon)
    throw ContractViolation("surrogate: policy shape does not match the MDP");
  for (double v : p.logits)
    if (!std::isfinite(v)) throw ContractViolation("surrogate: non-finite logit");
}

// log-softmax of one logit row.
std::vector<double> log_probs(const TabularPolicy& p, std::size_t t, std::size_t s) {
  std::vector<double> out(p.n_actions);
  double hi = -INFINITY;
  for (std::size_t a = 0; a < p.n_actions; ++a) hi = std::max(hi, p.logit(t, s, a));
  double z = 0.0;
  for (std::size_t a = 0; a < p.n_actions; ++a) z += std::exp(p.logit(t, s, a) - hi);
  const double lz = hi + std::log(z);
  for (std::size_t a = 0; a < p.n_actions; ++a) out[a] = p.logit(t, s, a) - lz;
  return out;
}

}  // namespace

void EnumerableMdp::validate() const {
  if (n_states == 0 || n_states > kMaxStates) throw ContractViolation("mdp: 1..20 states");
  if (n_actions == 0 || n_actions > kMaxActions) throw ContractViolation("mdp: 1..4 actions");
  if (horizon == 0 || horizon > kMaxHorizon) throw ContractViolation("mdp: horizon 1..5");
  if (trajectory_count(*this) > kMaxTrajectories)
    throw ContractViolation("mdp: too many trajectories to enumerate");
  if (start >= n_states) throw ContractViolation("mdp: start out of range");
  if (next.size() != n_states * n_actions || reward.size() != n_states)
    throw ContractViolation("mdp: table sizes");
  for (auto s : next)
    if (s >= n_states) throw ContractViolation("mdp: transition out of range");
  for (int r : reward)
    if (r != 0 && r != 1) throw ContractViolation("mdp: rewards must be 0 or 1");
}

TabularPolicy TabularPolicy::uniform(const EnumerableMdp& mdp) {
  return {mdp.n_states, mdp.n_actions, mdp.horizon,
          std::vector<double>(mdp.n_states * mdp.n_actions * mdp.horizon, 0.0)};
}

std::vector<double> TabularPolicy::probs(std::size_t t, std::size_t s) const {
  auto lp = log_probs(*this, t, s);
  for (double& v : lp) v = std::exp(v);
  return lp;
}

std::vector<EnumeratedTrajectory> enumerate_trajectories(const EnumerableMdp& mdp) {
  mdp.validate();
  const std::size_t n = trajectory_count(mdp);
  std::vector<EnumeratedTrajectory> out;
  out.reserve(n);
  for (std::size_t code = 0; code < n; ++code) {
    EnumeratedTrajectory tau;
    tau.actions.resize(mdp.horizon);
    // Most significant digit first gives lexicographic order.
    std::size_t c = code;
    for (std::size_t t = mdp.horizon; t-- > 0;) {
      tau.actions[t] = c % mdp.n_actions;
      c /= mdp.n_actions;
    }
    tau.states.push_back(mdp.start);
    for (auto a : tau.actions) tau.states.push_back(mdp.step(tau.states.back(), a));
    tau.reward = mdp.reward[tau.states.back()];
    out.push_back(std::move(tau));
  }
  return out;
}

double log_prob(const TabularPolicy& policy, const EnumeratedTrajectory& tau) {
  double lp = 0.0;
  for (std::size_t t = 0; t < tau.actions.size(); ++t)
    lp += log_probs(policy, t, tau.states[t])[tau.actions[t]];
  return lp;
}

double expected_return_exact(const TabularPolicy& policy, const EnumerableMdp& mdp) {
  check_policy(policy, mdp);
  double j = 0.0;
  for (const auto& tau : enumerate_trajectories(mdp))
    if (tau.reward == 1) j += std::exp(log_prob(policy, tau));
  return j;
}

Estimate is_estimate(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                     const EnumerableMdp& mdp, std::size_t n_samples, std::uint64_t seed) {
  mdp.validate();
  check_policy(policy_new, mdp);
  check_policy(policy_old, mdp);
  if (n_samples == 0) throw ContractViolation("is_estimate: n_samples must be >= 1");
  Rng rng(seed);
  double sum = 0.0, sum_sq = 0.0;
  EnumeratedTrajectory tau;
  for (std::size_t i = 0; i < n_samples; ++i) {
    tau.actions.clear();
    tau.states.assign(1, mdp.start);
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
      const auto p = policy_old.probs(t, tau.states.back());
      const double u = rng.uniform();
      std::size_t a = 0;
      double acc = p[0];
      while (u >= acc && a + 1 < p.size()) acc += p[++a];
      tau.actions.push_back(a);
      tau.states.push_back(mdp.step(tau.states.back(), a));
    }
    tau.reward = mdp.reward[tau.states.back()];
    const double lp_old = log_prob(policy_old, tau);
    if (!std::isfinite(lp_old))
      throw NumericalError("is_estimate: sampled trajectory has zero probability under π_old");
    const double w = tau.reward ? std::exp(log_prob(policy_new, tau) - lp_old) : 0.0;
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(n_samples);
  const double mean = sum / n;
  const double var = n > 1 ? std::max(0.0, (sum_sq - n * mean * mean) / (n - 1)) : 0.0;
  return {mean, std::sqrt(var)};
}

BoundResult surrogate_bound(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                            const EnumerableMdp& mdp) {
  check_policy(policy_new, mdp);
  check_policy(policy_old, mdp);
  BoundResult r;
  for (const auto& tau : enumerate_trajectories(mdp)) {
    const double lp_new = log_prob(policy_new, tau);
    const double lp_old = log_prob(policy_old, tau);
    if (!std::isfinite(lp_old) || !std::isfinite(lp_new))
      throw NumericalError("surrogate_bound: zero-support trajectory");
    if (tau.reward == 0) continue;
    const double p_old = std::exp(lp_old);
    r.j += std::exp(lp_new);
    r.bound += p_old + p_old * (lp_new - lp_old);
  }
  return r;
}

double dropped_terms(const TabularPolicy& policy_new, const TabularPolicy& policy_old,
                     const EnumerableMdp& mdp) {
  const double bound = surrogate_bound(policy_new, policy_old, mdp).bound;
  double kept = 0.0;
  for (const auto& tau : enumerate_trajectories(mdp))
    if (tau.reward == 1) kept += std::exp(log_prob(policy_old, tau)) * log_prob(policy_new, tau);
  return bound - kept;
}

std::vector<double> success_loglik_gradient(const TabularPolicy& policy,
                                            const TabularPolicy& policy_old,
                                            const EnumerableMdp& mdp) {
  check_policy(policy, mdp);
  check_policy(policy_old, mdp);
  const auto taus = enumerate_trajectories(mdp);
  std::vector<double> w(taus.size(), 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i)
    if (taus[i].reward == 1) z += w[i] = std::exp(log_prob(policy_old, taus[i]));
  if (!(z > 0.0))
    throw ContractViolation("mle_step: no successful trajectory has positive probability");

  // ∂ log π(τ) / ∂ logit(t, s_t, ·) = onehot(a_t) − softmax(logit(t, s_t, ·))
  std::vector<double> grad(policy.logits.size(), 0.0);
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (w[i] == 0.0) continue;
    const double wi = w[i] / z;
    for (std::size_t t = 0; t < mdp.horizon; ++t) {
      const std::size_t s = taus[i].states[t];
      const auto p = policy.probs(t, s);
      const std::size_t row = (t * mdp.n_states + s) * mdp.n_actions;
      for (std::size_t a = 0; a < mdp.n_actions; ++a)
        grad[row + a] += wi * ((a == taus[i].actions[t] ? 1.0 : 0.0) - p[a]);
    }
  }
  return grad;
}

MleStep mle_step_improves(const TabularPolicy& policy_old, const EnumerableMdp& mdp, double lr) {
  if (!(lr >= 0.0)) throw ContractViolation("mle_step: lr must be >= 0");
  const auto grad = success_loglik_gradient(policy_old, policy_old, mdp);
  MleStep out{expected_return_exact(policy_old, mdp), 0.0, policy_old};
  for (std::size_t i = 0; i < grad.size(); ++i) out.policy.logits[i] += lr * grad[i];
  out.j_after = expected_return_exact(out.policy, mdp);
  return out;
}

std::vector<double> mle_iterate(TabularPolicy policy, const EnumerableMdp& mdp, double lr,
                                std::size_t steps) {
  std::vector<double> js;
  js.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    auto step = mle_step_improves(policy, mdp, lr);
    policy = std::move(step.policy);
    js.push_back(step.j_after);
  }
  return js;
}

EnumerableMdp random_mdp(Rng& rng, bool require_success) {
  for (;;) {
    EnumerableMdp m;
    m.n_actions = 2 + rng.below(kMaxActions - 1);
    // Longest horizon that keeps the enumeration within limits.
    std::size_t max_h = 1;
    while (max_h < kMaxHorizon && power(m.n_actions, max_h + 1) <= kMaxTrajectories)
      ++max_h;
    m.horizon = 2 + rng.below(max_h - 1);
    m.n_states = 3 + rng.below(kMaxStates - 2);
    m.start = rng.below(m.n_states);
    m.next.resize(m.n_states * m.n_actions);
    for (auto& s : m.next) s = rng.below(m.n_states);
    m.reward.resize(m.n_states);
    for (auto& r : m.reward) r = rng.uniform() < 0.3 ? 1 : 0;
    if (!require_success) return m;
    for (const auto& tau : enumerate_trajectories(m))
      if (tau.reward == 1) return m;
  }
}

TabularPolicy random_policy(const EnumerableMdp& mdp, double scale, Rng& rng) {
  auto p = TabularPolicy::uniform(mdp);
  for (double& v : p.logits) v = rng.normal(0.0, scale);
  return p;
}

TabularPolicy perturb(const TabularPolicy& policy, double scale, Rng& rng) {
  auto p = policy;
  for (double& v : p.logits) v += rng.normal(0.0, scale);
  return p;
}

}  // namespace fedse::surrogate
