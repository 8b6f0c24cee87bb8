#pragma once

#include <functional>
#include <span>
#include <vector>

#include "fedse/env.hpp"
#include "fedse/features.hpp"
#include "fedse/nn.hpp"
#include "fedse/rng.hpp"

namespace fedse::env {

/// Picks the next action given the live environment, encoded features and
/// legal mask. Learned policies ignore the environment; the expert uses it.
using ActionChooser =
    std::function<ActionId(const Environment&, std::span<const double>, const ActionMask&)>;

/// Plays one episode to completion and records every step.
Trajectory run_episode(const FeatureEncoder& encoder, const Instruction& instruction,
                       const ActionChooser& choose);
Trajectory run_episode(const FeatureEncoder& encoder, const TaskInstance& task,
                       const ActionChooser& choose);

/// Uniform draw from the split's seed range.
TaskInstance sample_task(EnvId env, Split split, Rng& rng);

ActionChooser expert_chooser();
Trajectory expert_rollout(const FeatureEncoder& encoder, const TaskInstance& task);
int expert_solution_length(const FeatureEncoder& encoder, const TaskInstance& task);

/// Number of candidate train tasks ranked by expert solution length when
/// building a seed dataset.
inline constexpr std::size_t kSeedTaskPool = 256;

/// Expert demonstrations restricted to the easiest `coverage` fraction of a
/// seeded pool of train tasks (ranked by expert solution length, ties by
/// seed). Throws ContractViolation unless 0 < coverage <= 1.
std::vector<Trajectory> generate_seed_dataset(const FeatureEncoder& encoder, EnvId env,
                                              std::size_t n, double coverage, std::uint64_t seed);

/// The train tasks a seed dataset may draw from, in rank order.
std::vector<TaskInstance> seed_task_pool(const FeatureEncoder& encoder, EnvId env, double coverage,
                                         std::uint64_t seed);

/// Re-executes a trajectory's actions from its instruction and returns the
/// reward the environment produces.
int replay_reward(const std::shared_ptr<const EnvSuite>& suite, const Trajectory& trajectory);

}  // namespace fedse::env

namespace fedse {

/// argmax over legal actions; ties go to the lowest index.
ActionId greedy_action(std::span<const double> probs, const ActionMask& mask);

/// Inverse-CDF draw from a probability vector.
ActionId sample_action(std::span<const double> probs, Rng& rng);

env::ActionChooser greedy_chooser(const nn::PolicyNet& net);
env::ActionChooser sampling_chooser(const nn::PolicyNet& net, double temperature, Rng& rng);
env::ActionChooser uniform_chooser(Rng& rng);

/// Greedy rollouts on `n_test` test-split tasks drawn from `seed`; returns
/// the fraction that end with reward 1. Throws ContractViolation if n_test == 0.
double evaluate(const nn::PolicyNet& net, const env::FeatureEncoder& encoder, EnvId env,
                std::size_t n_test, std::uint64_t seed);

}  // namespace fedse
