#include "fedse/rollout.hpp"

#include <algorithm>
#include <cmath>

#include "fedse/errors.hpp"

namespace fedse::env {

Trajectory run_episode(const FeatureEncoder& encoder, const Instruction& instruction,
                       const ActionChooser& choose) {
  auto env = make_environment(instruction.env, encoder.suite_ptr());
  auto [u, obs] = env->start(instruction);
  Trajectory traj;
  traj.instruction = u;
  std::vector<ActionId> history;
  const Observation* current = &env->observation();
  while (!env->done()) {
    Step step;
    step.features = encoder.encode(u, history, *current);
    step.mask = env->legal_mask();
    step.action = choose(*env, step.features, step.mask);
    const StepResult r = env->step(step.action);
    history.push_back(step.action);
    traj.steps.push_back(std::move(step));
    traj.reward = r.reward;
    current = &env->observation();
  }
  traj.content_hash = content_hash(traj.instruction, history);
  return traj;
}

Trajectory run_episode(const FeatureEncoder& encoder, const TaskInstance& task,
                       const ActionChooser& choose) {
  if (!seed_in_split(task.seed, task.split))
    throw ContractViolation("run_episode: seed outside its split range");
  return run_episode(encoder, encoder.suite().make_instruction(task), choose);
}

TaskInstance sample_task(EnvId env, Split split, Rng& rng) {
  const std::uint64_t begin = split == Split::train ? kTrainSeedBegin : kTestSeedBegin;
  const std::uint64_t end = split == Split::train ? kTrainSeedEnd : kTestSeedEnd;
  return TaskInstance{env, begin + rng.below(end - begin), split};
}

ActionChooser expert_chooser() {
  return [](const Environment& env, std::span<const double>, const ActionMask&) {
    return env.expert_action();
  };
}

Trajectory expert_rollout(const FeatureEncoder& encoder, const TaskInstance& task) {
  return run_episode(encoder, task, expert_chooser());
}

int expert_solution_length(const FeatureEncoder& encoder, const TaskInstance& task) {
  return static_cast<int>(expert_rollout(encoder, task).steps.size());
}

std::vector<TaskInstance> seed_task_pool(const FeatureEncoder& encoder, EnvId env, double coverage,
                                         std::uint64_t seed) {
  if (!(coverage > 0.0 && coverage <= 1.0))
    throw ContractViolation("seed dataset: coverage must lie in (0, 1]");
  Rng rng(derive_seed(seed, 0x5eedda7a, static_cast<std::uint64_t>(env)));
  struct Ranked {
    int length;
    TaskInstance task;
  };
  std::vector<Ranked> pool;
  pool.reserve(kSeedTaskPool);
  for (std::size_t i = 0; i < kSeedTaskPool; ++i) {
    const TaskInstance task = sample_task(env, Split::train, rng);
    pool.push_back({expert_solution_length(encoder, task), task});
  }
  std::stable_sort(pool.begin(), pool.end(), [](const Ranked& a, const Ranked& b) {
    return a.length != b.length ? a.length < b.length : a.task.seed < b.task.seed;
  });
  const auto keep = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::ceil(coverage * static_cast<double>(pool.size()))));
  std::vector<TaskInstance> tasks;
  for (std::size_t i = 0; i < keep; ++i) tasks.push_back(pool[i].task);
  return tasks;
}

std::vector<Trajectory> generate_seed_dataset(const FeatureEncoder& encoder, EnvId env,
                                              std::size_t n, double coverage, std::uint64_t seed) {
  auto tasks = seed_task_pool(encoder, env, coverage, seed);
  // Shuffle, then cycle if n exceeds the eligible pool.
  Rng rng(derive_seed(seed, 0x5eedd1c7, static_cast<std::uint64_t>(env)));
  for (std::size_t i = tasks.size(); i > 1; --i) std::swap(tasks[i - 1], tasks[rng.below(i)]);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(expert_rollout(encoder, tasks[i % tasks.size()]));
  return out;
}

int replay_reward(const std::shared_ptr<const EnvSuite>& suite, const Trajectory& trajectory) {
  auto env = make_environment(trajectory.instruction.env, suite);
  env->start(trajectory.instruction);
  int reward = 0;
  for (const auto& step : trajectory.steps) {
    if (env->done()) throw ContractViolation("replay: trajectory continues past episode end");
    reward = env->step(step.action).reward;
  }
  return reward;
}

}  // namespace fedse::env

namespace fedse {

ActionId greedy_action(std::span<const double> probs, const ActionMask& mask) {
  std::size_t best = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i)
    if (mask[i] && (best == probs.size() || probs[i] > probs[best])) best = i;
  if (best == probs.size()) throw ContractViolation("greedy_action: no legal action");
  return static_cast<ActionId>(best);
}

ActionId sample_action(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t last_positive = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = i;
    acc += probs[i];
    if (u < acc) return static_cast<ActionId>(i);
  }
  if (last_positive == probs.size()) throw ContractViolation("sample_action: empty distribution");
  return static_cast<ActionId>(last_positive);  // rounding slack at the top end
}

env::ActionChooser greedy_chooser(const nn::PolicyNet& net) {
  return [&net](const env::Environment&, std::span<const double> x, const ActionMask& mask) {
    return greedy_action(net.forward(x, mask), mask);
  };
}

env::ActionChooser sampling_chooser(const nn::PolicyNet& net, double temperature, Rng& rng) {
  if (!(temperature > 0.0)) throw ContractViolation("sampling_chooser: temperature must be > 0");
  return [&net, temperature, &rng](const env::Environment&, std::span<const double> x,
                                   const ActionMask& mask) {
    return sample_action(net.forward(x, mask, temperature), rng);
  };
}

env::ActionChooser uniform_chooser(Rng& rng) {
  return [&rng](const env::Environment&, std::span<const double>, const ActionMask& mask) {
    std::vector<ActionId> legal;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) legal.push_back(static_cast<ActionId>(i));
    return legal[rng.below(legal.size())];
  };
}

double evaluate(const nn::PolicyNet& net, const env::FeatureEncoder& encoder, EnvId env,
                std::size_t n_test, std::uint64_t seed) {
  if (n_test == 0) throw ContractViolation("evaluate: n_test must be positive");
  Rng rng(derive_seed(seed, 0xe7a1, static_cast<std::uint64_t>(env)));
  const auto choose = greedy_chooser(net);
  std::size_t successes = 0;
  for (std::size_t i = 0; i < n_test; ++i) {
    const auto task = env::sample_task(env, env::Split::test, rng);
    successes += static_cast<std::size_t>(env::run_episode(encoder, task, choose).reward);
  }
  return static_cast<double>(successes) / static_cast<double>(n_test);
}

}  // namespace fedse
