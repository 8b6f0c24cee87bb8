#include "fedse/client.hpp"

#include <numeric>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"
#include "fedse/rng.hpp"
#include "fedse/rollout.hpp"

namespace fedse::client {

namespace {
constexpr std::uint64_t kExploreStream = 1;
constexpr std::uint64_t kTrainStream = 2;
}  // namespace

void RolloutConfig::validate() const {
  if (episodes_per_round == 0 || local_epochs == 0 || batch_size == 0)
    throw ContractViolation("RolloutConfig: budgets must be positive");
  if (!(temperature > 0.0)) throw ContractViolation("RolloutConfig: temperature must be > 0");
  if (!(lr >= 0.0)) throw ContractViolation("RolloutConfig: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0))
    throw ContractViolation("RolloutConfig: momentum must lie in [0, 1)");
}

// --- ExperienceBuffer --------------------------------------------------------

std::size_t ExperienceBuffer::accumulate(std::span<const Trajectory> incoming, int round) {
  if (!admit_failures_)
    for (const auto& t : incoming)
      if (t.reward != 1)
        throw ContractViolation("accumulate: reward-0 trajectory offered to a success buffer");
  std::size_t added = 0;
  for (const auto& t : incoming) {
    if (round_added_.try_emplace(t.content_hash, round).second) {
      entries_.push_back(t);
      ++added;
    }
  }
  return added;
}

std::optional<int> ExperienceBuffer::round_added(std::uint64_t hash) const {
  const auto it = round_added_.find(hash);
  if (it == round_added_.end()) return std::nullopt;
  return it->second;
}

void ExperienceBuffer::clear() {
  entries_.clear();
  round_added_.clear();
}

std::vector<Trajectory> filter_success(std::span<const Trajectory> trajectories) {
  std::vector<Trajectory> out;
  for (const auto& t : trajectories)
    if (t.reward == 1) out.push_back(t);
  return out;
}

// --- exploration and training ----------------------------------------------

std::vector<Trajectory> explore(const nn::PolicyNet& policy, const env::FeatureEncoder& encoder,
                                EnvId env, std::size_t n, double temperature, std::uint64_t seed) {
  if (n == 0) throw ContractViolation("explore: n must be >= 1");
  Rng task_rng(derive_seed(seed, 0x7a51));
  Rng action_rng(derive_seed(seed, 0xac71));
  const auto choose = sampling_chooser(policy, temperature, action_rng);
  std::vector<Trajectory> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    out.push_back(env::run_episode(encoder, env::sample_task(env, env::Split::train, task_rng), choose));
  return out;
}

TrainResult local_train(const std::shared_ptr<const nn::BaseModel>& base, nn::LoraAdapter adapter,
                        std::span<const Trajectory> data, const RolloutConfig& cfg,
                        std::uint64_t seed) {
  if (data.empty()) throw ContractViolation("local_train: empty training set");
  cfg.validate();
  nn::PolicyNet net(base, std::move(adapter));
  nn::OptimizerState opt{cfg.momentum, {}};
  Rng rng(seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<const Trajectory*> batch;
  double epoch_loss = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
        batch.push_back(&data[order[j]]);
      const auto lg = nn::backward_adapter(net, batch);
      epoch_loss += lg.loss * static_cast<double>(batch.size());
      nn::optimizer_step(net.adapter(), lg.grads, opt, cfg.lr);
    }
  }
  return {std::move(net.adapter()), epoch_loss / static_cast<double>(data.size())};
}

// --- client round ----------------------------------------------------------

ClientState make_client(std::uint32_t client_id, EnvId env, std::vector<Trajectory> seed_data,
                        nn::LoraAdapter initial_adapter, std::uint64_t rng_seed,
                        RolloutConfig config, DataRegime regime) {
  config.validate();
  ClientState state{client_id, env, ExperienceBuffer(regime == DataRegime::unfiltered),
                    std::move(initial_adapter), rng_seed, config, regime, std::move(seed_data)};
  state.buffer.accumulate(state.seed_data, kSeedRound);
  return state;
}

ClientRoundResult run_client_round(ClientState& state,
                                   const std::shared_ptr<const nn::BaseModel>& base,
                                   const env::FeatureEncoder& encoder,
                                   const nn::LoraAdapter& global_adapter, std::size_t round) {
  if (!global_adapter.same_schema(state.adapter) && state.adapter.rank() != 0)
    throw ContractViolation("run_client_round: global adapter schema mismatch");

  // Re-anchor to the broadcast consensus.
  state.adapter = global_adapter;
  ClientRoundReport report;
  report.client_id = state.client_id;
  report.env = state.env;
  report.anchor_digest = adapter_digest(state.adapter);

  const auto t = static_cast<int>(round);
  if (state.regime != DataRegime::static_seed) {
    const nn::PolicyNet policy(base, state.adapter);
    const auto explored =
        explore(policy, encoder, state.env, state.config.episodes_per_round,
                state.config.temperature, derive_seed(state.rng_seed, round, kExploreStream));
    auto successes = filter_success(explored);
    report.n_explored = explored.size();
    report.n_success = successes.size();
    switch (state.regime) {
      case DataRegime::accumulate:
        state.buffer.accumulate(successes, t);
        break;
      case DataRegime::current_round:
        // Round 0 still trains on D0 ∪ successes; later rounds drop history.
        if (round > 0) state.buffer.clear();
        state.buffer.accumulate(successes, t);
        break;
      case DataRegime::unfiltered:
        state.buffer.accumulate(explored, t);
        break;
      case DataRegime::static_seed:
        break;
    }
  }
  report.buffer_size = state.buffer.size();

  if (state.buffer.empty()) return {state.adapter, report};

  auto trained = local_train(base, state.adapter, state.buffer.entries(), state.config,
                             derive_seed(state.rng_seed, round, kTrainStream));
  state.adapter = std::move(trained.adapter);
  report.final_loss = trained.final_loss;
  report.trained = true;
  return {state.adapter, report};
}

std::uint64_t adapter_digest(const nn::LoraAdapter& adapter) {
  Fnv1a64 h;
  h.u64(adapter.rank()).f64(adapter.alpha()).u64(adapter.layers().size());
  for (const auto& pair : adapter.layers()) {
    for (double v : pair.a.data()) h.f64(v);
    for (double v : pair.b.data()) h.f64(v);
  }
  return h.value();
}

}  // namespace fedse::client
