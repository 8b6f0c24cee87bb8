#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "fedse/features.hpp"
#include "fedse/nn.hpp"
#include "fedse/trajectory.hpp"

namespace fedse::client {

struct RolloutConfig {
  std::size_t episodes_per_round = 256;
  double temperature = 1.0;
  std::size_t local_epochs = 16;
  std::size_t batch_size = 4;
  double lr = 3e-3;
  double momentum = 0.9;  // 0 = plain SGD

  /// Throws ContractViolation unless every budget is positive.
  void validate() const;
};

/// Round index under which the initial demonstrations enter a buffer.
inline constexpr int kSeedRound = -1;

/// Deduplicated cumulative training set of one client.
class ExperienceBuffer {
 public:
  /// `admit_failures` is only set by the no-filter ablation.
  explicit ExperienceBuffer(bool admit_failures = false) : admit_failures_(admit_failures) {}

  /// Set union by content hash. Entries already present keep their original
  /// round. Returns the number of new entries. Throws ContractViolation on a
  /// reward-0 trajectory unless failures are admitted.
  std::size_t accumulate(std::span<const Trajectory> incoming, int round);

  const std::vector<Trajectory>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(std::uint64_t hash) const { return round_added_.contains(hash); }
  std::optional<int> round_added(std::uint64_t hash) const;
  bool admits_failures() const { return admit_failures_; }

  void clear();

 private:
  bool admit_failures_;
  std::vector<Trajectory> entries_;  // insertion order
  std::unordered_map<std::uint64_t, int> round_added_;
};

/// Exactly the reward-1 trajectories, order preserved.
std::vector<Trajectory> filter_success(std::span<const Trajectory> trajectories);

/// `n` episodes on train-split tasks, actions sampled from the
/// temperature-scaled masked policy.
std::vector<Trajectory> explore(const nn::PolicyNet& policy, const env::FeatureEncoder& encoder,
                                EnvId env, std::size_t n, double temperature, std::uint64_t seed);

struct TrainResult {
  nn::LoraAdapter adapter;
  double final_loss = 0.0;  // mean per-trajectory loss over the final epoch
};

/// Mini-batch SGD on the adapter over a seeded shuffle of `data`; the base
/// model is never modified. Throws ContractViolation on empty data.
TrainResult local_train(const std::shared_ptr<const nn::BaseModel>& base, nn::LoraAdapter adapter,
                        std::span<const Trajectory> data, const RolloutConfig& cfg,
                        std::uint64_t seed);

/// How a client builds its training set each round.
enum class DataRegime {
  accumulate,     // explore, keep successes, union with history
  static_seed,    // train on the initial demonstrations only
  current_round,  // round 0: D0 ∪ successes; later rounds: fresh successes only
  unfiltered,     // explore, keep every trajectory
};

struct ClientState {
  std::uint32_t client_id = 0;
  EnvId env = EnvId::maze;
  ExperienceBuffer buffer;
  nn::LoraAdapter adapter;
  std::uint64_t rng_seed = 0;
  RolloutConfig config;
  DataRegime regime = DataRegime::accumulate;
  std::vector<Trajectory> seed_data;  // D0, already merged into the buffer
};

/// Buffer starts as D0 (recorded under kSeedRound).
ClientState make_client(std::uint32_t client_id, EnvId env, std::vector<Trajectory> seed_data,
                        nn::LoraAdapter initial_adapter, std::uint64_t rng_seed,
                        RolloutConfig config, DataRegime regime = DataRegime::accumulate);

struct ClientRoundReport {
  std::uint32_t client_id = 0;
  EnvId env = EnvId::maze;
  std::size_t n_explored = 0;
  std::size_t n_success = 0;
  std::size_t buffer_size = 0;
  double final_loss = 0.0;
  bool trained = false;
  std::uint64_t anchor_digest = 0;  // digest of the adapter the round started from
};

struct ClientRoundResult {
  nn::LoraAdapter adapter;
  ClientRoundReport report;
};

/// One client block of a communication round: re-anchor to the global
/// adapter, explore, filter, accumulate, train. An empty training set
/// returns the incoming adapter unchanged.
ClientRoundResult run_client_round(ClientState& state,
                                   const std::shared_ptr<const nn::BaseModel>& base,
                                   const env::FeatureEncoder& encoder,
                                   const nn::LoraAdapter& global_adapter, std::size_t round);

/// FNV-1a over rank, alpha and every A/B entry.
std::uint64_t adapter_digest(const nn::LoraAdapter& adapter);

}  // namespace fedse::client
