#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "fedse/client.hpp"
#include "fedse/features.hpp"
#include "fedse/nn.hpp"
#include "fedse/server.hpp"
#include "fedse/transport.hpp"

namespace fedse::runtime {

enum class TransportKind { in_process, tcp_loopback };

struct ClientDescriptor {
  std::uint32_t client_id = 0;
  EnvId env = EnvId::maze;
  std::vector<Trajectory> seed_data;  // D0_k
};

struct RoundPlan {
  std::size_t total_rounds = 10;
  std::vector<ClientDescriptor> clients;
  TransportKind transport = TransportKind::in_process;
  std::uint64_t master_seed = 0;

  client::RolloutConfig rollout;
  client::DataRegime regime = client::DataRegime::accumulate;
  server::AggregationMode aggregation = server::AggregationMode::uniform;
  std::size_t rank = 8;
  double alpha = 16.0;
  std::size_t eval_episodes = 50;
  bool parallel_clients = false;
  std::uint16_t tcp_port = 0;

  /// Throws ContractViolation for K = 0, duplicate client ids, rank 0 or
  /// eval_episodes = 0.
  void validate() const;
};

/// Seed streams derived from the master seed.
std::uint64_t client_seed(std::uint64_t master_seed, std::uint32_t client_id);
std::uint64_t adapter_seed(std::uint64_t master_seed);
std::uint64_t eval_seed(std::uint64_t master_seed);

struct ClientRow {
  std::uint32_t client_id = 0;
  EnvId env = EnvId::maze;
  std::size_t n_explored = 0;
  std::size_t n_success = 0;
  std::size_t buffer_size = 0;
  double final_loss = 0.0;
  bool trained = false;
  std::size_t upload_bytes = 0;
  std::uint64_t anchor_digest = 0;  // adapter the client started the round from
};

struct RoundReport {
  std::size_t round = 0;
  std::vector<ClientRow> clients;              // ascending client_id
  std::map<EnvId, double> eval_success;        // global adapter, greedy, test split
  double mean_success = 0.0;
  std::uint64_t broadcast_digest = 0;          // digest of the decoded broadcast
  std::uint64_t global_digest = 0;             // digest of the aggregate
};

/// Raised when a round cannot aggregate: a malformed, duplicated, missing or
/// foreign upload. Nothing is aggregated in that case.
class RoundAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Server plus K clients, advancing one communication round at a time.
class Federation {
 public:
  /// Builds the transport named in the plan.
  Federation(RoundPlan plan, std::shared_ptr<const nn::BaseModel> base,
             std::shared_ptr<const env::FeatureEncoder> encoder);
  /// Uses a caller-provided transport.
  Federation(RoundPlan plan, std::shared_ptr<const nn::BaseModel> base,
             std::shared_ptr<const env::FeatureEncoder> encoder,
             std::unique_ptr<Transport> transport);

  /// broadcast φ_t → client rounds → barrier on K decoded uploads →
  /// aggregate → evaluate. Rounds must be run in order.
  RoundReport run_round(std::size_t t);

  const nn::LoraAdapter& global_adapter() const { return global_; }
  std::span<const client::ClientState> clients() const { return clients_; }
  const RoundPlan& plan() const { return plan_; }

  /// Encoded messages of the last completed round.
  const Bytes& last_broadcast() const { return last_broadcast_; }
  const std::vector<Bytes>& last_uploads() const { return last_uploads_; }

 private:
  RoundPlan plan_;
  std::shared_ptr<const nn::BaseModel> base_;
  std::shared_ptr<const env::FeatureEncoder> encoder_;
  std::unique_ptr<Transport> transport_;
  std::vector<client::ClientState> clients_;
  nn::LoraAdapter global_;
  std::size_t next_round_ = 0;
  Bytes last_broadcast_;
  std::vector<Bytes> last_uploads_;
};

std::unique_ptr<Transport> make_transport(TransportKind kind, bool parallel, std::uint16_t port);

/// Success rate per environment for `adapter`, greedy on the test split.
std::map<EnvId, double> evaluate_envs(const std::shared_ptr<const nn::BaseModel>& base,
                                      const nn::LoraAdapter& adapter,
                                      const env::FeatureEncoder& encoder,
                                      std::span<const EnvId> envs, std::size_t n_test,
                                      std::uint64_t seed);

struct TrainingResult {
  std::vector<RoundReport> reports;
  nn::LoraAdapter final_adapter;
};

/// Runs rounds 0..T-1. T = 0 returns no reports and the initial adapter.
TrainingResult run_training(const RoundPlan& plan, std::shared_ptr<const nn::BaseModel> base,
                            std::shared_ptr<const env::FeatureEncoder> encoder);

}  // namespace fedse::runtime
