#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "fedse/client.hpp"
#include "fedse/features.hpp"
#include "fedse/nn.hpp"
#include "fedse/pretrain.hpp"
#include "fedse/runtime.hpp"

namespace fedse::experiment {

enum class Mode {
  fedse,
  local,
  centralized,
  fedavg_static,
  ablation_no_history,
  ablation_no_filter,
  ablation_weighted,
};

std::string to_string(Mode m);
/// Throws ContractViolation for an unknown name.
Mode parse_mode(const std::string& name);
bool is_federated(Mode m);

/// Every knob of a study. Text form is one `key = value` per line; `#`
/// starts a comment.
///
///   mode            fedse | local | centralized | fedavg_static |
///                   ablation_no_history | ablation_no_filter | ablation_weighted
///   clients         comma list of environments, one per client (maze,wordle,craft)
///   rounds          T
///   rank, alpha     adapter shape
///   seed            master seed
///   eval_episodes   test tasks per environment
///   out             output directory
///   transport       inproc | tcp
///   parallel        0 | 1, run clients on threads
///   episodes_per_round, temperature, local_epochs, batch_size, lr, momentum
///   seed_episodes, seed_coverage          size and coverage of D0
///   hidden_dim, pretrain_epochs, pretrain_lr, pretrain_batch, pretrain_momentum
struct ExperimentConfig {
  Mode mode = Mode::fedse;
  std::vector<EnvId> clients{EnvId::maze, EnvId::wordle, EnvId::craft};
  std::size_t rounds = 10;
  std::size_t rank = 8;
  double alpha = 16.0;
  std::uint64_t master_seed = 7;
  std::size_t eval_episodes = 50;
  std::filesystem::path out_dir = "out";
  runtime::TransportKind transport = runtime::TransportKind::in_process;
  bool parallel = false;

  client::RolloutConfig rollout;
  std::size_t seed_episodes = 32;
  double seed_coverage = 0.4;
  PretrainConfig pretrain;

  /// Sets one key from its text form. Throws ContractViolation for an
  /// unknown key or a malformed value.
  void set(const std::string& key, const std::string& value);

  /// Throws ContractViolation on an empty client list, rank 0 or an
  /// invalid rollout config.
  void validate() const;

  /// Every key in a fixed order; parse(snapshot()) reproduces the config.
  std::string snapshot() const;

  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::filesystem::path& path);
};

/// One row of metrics.csv.
struct MetricRecord {
  std::string run_id;
  std::string mode;
  std::size_t round = 0;
  std::string client;  // client id or "global"
  std::string env_id;  // environment name, "all" for global rows
  double success_rate = 0.0;
  std::size_t buffer_size = 0;
  double loss = 0.0;
  std::uint64_t bytes = 0;

  friend bool operator==(const MetricRecord&, const MetricRecord&) = default;
};

inline constexpr const char* kMetricsHeader =
    "run_id,mode,round,client,env_id,success_rate,buffer_size,loss,bytes";

/// Shared inputs of every mode in a study: world data, encoder, the
/// per-client seed datasets and the frozen base.
struct Study {
  std::shared_ptr<const env::EnvSuite> suite;
  std::shared_ptr<const env::FeatureEncoder> encoder;
  std::vector<std::vector<Trajectory>> seed_data;  // indexed like config.clients
  std::shared_ptr<const nn::BaseModel> base;
  std::uint64_t base_hash = 0;
};

/// D0 per client, then a base pretrained on their union. Depends only on
/// the seed, client list and the D0/pretrain keys, never on the mode.
Study prepare_study(const ExperimentConfig& config);

/// Called after every federated round with the live federation.
using RoundObserver =
    std::function<void(const runtime::RoundReport&, const runtime::Federation&)>;

struct RunResult {
  std::string run_id;
  std::vector<MetricRecord> records;
  std::vector<runtime::RoundReport> reports;  // federated modes only
  nn::LoraAdapter final_adapter;              // global / centralized / client 0 for local
  std::uint64_t base_hash_before = 0;
  std::uint64_t base_hash_after = 0;
};

RunResult run_mode(const ExperimentConfig& config, const Study& study,
                   const RoundObserver& observer = {});

/// Prepares the study, runs the mode and writes the metric files.
RunResult run_and_emit(const ExperimentConfig& config);

/// Mean over rounds [T-n, T) of the global-row success rate.
double final_mean_success(const RunResult& run, std::size_t last_n = 3);
/// Same, restricted to the client rows for `env`.
double final_env_success(const RunResult& run, EnvId env, std::size_t last_n = 3);

struct SweepRow {
  std::size_t rank = 0;
  double final_success = 0.0;
  std::uint64_t payload_bytes = 0;  // per client per round, one direction
  std::uint64_t header_bytes = 0;
};

/// One fedse run per rank on a shared base, each written under
/// out/rank_<r>/, plus out/sweep.csv.
std::vector<SweepRow> run_rank_sweep(const ExperimentConfig& config,
                                     const std::vector<std::size_t>& ranks);

// --- metric files ----------------------------------------------------------

/// Writes metrics.csv, metrics.jsonl, config.snapshot and base.hash into
/// `dir`, creating it if needed. Throws std::runtime_error naming the path
/// on IO failure.
void emit_metrics(const std::vector<MetricRecord>& records, const std::filesystem::path& dir,
                  const std::string& config_snapshot, std::uint64_t base_hash);

std::string to_csv(const std::vector<MetricRecord>& records);
std::vector<MetricRecord> parse_csv(const std::string& text);
std::vector<MetricRecord> read_csv(const std::filesystem::path& path);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);

}  // namespace fedse::experiment
