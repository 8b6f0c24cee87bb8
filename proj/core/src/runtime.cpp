#include "fedse/runtime.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "fedse/errors.hpp"
#include "fedse/rng.hpp"
#include "fedse/rollout.hpp"
#include "fedse/wire.hpp"

namespace fedse::runtime {

namespace {
constexpr std::uint64_t kClientStream = 0xc11e;
constexpr std::uint64_t kAdapterStream = 0xada9;
constexpr std::uint64_t kEvalStream = 0xe7a1;
}  // namespace

void RoundPlan::validate() const {
  if (clients.empty()) throw ContractViolation("RoundPlan: at least one client required");
  std::set<std::uint32_t> ids;
  for (const auto& c : clients)
    if (!ids.insert(c.client_id).second) throw ContractViolation("RoundPlan: duplicate client id");
  if (rank < 1) throw ContractViolation("RoundPlan: rank must be >= 1");
  if (!(alpha > 0.0)) throw ContractViolation("RoundPlan: alpha must be positive");
  if (eval_episodes == 0) throw ContractViolation("RoundPlan: eval_episodes must be >= 1");
  rollout.validate();
}

std::uint64_t client_seed(std::uint64_t master_seed, std::uint32_t client_id) {
  return derive_seed(master_seed, kClientStream, client_id);
}
std::uint64_t adapter_seed(std::uint64_t master_seed) {
  return derive_seed(master_seed, kAdapterStream);
}
std::uint64_t eval_seed(std::uint64_t master_seed) { return derive_seed(master_seed, kEvalStream); }

std::unique_ptr<Transport> make_transport(TransportKind kind, bool parallel, std::uint16_t port) {
  if (kind == TransportKind::tcp_loopback) return std::make_unique<TcpLoopbackTransport>(port);
  return std::make_unique<InProcessTransport>(parallel);
}

std::map<EnvId, double> evaluate_envs(const std::shared_ptr<const nn::BaseModel>& base,
                                      const nn::LoraAdapter& adapter,
                                      const env::FeatureEncoder& encoder,
                                      std::span<const EnvId> envs, std::size_t n_test,
                                      std::uint64_t seed) {
  const nn::PolicyNet net(base, adapter);
  std::map<EnvId, double> out;
  for (EnvId e : envs)
    if (!out.contains(e))
      out[e] = evaluate(net, encoder, e, n_test, derive_seed(seed, static_cast<std::uint64_t>(e)));
  return out;
}

Federation::Federation(RoundPlan plan, std::shared_ptr<const nn::BaseModel> base,
                       std::shared_ptr<const env::FeatureEncoder> encoder)
    : Federation(plan, std::move(base), std::move(encoder),
                 make_transport(plan.transport, plan.parallel_clients, plan.tcp_port)) {}

Federation::Federation(RoundPlan plan, std::shared_ptr<const nn::BaseModel> base,
                       std::shared_ptr<const env::FeatureEncoder> encoder,
                       std::unique_ptr<Transport> transport)
    : plan_(std::move(plan)),
      base_(std::move(base)),
      encoder_(std::move(encoder)),
      transport_(std::move(transport)) {
  plan_.validate();
  if (!base_ || !encoder_ || !transport_) throw ContractViolation("Federation: null component");
  if (base_->input_dim() != encoder_->dim())
    throw ContractViolation("Federation: base input dim does not match the feature encoder");
  const auto schema = base_->schema();
  // The wire carries f32, so the state every client sees is the quantized one.
  global_ = wire::quantize(
      nn::init_adapter(schema, plan_.rank, plan_.alpha, adapter_seed(plan_.master_seed)));

  auto descriptors = plan_.clients;
  std::sort(descriptors.begin(), descriptors.end(),
            [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  for (auto& d : descriptors)
    clients_.push_back(client::make_client(d.client_id, d.env, std::move(d.seed_data), global_,
                                           client_seed(plan_.master_seed, d.client_id),
                                           plan_.rollout, plan_.regime));
}

RoundReport Federation::run_round(std::size_t t) {
  if (t != next_round_)
    throw ContractViolation("run_round: expected round " + std::to_string(next_round_));
  const auto round = static_cast<std::uint32_t>(t);
  const std::size_t k = clients_.size();

  std::vector<client::ClientRoundReport> fragments(k);
  const ClientTask task = [&](std::size_t i, std::span<const std::uint8_t> bytes) {
    const auto msg = wire::decode_adapter(bytes);
    if (msg.meta.type != wire::MessageType::broadcast || msg.meta.round != round)
      throw RoundAborted("client: unexpected broadcast header");
    auto result = client::run_client_round(clients_[i], base_, *encoder_, msg.adapter, t);
    fragments[i] = result.report;
    return wire::encode_upload(result.adapter, round, clients_[i].client_id,
                               static_cast<std::uint32_t>(result.report.n_success));
  };

  Bytes broadcast = wire::encode_broadcast(global_, round);
  std::vector<Bytes> uploads = transport_->exchange(broadcast, k, task);

  // Barrier: exactly one valid upload per registered client for this round.
  if (uploads.size() != k)
    throw RoundAborted("round " + std::to_string(t) + ": expected " + std::to_string(k) +
                       " uploads, got " + std::to_string(uploads.size()));
  std::vector<server::Contribution> contributions;
  std::vector<std::size_t> upload_size(k, 0);
  for (const auto& bytes : uploads) {
    wire::Message msg;
    try {
      msg = wire::decode_adapter(bytes);
    } catch (const wire::WireError& e) {
      throw RoundAborted("round " + std::to_string(t) + ": " + e.what());
    }
    if (msg.meta.type != wire::MessageType::upload || msg.meta.round != round)
      throw RoundAborted("round " + std::to_string(t) + ": upload with wrong type or round");
    const auto it = std::find_if(clients_.begin(), clients_.end(), [&](const auto& c) {
      return c.client_id == msg.meta.client_id;
    });
    if (it == clients_.end())
      throw RoundAborted("round " + std::to_string(t) + ": upload from unknown client " +
                         std::to_string(msg.meta.client_id));
    const auto idx = static_cast<std::size_t>(it - clients_.begin());
    if (upload_size[idx] != 0)
      throw RoundAborted("round " + std::to_string(t) + ": duplicate upload from client " +
                         std::to_string(msg.meta.client_id));
    if (!msg.adapter.same_schema(global_))
      throw RoundAborted("round " + std::to_string(t) + ": upload schema mismatch");
    upload_size[idx] = bytes.size();
    contributions.push_back({msg.meta.client_id, std::move(msg.adapter), msg.meta.success_count});
  }

  RoundReport report;
  report.round = t;
  report.broadcast_digest = client::adapter_digest(wire::decode_adapter(broadcast).adapter);

  global_ = wire::quantize(server::aggregate(plan_.aggregation, std::move(contributions)));
  report.global_digest = client::adapter_digest(global_);

  std::vector<EnvId> envs;
  for (std::size_t i = 0; i < k; ++i) {
    const auto& f = fragments[i];
    report.clients.push_back({f.client_id, f.env, f.n_explored, f.n_success, f.buffer_size,
                              f.final_loss, f.trained, upload_size[i], f.anchor_digest});
    envs.push_back(f.env);
  }
  report.eval_success = evaluate_envs(base_, global_, *encoder_, envs, plan_.eval_episodes,
                                      eval_seed(plan_.master_seed));
  double sum = 0.0;
  for (const auto& [env, rate] : report.eval_success) sum += rate;
  report.mean_success = sum / static_cast<double>(report.eval_success.size());

  last_broadcast_ = std::move(broadcast);
  last_uploads_ = std::move(uploads);
  ++next_round_;
  return report;
}

TrainingResult run_training(const RoundPlan& plan, std::shared_ptr<const nn::BaseModel> base,
                            std::shared_ptr<const env::FeatureEncoder> encoder) {
  Federation fed(plan, std::move(base), std::move(encoder));
  TrainingResult result;
  for (std::size_t t = 0; t < plan.total_rounds; ++t) result.reports.push_back(fed.run_round(t));
  result.final_adapter = fed.global_adapter();
  return result;
}

}  // namespace fedse::runtime
