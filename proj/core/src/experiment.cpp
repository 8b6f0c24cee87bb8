#include "fedse/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "fedse/errors.hpp"
#include "fedse/rng.hpp"
#include "fedse/rollout.hpp"
#include "fedse/wire.hpp"

namespace fedse::experiment {

namespace {

constexpr std::uint64_t kSeedDataStream = 0xd0;
constexpr std::uint64_t kPretrainStream = 0xba5e;
constexpr std::uint64_t kTrainStream = 2;

const std::pair<Mode, const char*> kModeNames[] = {
    {Mode::fedse, "fedse"},
    {Mode::local, "local"},
    {Mode::centralized, "centralized"},
    {Mode::fedavg_static, "fedavg_static"},
    {Mode::ablation_no_history, "ablation_no_history"},
    {Mode::ablation_no_filter, "ablation_no_filter"},
    {Mode::ablation_weighted, "ablation_weighted"},
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [p, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc{} || p != end)
    throw ContractViolation("config: bad value for " + key + ": '" + value + "'");
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  return static_cast<std::size_t>(parse_number<std::uint64_t>(key, value));
}

std::string run_id_for(const ExperimentConfig& c) {
  return to_string(c.mode) + "-r" + std::to_string(c.rank) + "-s" + std::to_string(c.master_seed);
}

// Global row aggregates; success is the mean over environments of the
// per-environment mean over clients.
MetricRecord global_row(const std::string& run_id, Mode mode, std::size_t round,
                        const std::vector<MetricRecord>& client_rows) {
  std::map<std::string, std::pair<double, int>> per_env;
  MetricRecord g{run_id, to_string(mode), round, "global", "all", 0.0, 0, 0.0, 0};
  for (const auto& r : client_rows) {
    auto& [sum, n] = per_env[r.env_id];
    sum += r.success_rate;
    ++n;
    g.buffer_size += r.buffer_size;
    g.loss += r.loss;
  }
  for (const auto& [env, acc] : per_env) g.success_rate += acc.first / acc.second;
  g.success_rate /= static_cast<double>(per_env.size());
  g.loss /= static_cast<double>(client_rows.size());
  return g;
}

client::DataRegime regime_for(Mode m) {
  switch (m) {
    case Mode::fedavg_static: return client::DataRegime::static_seed;
    case Mode::ablation_no_history: return client::DataRegime::current_round;
    case Mode::ablation_no_filter: return client::DataRegime::unfiltered;
    default: return client::DataRegime::accumulate;
  }
}

RunResult run_federated(const ExperimentConfig& config, const Study& study,
                        const RoundObserver& observer) {
  runtime::RoundPlan plan;
  plan.total_rounds = config.rounds;
  for (std::size_t k = 0; k < config.clients.size(); ++k)
    plan.clients.push_back({static_cast<std::uint32_t>(k), config.clients[k], study.seed_data[k]});
  plan.transport = config.transport;
  plan.master_seed = config.master_seed;
  plan.rollout = config.rollout;
  plan.regime = regime_for(config.mode);
  plan.aggregation = config.mode == Mode::ablation_weighted ? server::AggregationMode::weighted
                                                            : server::AggregationMode::uniform;
  plan.rank = config.rank;
  plan.alpha = config.alpha;
  plan.eval_episodes = config.eval_episodes;
  plan.parallel_clients = config.parallel;

  RunResult out;
  out.run_id = run_id_for(config);
  runtime::Federation fed(plan, study.base, study.encoder);
  for (std::size_t t = 0; t < config.rounds; ++t) {
    auto report = fed.run_round(t);
    if (observer) observer(report, fed);
    std::vector<MetricRecord> rows;
    for (const auto& c : report.clients)
      rows.push_back({out.run_id, to_string(config.mode), t, std::to_string(c.client_id),
                      std::string(fedse::to_string(c.env)), report.eval_success.at(c.env), c.buffer_size,
                      c.final_loss, c.upload_bytes});
    out.records.insert(out.records.end(), rows.begin(), rows.end());
    out.records.push_back(global_row(out.run_id, config.mode, t, rows));
    out.reports.push_back(std::move(report));
  }
  out.final_adapter = fed.global_adapter();
  return out;
}

// Local and centralized modes: no exploration and no communication; each
// "round" is one more local_train call on the static seed data.
RunResult run_isolated(const ExperimentConfig& config, const Study& study) {
  RunResult out;
  out.run_id = run_id_for(config);
  const auto schema = study.base->schema();
  const auto initial = wire::quantize(nn::init_adapter(
      schema, config.rank, config.alpha, runtime::adapter_seed(config.master_seed)));
  const std::uint64_t eval_seed = runtime::eval_seed(config.master_seed);
  const std::size_t k_count = config.clients.size();

  std::vector<nn::LoraAdapter> adapters;
  std::vector<Trajectory> pooled;
  if (config.mode == Mode::local) {
    adapters.assign(k_count, initial);
  } else {
    adapters.assign(1, initial);
    for (const auto& d : study.seed_data) pooled.insert(pooled.end(), d.begin(), d.end());
  }

  for (std::size_t t = 0; t < config.rounds; ++t) {
    std::vector<double> losses(adapters.size(), 0.0);
    for (std::size_t i = 0; i < adapters.size(); ++i) {
      const auto& data = config.mode == Mode::local ? study.seed_data[i] : pooled;
      if (data.empty()) continue;
      auto trained = client::local_train(
          study.base, adapters[i], data, config.rollout,
          derive_seed(runtime::client_seed(config.master_seed, static_cast<std::uint32_t>(i)), t,
                      kTrainStream));
      adapters[i] = std::move(trained.adapter);
      losses[i] = trained.final_loss;
    }
    std::map<EnvId, double> central_eval;
    if (config.mode == Mode::centralized)
      central_eval = runtime::evaluate_envs(study.base, adapters[0], *study.encoder,
                                            config.clients, config.eval_episodes, eval_seed);
    std::vector<MetricRecord> rows;
    for (std::size_t k = 0; k < k_count; ++k) {
      const EnvId env = config.clients[k];
      const std::size_t slot = config.mode == Mode::local ? k : 0;
      const double rate =
          config.mode == Mode::local
              ? runtime::evaluate_envs(study.base, adapters[k], *study.encoder,
                                       std::span(&env, 1), config.eval_episodes, eval_seed)
                    .at(env)
              : central_eval.at(env);
      rows.push_back({out.run_id, to_string(config.mode), t, std::to_string(k),
                      std::string(fedse::to_string(env)), rate, study.seed_data[k].size(), losses[slot], 0});
    }
    out.records.insert(out.records.end(), rows.begin(), rows.end());
    out.records.push_back(global_row(out.run_id, config.mode, t, rows));
  }
  out.final_adapter = adapters.front();
  return out;
}

}  // namespace

std::string to_string(Mode m) {
  for (const auto& [mode, name] : kModeNames)
    if (mode == m) return name;
  throw ContractViolation("unknown mode");
}

Mode parse_mode(const std::string& name) {
  for (const auto& [mode, n] : kModeNames)
    if (name == n) return mode;
  throw ContractViolation("unknown mode '" + name + "'");
}

bool is_federated(Mode m) { return m != Mode::local && m != Mode::centralized; }

// --- config ----------------------------------------------------------------

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  if (key == "mode") {
    mode = parse_mode(value);
  } else if (key == "clients") {
    clients.clear();
    std::stringstream ss(value);
    for (std::string item; std::getline(ss, item, ',');) clients.push_back(parse_env_id(trim(item)));
  } else if (key == "rounds") {
    rounds = parse_count(key, value);
  } else if (key == "rank") {
    rank = parse_count(key, value);
  } else if (key == "alpha") {
    alpha = parse_number<double>(key, value);
  } else if (key == "seed") {
    master_seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "eval_episodes") {
    eval_episodes = parse_count(key, value);
  } else if (key == "out") {
    out_dir = value;
  } else if (key == "transport") {
    if (value == "inproc") transport = runtime::TransportKind::in_process;
    else if (value == "tcp") transport = runtime::TransportKind::tcp_loopback;
    else throw ContractViolation("config: transport must be inproc or tcp");
  } else if (key == "parallel") {
    parallel = parse_count(key, value) != 0;
  } else if (key == "episodes_per_round") {
    rollout.episodes_per_round = parse_count(key, value);
  } else if (key == "temperature") {
    rollout.temperature = parse_number<double>(key, value);
  } else if (key == "local_epochs") {
    rollout.local_epochs = parse_count(key, value);
  } else if (key == "batch_size") {
    rollout.batch_size = parse_count(key, value);
  } else if (key == "lr") {
    rollout.lr = parse_number<double>(key, value);
  } else if (key == "momentum") {
    rollout.momentum = parse_number<double>(key, value);
  } else if (key == "seed_episodes") {
    seed_episodes = parse_count(key, value);
  } else if (key == "seed_coverage") {
    seed_coverage = parse_number<double>(key, value);
  } else if (key == "hidden_dim") {
    pretrain.hidden_dim = parse_count(key, value);
  } else if (key == "pretrain_epochs") {
    pretrain.epochs = parse_count(key, value);
  } else if (key == "pretrain_lr") {
    pretrain.lr = parse_number<double>(key, value);
  } else if (key == "pretrain_batch") {
    pretrain.batch_size = parse_count(key, value);
  } else if (key == "pretrain_momentum") {
    pretrain.momentum = parse_number<double>(key, value);
  } else {
    throw ContractViolation("config: unknown key '" + key + "'");
  }
}

void ExperimentConfig::validate() const {
  if (clients.empty()) throw ContractViolation("config: at least one client required");
  if (rank < 1) throw ContractViolation("config: rank must be >= 1");
  if (!(alpha > 0.0)) throw ContractViolation("config: alpha must be positive");
  if (eval_episodes == 0) throw ContractViolation("config: eval_episodes must be >= 1");
  if (!(seed_coverage > 0.0 && seed_coverage <= 1.0))
    throw ContractViolation("config: seed_coverage must lie in (0, 1]");
  if (pretrain.hidden_dim == 0 || pretrain.batch_size == 0)
    throw ContractViolation("config: hidden_dim and pretrain_batch must be >= 1");
  rollout.validate();
}

std::string ExperimentConfig::snapshot() const {
  std::string clients_text;
  for (std::size_t i = 0; i < clients.size(); ++i)
    clients_text += (i ? "," : "") + std::string(fedse::to_string(clients[i]));
  const std::pair<const char*, std::string> kv[] = {
      {"mode", to_string(mode)},
      {"clients", clients_text},
      {"rounds", std::to_string(rounds)},
      {"rank", std::to_string(rank)},
      {"alpha", format_double(alpha)},
      {"seed", std::to_string(master_seed)},
      {"eval_episodes", std::to_string(eval_episodes)},
      {"out", out_dir.string()},
      {"transport", transport == runtime::TransportKind::tcp_loopback ? "tcp" : "inproc"},
      {"parallel", parallel ? "1" : "0"},
      {"episodes_per_round", std::to_string(rollout.episodes_per_round)},
      {"temperature", format_double(rollout.temperature)},
      {"local_epochs", std::to_string(rollout.local_epochs)},
      {"batch_size", std::to_string(rollout.batch_size)},
      {"lr", format_double(rollout.lr)},
      {"momentum", format_double(rollout.momentum)},
      {"seed_episodes", std::to_string(seed_episodes)},
      {"seed_coverage", format_double(seed_coverage)},
      {"hidden_dim", std::to_string(pretrain.hidden_dim)},
      {"pretrain_epochs", std::to_string(pretrain.epochs)},
      {"pretrain_lr", format_double(pretrain.lr)},
      {"pretrain_batch", std::to_string(pretrain.batch_size)},
      {"pretrain_momentum", format_double(pretrain.momentum)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += std::string(k) + " = " + v + "\n";
  return out;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig c;
  std::istringstream in(text);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ContractViolation("config line " + std::to_string(line_no) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

// --- study -----------------------------------------------------------------

Study prepare_study(const ExperimentConfig& config) {
  config.validate();
  Study s;
  s.suite = env::EnvSuite::standard();
  s.encoder = std::make_shared<const env::FeatureEncoder>(s.suite);
  std::vector<Trajectory> pooled;
  for (std::size_t k = 0; k < config.clients.size(); ++k) {
    s.seed_data.push_back(env::generate_seed_dataset(
        *s.encoder, config.clients[k], config.seed_episodes, config.seed_coverage,
        derive_seed(config.master_seed, kSeedDataStream, k)));
    pooled.insert(pooled.end(), s.seed_data.back().begin(), s.seed_data.back().end());
  }
  s.base = pretrain_base(pooled, s.encoder->dim(), s.suite->actions().size, config.pretrain,
                         derive_seed(config.master_seed, kPretrainStream));
  s.base_hash = s.base->content_hash();
  return s;
}

RunResult run_mode(const ExperimentConfig& config, const Study& study,
                   const RoundObserver& observer) {
  config.validate();
  if (study.seed_data.size() != config.clients.size())
    throw ContractViolation("run_mode: study prepared for a different client list");
  const std::uint64_t before = study.base->content_hash();
  RunResult out = is_federated(config.mode) ? run_federated(config, study, observer)
                                            : run_isolated(config, study);
  out.base_hash_before = before;
  out.base_hash_after = study.base->content_hash();
  if (out.base_hash_after != before) throw NumericalError("run_mode: base parameters changed");
  return out;
}

RunResult run_and_emit(const ExperimentConfig& config) {
  const Study study = prepare_study(config);
  RunResult run = run_mode(config, study);
  emit_metrics(run.records, config.out_dir, config.snapshot(), study.base_hash);
  return run;
}

double final_mean_success(const RunResult& run, std::size_t last_n) {
  std::size_t max_round = 0;
  for (const auto& r : run.records) max_round = std::max(max_round, r.round);
  const std::size_t first = max_round + 1 > last_n ? max_round + 1 - last_n : 0;
  double sum = 0.0;
  int n = 0;
  for (const auto& r : run.records)
    if (r.client == "global" && r.round >= first) {
      sum += r.success_rate;
      ++n;
    }
  if (n == 0) throw ContractViolation("final_mean_success: no rounds recorded");
  return sum / n;
}

double final_env_success(const RunResult& run, EnvId env, std::size_t last_n) {
  std::size_t max_round = 0;
  for (const auto& r : run.records) max_round = std::max(max_round, r.round);
  const std::size_t first = max_round + 1 > last_n ? max_round + 1 - last_n : 0;
  const std::string name(fedse::to_string(env));
  double sum = 0.0;
  int n = 0;
  for (const auto& r : run.records)
    if (r.client != "global" && r.env_id == name && r.round >= first) {
      sum += r.success_rate;
      ++n;
    }
  if (n == 0) throw ContractViolation("final_env_success: no rows for " + name);
  return sum / n;
}

std::vector<SweepRow> run_rank_sweep(const ExperimentConfig& config,
                                     const std::vector<std::size_t>& ranks) {
  if (ranks.empty()) throw ContractViolation("run_rank_sweep: no ranks");
  const Study study = prepare_study(config);
  std::vector<SweepRow> rows;
  for (std::size_t r : ranks) {
    ExperimentConfig c = config;
    c.mode = Mode::fedse;
    c.rank = r;
    c.out_dir = config.out_dir / ("rank_" + std::to_string(r));
    const RunResult run = run_mode(c, study);
    emit_metrics(run.records, c.out_dir, c.snapshot(), study.base_hash);
    const auto schema = study.base->schema();
    rows.push_back({r, final_mean_success(run), wire::payload_bytes(schema, r),
                    wire::header_bytes(schema.size(), wire::MessageType::upload)});
  }
  std::filesystem::create_directories(config.out_dir);
  const auto path = config.out_dir / "sweep.csv";
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rank,final_success,payload_bytes,header_bytes\n";
  for (const auto& r : rows)
    out << r.rank << ',' << format_double(r.final_success) << ',' << r.payload_bytes << ','
        << r.header_bytes << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
  return rows;
}

}  // namespace fedse::experiment
