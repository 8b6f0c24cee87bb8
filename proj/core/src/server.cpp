#include "fedse/server.hpp"

#include <algorithm>

#include "fedse/errors.hpp"

namespace fedse::server {

namespace {

void check_schemas(std::span<const nn::LoraAdapter> adapters) {
  if (adapters.empty()) throw ContractViolation("aggregate: no adapters");
  for (const auto& a : adapters)
    if (!a.same_schema(adapters.front()))
      throw ContractViolation("aggregate: adapter schema mismatch");
}

// Rounding can push a mean of nearly equal values one ulp outside the
// range of its inputs; the exact mean never leaves it.
void clamp_to_hull(nn::Matrix& out, std::span<const nn::Matrix* const> inputs) {
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    double lo = inputs.front()->data()[i], hi = lo;
    for (const auto* m : inputs) {
      lo = std::min(lo, m->data()[i]);
      hi = std::max(hi, m->data()[i]);
    }
    o[i] = std::clamp(o[i], lo, hi);
  }
}

// out = Σ w_k m_k / denom over the selected inputs, left fold.
template <class Select>
nn::LoraAdapter combine(std::span<const nn::LoraAdapter> adapters,
                        std::span<const double> weights, double denom, Select select) {
  nn::LoraAdapter out = nn::LoraAdapter::zeros(adapters.front().schema(),
                                               adapters.front().rank(), adapters.front().alpha());
  for (std::size_t l = 0; l < out.layers().size(); ++l) {
    for (bool is_a : {true, false}) {
      nn::Matrix& dst = is_a ? out.layers()[l].a : out.layers()[l].b;
      std::vector<const nn::Matrix*> inputs;
      auto d = dst.data();
      for (std::size_t k = 0; k < adapters.size(); ++k) {
        if (!select(k)) continue;
        const nn::Matrix& src = is_a ? adapters[k].layers()[l].a : adapters[k].layers()[l].b;
        inputs.push_back(&src);
        const auto s = src.data();
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += weights[k] * s[i];
      }
      for (double& v : d) v /= denom;
      clamp_to_hull(dst, inputs);
    }
  }
  return out;
}

}  // namespace

nn::LoraAdapter aggregate_uniform(std::span<const nn::LoraAdapter> adapters) {
  check_schemas(adapters);
  const std::vector<double> ones(adapters.size(), 1.0);
  return combine(adapters, ones, static_cast<double>(adapters.size()),
                 [](std::size_t) { return true; });
}

nn::LoraAdapter aggregate_weighted(std::span<const nn::LoraAdapter> adapters,
                                   std::span<const std::uint32_t> counts) {
  check_schemas(adapters);
  if (counts.size() != adapters.size())
    throw ContractViolation("aggregate_weighted: one count per adapter required");
  std::uint64_t total = 0;
  for (auto c : counts) total += c;
  if (total == 0) throw ContractViolation("aggregate_weighted: all success counts are zero");
  if (std::all_of(counts.begin(), counts.end(), [&](auto c) { return c == counts.front(); }))
    return aggregate_uniform(adapters);
  std::vector<double> weights(counts.begin(), counts.end());
  return combine(adapters, weights, static_cast<double>(total),
                 [&](std::size_t k) { return counts[k] > 0; });
}

nn::LoraAdapter aggregate(AggregationMode mode, std::vector<Contribution> contributions) {
  std::sort(contributions.begin(), contributions.end(),
            [](const Contribution& a, const Contribution& b) { return a.client_id < b.client_id; });
  std::vector<nn::LoraAdapter> adapters;
  std::vector<std::uint32_t> counts;
  std::uint64_t total = 0;
  for (auto& c : contributions) {
    adapters.push_back(std::move(c.adapter));
    counts.push_back(c.success_count);
    total += c.success_count;
  }
  if (mode == AggregationMode::weighted && total > 0) return aggregate_weighted(adapters, counts);
  return aggregate_uniform(adapters);
}

void synchronize(const nn::LoraAdapter& global, std::span<client::ClientState> clients) {
  for (const auto& c : clients)
    if (c.adapter.rank() != 0 && !c.adapter.same_schema(global))
      throw ContractViolation("synchronize: client adapter schema mismatch");
  for (auto& c : clients) c.adapter = global;
}

std::uint64_t CommCostModel::payload_bytes(std::size_t rank) const {
  if (rank < 1) throw ContractViolation("comm_cost: rank must be >= 1");
  std::uint64_t dims = 0;
  for (const auto& s : schema) {
    if (s.d_in == 0 || s.d_out == 0) throw ContractViolation("comm_cost: zero dimension");
    dims += s.d_in + s.d_out;
  }
  return static_cast<std::uint64_t>(bytes_per_param) * rank * dims;
}

std::uint64_t comm_cost(const CommCostModel& model, std::size_t rank) {
  return model.payload_bytes(rank);
}

}  // namespace fedse::server
