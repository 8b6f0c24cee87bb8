#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedse/client.hpp"
#include "fedse/nn.hpp"

namespace fedse::server {

/// Elementwise mean of A and B matrices, folded left in the given order.
/// Throws ContractViolation on an empty list or mismatched schemas.
nn::LoraAdapter aggregate_uniform(std::span<const nn::LoraAdapter> adapters);

/// Elementwise Σ c_k φ_k / Σ c_k. Equal counts delegate to the uniform mean.
/// Throws ContractViolation when the counts are all zero or their number
/// differs from the number of adapters.
nn::LoraAdapter aggregate_weighted(std::span<const nn::LoraAdapter> adapters,
                                   std::span<const std::uint32_t> counts);

enum class AggregationMode { uniform, weighted };

/// One client's upload as seen by the server.
struct Contribution {
  std::uint32_t client_id = 0;
  nn::LoraAdapter adapter;
  std::uint32_t success_count = 0;
};

/// Sorts by client_id (the canonical summation order) and aggregates.
/// Weighted mode falls back to uniform when every success count is zero.
nn::LoraAdapter aggregate(AggregationMode mode, std::vector<Contribution> contributions);

/// Resets every client adapter to the global consensus.
void synchronize(const nn::LoraAdapter& global, std::span<client::ClientState> clients);

/// Communication volume of one adapter transfer.
struct CommCostModel {
  std::vector<nn::LayerShape> schema;
  std::size_t bytes_per_param = 4;

  /// bytes_per_param · rank · Σ (d_in + d_out). Throws for rank 0.
  std::uint64_t payload_bytes(std::size_t rank) const;
};

std::uint64_t comm_cost(const CommCostModel& model, std::size_t rank);

}  // namespace fedse::server
