#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fedse/matrix.hpp"
#include "fedse/trajectory.hpp"

namespace fedse::nn {

struct DenseLayer {
  Matrix weight;  // d_out x d_in
  std::vector<double> bias;
};

struct LayerShape {
  std::size_t d_out = 0;
  std::size_t d_in = 0;

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Frozen base parameters: input -> hidden -> hidden -> action logits,
/// tanh on the hidden layers. Immutable once constructed.
class BaseModel {
 public:
  explicit BaseModel(std::vector<DenseLayer> layers);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t input_dim() const { return layers_.front().weight.cols(); }
  std::size_t hidden_dim() const { return layers_.front().weight.rows(); }
  std::size_t output_dim() const { return layers_.back().weight.rows(); }
  std::vector<LayerShape> schema() const;

  /// FNV-1a over every weight and bias in layer order (little-endian f64).
  std::uint64_t content_hash() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// Low-rank pair for one layer: ΔW = (alpha / rank) · b · a.
struct LoraPair {
  Matrix a;  // rank x d_in
  Matrix b;  // d_out x rank

  friend bool operator==(const LoraPair&, const LoraPair&) = default;
};

/// Trainable low-rank adapter; one LoraPair per base layer, indexed by
/// layer position. All pairs share rank and alpha.
class LoraAdapter {
 public:
  LoraAdapter() = default;
  LoraAdapter(std::size_t rank, double alpha, std::vector<LoraPair> layers);

  static LoraAdapter zeros(std::span<const LayerShape> schema, std::size_t rank, double alpha);

  std::size_t rank() const { return rank_; }
  double alpha() const { return alpha_; }
  double scale() const { return alpha_ / static_cast<double>(rank_); }

  std::vector<LoraPair>& layers() { return layers_; }
  const std::vector<LoraPair>& layers() const { return layers_; }

  std::vector<LayerShape> schema() const;
  bool same_schema(const LoraAdapter& o) const;
  std::size_t parameter_count() const;

  friend bool operator==(const LoraAdapter&, const LoraAdapter&) = default;

 private:
  std::size_t rank_ = 0;
  double alpha_ = 0.0;
  std::vector<LoraPair> layers_;
};

/// ∂L/∂φ, shape-congruent with the adapter it was computed for.
struct AdapterGradients {
  std::vector<LoraPair> layers;

  static AdapterGradients zeros_like(const LoraAdapter& adapter);
  bool all_finite() const;
};

/// Base network with an attached adapter.
class PolicyNet {
 public:
  PolicyNet(std::shared_ptr<const BaseModel> base, LoraAdapter adapter);

  const BaseModel& base() const { return *base_; }
  const std::shared_ptr<const BaseModel>& base_ptr() const { return base_; }
  const LoraAdapter& adapter() const { return adapter_; }
  LoraAdapter& adapter() { return adapter_; }
  void set_adapter(LoraAdapter adapter);

  std::size_t input_dim() const { return base_->input_dim(); }
  std::size_t action_vocab_size() const { return base_->output_dim(); }

  std::vector<double> logits(std::span<const double> features) const;

  /// Masked softmax over logits / temperature.
  std::vector<double> forward(std::span<const double> features, const ActionMask& mask,
                              double temperature = 1.0) const;

 private:
  std::shared_ptr<const BaseModel> base_;
  LoraAdapter adapter_;
};

/// W·x + bias + scale·B·(A·x).
std::vector<double> lora_linear_forward(std::span<const double> x, const DenseLayer& layer,
                                        const LoraPair& lora, double scale);

/// Softmax restricted to legal entries; illegal entries are exactly 0.
/// Throws ContractViolation when the mask has no legal entry.
std::vector<double> masked_softmax(std::span<const double> logits, const ActionMask& mask,
                                   double temperature = 1.0);

using TrajectoryBatch = std::span<const Trajectory* const>;

/// −(1/|batch|) Σ_τ Σ_j log π(a_j | context_j).
double nll_loss(const PolicyNet& net, TrajectoryBatch batch);
double nll_loss(const PolicyNet& net, std::span<const Trajectory> batch);

struct LossAndGradients {
  double loss = 0.0;
  AdapterGradients grads;
};

/// Exact gradient of nll_loss with respect to the adapter only.
LossAndGradients backward_adapter(const PolicyNet& net, TrajectoryBatch batch);
LossAndGradients backward_adapter(const PolicyNet& net, std::span<const Trajectory> batch);

/// Plain SGD when momentum == 0, heavy-ball momentum otherwise.
struct OptimizerState {
  double momentum = 0.0;
  AdapterGradients velocity;  // lazily shaped on first step
};

void optimizer_step(LoraAdapter& adapter, const AdapterGradients& grads, OptimizerState& state,
                    double lr);

/// Gaussian(0, 0.02) A, zero B: a fresh adapter leaves the base untouched.
LoraAdapter init_adapter(std::span<const LayerShape> schema, std::size_t rank, double alpha,
                         std::uint64_t seed);

inline constexpr double kLoraInitStd = 0.02;

}  // namespace fedse::nn
