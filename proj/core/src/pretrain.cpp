#include "fedse/pretrain.hpp"

#include <cmath>
#include <numeric>

#include "fedse/errors.hpp"
#include "fedse/rng.hpp"

namespace fedse::experiment {

namespace {

struct Grads {
  std::vector<nn::Matrix> w;
  std::vector<std::vector<double>> b;

  explicit Grads(const std::vector<nn::DenseLayer>& layers) {
    for (const auto& l : layers) {
      w.emplace_back(l.weight.rows(), l.weight.cols());
      b.emplace_back(l.bias.size(), 0.0);
    }
  }
  void zero() {
    for (auto& m : w) m.fill(0.0);
    for (auto& v : b) std::fill(v.begin(), v.end(), 0.0);
  }
};

// Accumulates the gradient of −log p(action) for one step.
void backprop_step(const std::vector<nn::DenseLayer>& layers, const Step& step, Grads& g) {
  std::vector<std::vector<double>> acts{step.features};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    std::vector<double> y = layers[l].bias;
    nn::multiply_add(layers[l].weight, acts.back(), y);
    if (l + 1 < layers.size())
      for (double& v : y) v = std::tanh(v);
    acts.push_back(std::move(y));
  }
  std::vector<double> delta = nn::masked_softmax(acts.back(), step.mask);
  delta[step.action] -= 1.0;
  for (std::size_t l = layers.size(); l-- > 0;) {
    nn::add_outer(g.w[l], 1.0, delta, acts[l]);
    for (std::size_t i = 0; i < delta.size(); ++i) g.b[l][i] += delta[i];
    if (l == 0) break;
    std::vector<double> prev(acts[l].size(), 0.0);
    nn::multiply_transposed_add(layers[l].weight, delta, prev);
    for (std::size_t i = 0; i < prev.size(); ++i) prev[i] *= 1.0 - acts[l][i] * acts[l][i];
    delta = std::move(prev);
  }
}

}  // namespace

nn::BaseModel init_base(std::size_t input_dim, std::size_t hidden_dim, std::size_t vocab_size,
                        std::uint64_t seed) {
  if (input_dim == 0 || hidden_dim == 0 || vocab_size == 0)
    throw ContractViolation("init_base: dimensions must be positive");
  Rng rng(seed);
  const std::size_t dims[] = {input_dim, hidden_dim, hidden_dim, vocab_size};
  std::vector<nn::DenseLayer> layers;
  for (std::size_t l = 0; l < 3; ++l) {
    nn::DenseLayer layer{nn::Matrix(dims[l + 1], dims[l]), std::vector<double>(dims[l + 1], 0.0)};
    const double std = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& v : layer.weight.data()) v = rng.normal(0.0, std);
    layers.push_back(std::move(layer));
  }
  return nn::BaseModel(std::move(layers));
}

std::shared_ptr<const nn::BaseModel> pretrain_base(std::span<const Trajectory> demonstrations,
                                                   std::size_t input_dim, std::size_t vocab_size,
                                                   const PretrainConfig& cfg, std::uint64_t seed) {
  if (demonstrations.empty()) throw ContractViolation("pretrain_base: no demonstrations");
  if (cfg.batch_size == 0) throw ContractViolation("pretrain_base: batch_size must be >= 1");
  auto layers = init_base(input_dim, cfg.hidden_dim, vocab_size, derive_seed(seed, 1)).layers();

  Grads grads(layers), velocity(layers);
  Rng rng(derive_seed(seed, 2));
  std::vector<std::size_t> order(demonstrations.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      grads.zero();
      for (std::size_t j = start; j < end; ++j)
        for (const Step& step : demonstrations[order[j]].steps) backprop_step(layers, step, grads);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (std::size_t l = 0; l < layers.size(); ++l) {
        auto w = layers[l].weight.data();
        auto gw = grads.w[l].data();
        auto vw = velocity.w[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) {
          vw[i] = cfg.momentum * vw[i] + gw[i] * inv;
          w[i] -= cfg.lr * vw[i];
        }
        for (std::size_t i = 0; i < layers[l].bias.size(); ++i) {
          velocity.b[l][i] = cfg.momentum * velocity.b[l][i] + grads.b[l][i] * inv;
          layers[l].bias[i] -= cfg.lr * velocity.b[l][i];
        }
      }
    }
    for (const auto& l : layers)
      if (!l.weight.all_finite()) throw NumericalError("pretrain_base: diverged");
  }
  return std::make_shared<const nn::BaseModel>(std::move(layers));
}

}  // namespace fedse::experiment
