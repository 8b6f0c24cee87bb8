#pragma once

// Small random instances shared by the test binaries.

#include <memory>
#include <vector>

#include "fedse/nn.hpp"
#include "fedse/rng.hpp"
#include "fedse/trajectory.hpp"

namespace fedse::test {

inline nn::Matrix random_matrix(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  nn::Matrix m(rows, cols);
  for (double& v : m.data()) v = rng.normal(0.0, scale);
  return m;
}

/// d_in -> hidden -> hidden -> vocab with random weights and biases.
inline std::shared_ptr<const nn::BaseModel> random_base(std::size_t d_in, std::size_t hidden,
                                                        std::size_t vocab, Rng& rng) {
  const std::size_t dims[] = {d_in, hidden, hidden, vocab};
  std::vector<nn::DenseLayer> layers;
  for (int l = 0; l < 3; ++l) {
    nn::DenseLayer layer{random_matrix(dims[l + 1], dims[l], rng, 0.7), {}};
    for (std::size_t i = 0; i < dims[l + 1]; ++i) layer.bias.push_back(rng.normal(0.0, 0.3));
    layers.push_back(std::move(layer));
  }
  return std::make_shared<const nn::BaseModel>(std::move(layers));
}

/// Adapter with both A and B random (a fresh adapter has B = 0, which
/// would hide half of the gradient paths).
inline nn::LoraAdapter random_adapter(const std::vector<nn::LayerShape>& schema, std::size_t rank,
                                      double alpha, Rng& rng, double scale = 0.3) {
  auto a = nn::LoraAdapter::zeros(schema, rank, alpha);
  for (auto& p : a.layers()) {
    for (double& v : p.a.data()) v = rng.normal(0.0, scale);
    for (double& v : p.b.data()) v = rng.normal(0.0, scale);
  }
  return a;
}

/// Trajectories with dense random features, random masks (at least one
/// legal slot) and legal random actions.
inline std::vector<Trajectory> random_batch(std::size_t n, std::size_t d_in, std::size_t vocab,
                                            std::size_t max_len, Rng& rng) {
  std::vector<Trajectory> out;
  for (std::size_t i = 0; i < n; ++i) {
    Trajectory t;
    t.reward = 1;
    const std::size_t len = 1 + rng.below(max_len);
    for (std::size_t s = 0; s < len; ++s) {
      Step step;
      for (std::size_t j = 0; j < d_in; ++j) step.features.push_back(rng.normal(0.0, 1.0));
      step.mask.assign(vocab, 0);
      std::vector<ActionId> legal;
      for (std::size_t a = 0; a < vocab; ++a)
        if (rng.uniform() < 0.7) {
          step.mask[a] = 1;
          legal.push_back(static_cast<ActionId>(a));
        }
      if (legal.empty()) {
        step.mask[0] = 1;
        legal.push_back(0);
      }
      step.action = legal[rng.below(legal.size())];
      t.steps.push_back(std::move(step));
    }
    t.content_hash = content_hash(t.instruction, t.actions());
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace fedse::test
