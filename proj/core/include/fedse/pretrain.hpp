#pragma once

#include <cstdint>
#include <memory>
#include <span>

#include "fedse/nn.hpp"
#include "fedse/trajectory.hpp"

namespace fedse::experiment {

struct PretrainConfig {
  std::size_t hidden_dim = 64;
  std::size_t epochs = 15;
  std::size_t batch_size = 16;
  double lr = 0.05;
  double momentum = 0.9;
};

/// Behavioral cloning of every base parameter on the pooled demonstrations,
/// for a fixed number of epochs. Weights start from a seeded scaled
/// Gaussian, biases from zero. The result is immutable.
std::shared_ptr<const nn::BaseModel> pretrain_base(std::span<const Trajectory> demonstrations,
                                                   std::size_t input_dim, std::size_t vocab_size,
                                                   const PretrainConfig& cfg, std::uint64_t seed);

/// Untrained network with the same initialization as pretrain_base.
nn::BaseModel init_base(std::size_t input_dim, std::size_t hidden_dim, std::size_t vocab_size,
                        std::uint64_t seed);

}  // namespace fedse::experiment
