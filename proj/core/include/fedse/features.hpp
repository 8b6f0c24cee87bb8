#pragma once

#include <memory>
#include <span>
#include <vector>

#include "fedse/env.hpp"

namespace fedse::env {

inline constexpr std::size_t kDefaultHistoryWindow = 4;

/// Fixed-length encoding of the conditioning context (instruction, recent
/// actions, observation). The same dimension is used for every environment:
///
///   [env one-hot | maze block | wordle block | craft block | history]
///
/// Only the active environment's block is nonzero. History holds one-hot
/// union actions for the last `window` steps, most recent first.
class FeatureEncoder {
 public:
  struct Layout {
    std::size_t env_onehot = 0;
    std::size_t maze = 0;    // goal one-hot, agent one-hot, 4 wall bits
    std::size_t wordle = 0;  // still-consistent word bits, guesses-used one-hot
    std::size_t craft = 0;   // target one-hot, inventory levels, has-item bits, craftable-now bits,
                           // last-result one-hot
    std::size_t history = 0;
    std::size_t dim = 0;
  };

  explicit FeatureEncoder(std::shared_ptr<const EnvSuite> suite,
                          std::size_t history_window = kDefaultHistoryWindow);

  std::size_t dim() const { return layout_.dim; }
  std::size_t history_window() const { return window_; }
  const Layout& layout() const { return layout_; }
  const EnvSuite& suite() const { return *suite_; }
  const std::shared_ptr<const EnvSuite>& suite_ptr() const { return suite_; }

  /// `history` is the full action sequence so far; only the tail is used.
  std::vector<double> encode(const Instruction& instruction, std::span<const ActionId> history,
                             const Observation& observation) const;

 private:
  std::shared_ptr<const EnvSuite> suite_;
  std::size_t window_;
  Layout layout_;
};

}  // namespace fedse::env
