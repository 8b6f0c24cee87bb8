#include "fedse/features.hpp"

#include <algorithm>

#include "fedse/errors.hpp"

namespace fedse::env {

namespace {
constexpr int kInventoryCap = 4;
constexpr std::size_t kCraftResults = 4;

bool craftable(const RecipeBook& book, const std::vector<int>& inventory, std::size_t item) {
  std::vector<int> need(inventory.size(), 0);
  for (std::size_t ing : book[item].ingredients) ++need[ing];
  for (std::size_t i = 0; i < need.size(); ++i)
    if (inventory[i] < need[i]) return false;
  return true;
}
}  // namespace

FeatureEncoder::FeatureEncoder(std::shared_ptr<const EnvSuite> suite, std::size_t history_window)
    : suite_(std::move(suite)), window_(history_window) {
  if (!suite_) throw ContractViolation("FeatureEncoder: null suite");
  const std::size_t items = suite_->recipes().size();
  std::size_t off = 0;
  layout_.env_onehot = off;
  off += kEnvCount;
  layout_.maze = off;
  off += 2 * kMazeCells + kMoveCount;
  layout_.wordle = off;
  off += suite_->words().size() + kWordleGuesses + 1;
  layout_.craft = off;
  off += 4 * items + kCraftResults;
  layout_.history = off;
  off += window_ * suite_->actions().size;
  layout_.dim = off;
}

std::vector<double> FeatureEncoder::encode(const Instruction& instruction,
                                           std::span<const ActionId> history,
                                           const Observation& observation) const {
  std::vector<double> x(layout_.dim, 0.0);
  x[layout_.env_onehot + static_cast<std::size_t>(instruction.env)] = 1.0;

  switch (instruction.env) {
    case EnvId::maze: {
      const auto& o = std::get<MazeObservation>(observation);
      x[layout_.maze + static_cast<std::size_t>(instruction.target)] = 1.0;
      x[layout_.maze + kMazeCells + static_cast<std::size_t>(o.cell)] = 1.0;
      for (std::size_t m = 0; m < kMoveCount; ++m)
        x[layout_.maze + 2 * kMazeCells + m] = o.walls[m] ? 1.0 : 0.0;
      break;
    }
    case EnvId::wordle: {
      // The secret stays hidden; only feedback-derived state is encoded.
      const auto& o = std::get<WordleObservation>(observation);
      const auto& words = suite_->words();
      for (std::size_t w = 0; w < words.size(); ++w)
        if (wordle_consistent(words, w, o.guesses)) x[layout_.wordle + w] = 1.0;
      const std::size_t used = std::min<std::size_t>(o.guesses.size(), kWordleGuesses);
      x[layout_.wordle + words.size() + used] = 1.0;
      break;
    }
    case EnvId::craft: {
      const auto& o = std::get<CraftObservation>(observation);
      const std::size_t items = suite_->recipes().size();
      x[layout_.craft + static_cast<std::size_t>(instruction.target)] = 1.0;
      for (std::size_t i = 0; i < items; ++i)
        x[layout_.craft + items + i] =
            static_cast<double>(std::min(o.inventory[i], kInventoryCap)) / kInventoryCap;
      const auto& book = suite_->recipes();
      for (std::size_t i = 0; i < items; ++i) {
        x[layout_.craft + 2 * items + i] = o.inventory[i] > 0 ? 1.0 : 0.0;
        if (!book[i].raw()) x[layout_.craft + 3 * items + i] = craftable(book, o.inventory, i) ? 1.0 : 0.0;
      }
      x[layout_.craft + 4 * items + static_cast<std::size_t>(o.last)] = 1.0;
      break;
    }
  }

  const std::size_t vocab = suite_->actions().size;
  const std::size_t n = std::min(window_, history.size());
  for (std::size_t k = 0; k < n; ++k) {
    const ActionId a = history[history.size() - 1 - k];
    if (a >= vocab) throw ContractViolation("encode: history action out of range");
    x[layout_.history + k * vocab + a] = 1.0;
  }
  return x;
}

}  // namespace fedse::env
