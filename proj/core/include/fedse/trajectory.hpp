#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace fedse {

enum class EnvId : std::uint8_t { maze = 0, wordle = 1, craft = 2 };

inline constexpr std::size_t kEnvCount = 3;

std::string_view to_string(EnvId env);
/// Throws ContractViolation on an unknown name.
EnvId parse_env_id(std::string_view name);

/// Index into the union action vocabulary (maze moves, then wordle words,
/// then craft verbs).
using ActionId = std::uint32_t;

/// One byte per union-vocabulary slot; nonzero means legal.
using ActionMask = std::vector<std::uint8_t>;

/// Task descriptor handed to the agent.
///
/// `target` is the maze goal cell, the wordle secret index or the craft
/// target item. `start` is the maze start cell and 0 elsewhere. Only the
/// public part reaches the feature encoder (the wordle secret never does).
struct Instruction {
  EnvId env = EnvId::maze;
  std::int32_t target = 0;
  std::int32_t start = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Step {
  std::vector<double> features;
  ActionMask mask;
  ActionId action = 0;
};

/// A complete episode with its terminal binary reward.
struct Trajectory {
  Instruction instruction;
  std::vector<Step> steps;
  int reward = 0;
  std::uint64_t content_hash = 0;

  std::vector<ActionId> actions() const;
};

/// Digest of (instruction, action sequence); identifies a trajectory for
/// buffer deduplication.
std::uint64_t content_hash(const Instruction& instruction, std::span<const ActionId> actions);

}  // namespace fedse
