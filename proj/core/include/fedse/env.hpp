#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "fedse/env_data.hpp"
#include "fedse/trajectory.hpp"

namespace fedse::env {

inline constexpr int kMazeSide = 8;
inline constexpr int kMazeCells = kMazeSide * kMazeSide;
inline constexpr int kMazeHorizon = 40;
inline constexpr int kWordleGuesses = 6;
inline constexpr int kCraftHorizon = 25;
inline constexpr std::uint64_t kDefaultMazeLayoutSeed = 0x5eed'0f'3a2e;

enum class Move : std::uint8_t { north = 0, south = 1, east = 2, west = 3 };
inline constexpr int kMoveCount = 4;

// --- tasks -----------------------------------------------------------------

enum class Split : std::uint8_t { train, test };

/// Train and test seeds come from disjoint ranges.
inline constexpr std::uint64_t kTrainSeedBegin = 0;
inline constexpr std::uint64_t kTrainSeedEnd = 1ULL << 32;
inline constexpr std::uint64_t kTestSeedBegin = 1ULL << 32;
inline constexpr std::uint64_t kTestSeedEnd = 1ULL << 33;

struct TaskInstance {
  EnvId env = EnvId::maze;
  std::uint64_t seed = 0;
  Split split = Split::train;
};

bool seed_in_split(std::uint64_t seed, Split split);

// --- observations ----------------------------------------------------------

struct MazeObservation {
  int cell = 0;
  std::array<bool, kMoveCount> walls{};  // indexed by Move
};

struct WordleObservation {
  std::vector<std::pair<std::size_t, Feedback>> guesses;  // (word index, feedback)
};

enum class CraftResult : std::uint8_t { none = 0, gathered = 1, crafted = 2, failed = 3 };

struct CraftObservation {
  std::vector<int> inventory;  // count per recipe-book item
  CraftResult last = CraftResult::none;
};

using Observation = std::variant<MazeObservation, WordleObservation, CraftObservation>;

struct StepResult {
  Observation observation;
  bool done = false;
  int reward = 0;
};

// --- shared data -----------------------------------------------------------

/// Union action vocabulary: maze moves, wordle words, craft gather verbs,
/// craft craft verbs, in that order.
struct ActionSpace {
  std::size_t maze_begin = 0;
  std::size_t wordle_begin = 0;
  std::size_t gather_begin = 0;
  std::size_t craft_begin = 0;
  std::size_t size = 0;

  std::size_t begin(EnvId env) const;
  std::size_t end(EnvId env) const;
  EnvId owner(ActionId a) const;
};

/// Fixed 8×8 wall layout shared by every maze task; tasks differ in start
/// and goal. Generated by randomized depth-first carving followed by
/// removal of extra walls, so every cell pair is connected within the
/// horizon.
class MazeLayout {
 public:
  static MazeLayout generate(std::uint64_t layout_seed);

  bool wall(int cell, Move m) const { return (walls_[static_cast<std::size_t>(cell)] >> static_cast<int>(m)) & 1U; }
  /// Destination of a move; a wall or the border leaves the agent in place.
  int neighbor(int cell, Move m) const;
  int distance(int from, int to) const {
    return dist_[static_cast<std::size_t>(from * kMazeCells + to)];
  }
  int diameter() const;

 private:
  std::array<std::uint8_t, kMazeCells> walls_{};
  std::vector<int> dist_;
  void compute_distances();
};

/// Immutable world data: maze layout, word list, recipe book and the
/// action space derived from them. Shared by all environments and threads.
class EnvSuite {
 public:
  EnvSuite(MazeLayout maze, WordList words, RecipeBook recipes);

  /// Embedded data files and the default maze layout.
  static std::shared_ptr<const EnvSuite> standard();

  const MazeLayout& maze() const { return maze_; }
  const WordList& words() const { return words_; }
  const RecipeBook& recipes() const { return recipes_; }
  const ActionSpace& actions() const { return actions_; }

  Instruction make_instruction(const TaskInstance& task) const;
  int horizon(EnvId env) const;

 private:
  MazeLayout maze_;
  WordList words_;
  RecipeBook recipes_;
  ActionSpace actions_;
};

// --- environments ----------------------------------------------------------

/// Episodic sparse-binary-reward environment.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual EnvId id() const = 0;
  int horizon() const;

  /// Deterministic in task.seed. Throws ContractViolation if task.env != id()
  /// or the seed lies outside the task's split range.
  std::pair<Instruction, Observation> reset(const TaskInstance& task);

  /// Starts an episode directly from an instruction (used to replay stored
  /// trajectories).
  virtual std::pair<Instruction, Observation> start(const Instruction& instruction) = 0;

  /// Throws ContractViolation for an illegal action or a finished episode.
  virtual StepResult step(ActionId action) = 0;

  virtual ActionMask legal_mask() const = 0;
  virtual const Observation& observation() const = 0;

  /// Scripted demonstrator. Throws ContractViolation when the goal can no
  /// longer be reached within the remaining steps.
  virtual ActionId expert_action() const = 0;

  const Instruction& instruction() const { return instruction_; }
  bool done() const { return done_; }
  int steps_taken() const { return steps_; }

 protected:
  explicit Environment(std::shared_ptr<const EnvSuite> suite) : suite_(std::move(suite)) {}

  void begin_episode(const Instruction& instruction);
  StepResult finish_step(bool success);
  void require_legal(ActionId action) const;

  std::shared_ptr<const EnvSuite> suite_;
  Instruction instruction_;
  bool done_ = true;
  int steps_ = 0;
};

std::unique_ptr<Environment> make_environment(EnvId env, std::shared_ptr<const EnvSuite> suite);

/// True iff `word` is consistent with every (guess, feedback) pair, i.e.
/// it could still be the secret.
bool wordle_consistent(const WordList& words, std::size_t word,
                       std::span<const std::pair<std::size_t, Feedback>> guesses);

}  // namespace fedse::env
