#include "fedse/env.hpp"

#include <algorithm>
#include <deque>
#include <string>

#include "fedse/digest.hpp"
#include "fedse/errors.hpp"
#include "fedse/rng.hpp"

namespace fedse {

std::string_view to_string(EnvId env) {
  switch (env) {
    case EnvId::maze: return "maze";
    case EnvId::wordle: return "wordle";
    case EnvId::craft: return "craft";
  }
  return "unknown";
}

EnvId parse_env_id(std::string_view name) {
  if (name == "maze") return EnvId::maze;
  if (name == "wordle") return EnvId::wordle;
  if (name == "craft") return EnvId::craft;
  throw ContractViolation("unknown environment '" + std::string(name) + "'");
}

std::vector<ActionId> Trajectory::actions() const {
  std::vector<ActionId> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.action);
  return out;
}

std::uint64_t content_hash(const Instruction& instruction, std::span<const ActionId> actions) {
  Fnv1a64 h;
  h.u8(static_cast<std::uint8_t>(instruction.env))
      .u32(static_cast<std::uint32_t>(instruction.target))
      .u32(static_cast<std::uint32_t>(instruction.start))
      .u64(actions.size());
  for (ActionId a : actions) h.u32(a);
  return h.value();
}

}  // namespace fedse

namespace fedse::env {

namespace {

constexpr std::uint64_t kTaskSalt = 0x7a5c;
constexpr int kExtraOpenings = 10;

int row_of(int cell) { return cell / kMazeSide; }
int col_of(int cell) { return cell % kMazeSide; }

Move opposite(Move m) {
  switch (m) {
    case Move::north: return Move::south;
    case Move::south: return Move::north;
    case Move::east: return Move::west;
    case Move::west: return Move::east;
  }
  return m;
}

// Neighbor ignoring walls; -1 outside the grid.
int grid_neighbor(int cell, Move m) {
  int r = row_of(cell), c = col_of(cell);
  switch (m) {
    case Move::north: --r; break;
    case Move::south: ++r; break;
    case Move::east: ++c; break;
    case Move::west: --c; break;
  }
  if (r < 0 || r >= kMazeSide || c < 0 || c >= kMazeSide) return -1;
  return r * kMazeSide + c;
}

Rng task_rng(const TaskInstance& task) {
  return Rng(derive_seed(task.seed, kTaskSalt, static_cast<std::uint64_t>(task.env)));
}

}  // namespace

bool seed_in_split(std::uint64_t seed, Split split) {
  return split == Split::train ? (seed >= kTrainSeedBegin && seed < kTrainSeedEnd)
                               : (seed >= kTestSeedBegin && seed < kTestSeedEnd);
}

// --- ActionSpace -----------------------------------------------------------

std::size_t ActionSpace::begin(EnvId env) const {
  switch (env) {
    case EnvId::maze: return maze_begin;
    case EnvId::wordle: return wordle_begin;
    case EnvId::craft: return gather_begin;
  }
  return size;
}

std::size_t ActionSpace::end(EnvId env) const {
  switch (env) {
    case EnvId::maze: return wordle_begin;
    case EnvId::wordle: return gather_begin;
    case EnvId::craft: return size;
  }
  return size;
}

EnvId ActionSpace::owner(ActionId a) const {
  if (a >= size) throw ContractViolation("action index out of range");
  if (a < wordle_begin) return EnvId::maze;
  if (a < gather_begin) return EnvId::wordle;
  return EnvId::craft;
}

// --- MazeLayout ------------------------------------------------------------

MazeLayout MazeLayout::generate(std::uint64_t layout_seed) {
  MazeLayout maze;
  maze.walls_.fill(0x0F);
  Rng rng(layout_seed);

  auto open = [&](int cell, Move m) {
    const int other = grid_neighbor(cell, m);
    maze.walls_[static_cast<std::size_t>(cell)] &= static_cast<std::uint8_t>(~(1U << static_cast<int>(m)));
    maze.walls_[static_cast<std::size_t>(other)] &=
        static_cast<std::uint8_t>(~(1U << static_cast<int>(opposite(m))));
  };

  // Randomized depth-first carving yields a spanning tree.
  std::array<bool, kMazeCells> visited{};
  std::vector<int> stack{0};
  visited[0] = true;
  while (!stack.empty()) {
    const int cell = stack.back();
    std::vector<Move> options;
    for (int m = 0; m < kMoveCount; ++m) {
      const int n = grid_neighbor(cell, static_cast<Move>(m));
      if (n >= 0 && !visited[static_cast<std::size_t>(n)]) options.push_back(static_cast<Move>(m));
    }
    if (options.empty()) {
      stack.pop_back();
      continue;
    }
    const Move m = options[rng.below(options.size())];
    const int n = grid_neighbor(cell, m);
    open(cell, m);
    visited[static_cast<std::size_t>(n)] = true;
    stack.push_back(n);
  }

  // Extra openings create loops and shorten the longest paths.
  int opened = 0;
  while (opened < kExtraOpenings) {
    const int cell = static_cast<int>(rng.below(kMazeCells));
    const auto m = static_cast<Move>(rng.below(kMoveCount));
    if (grid_neighbor(cell, m) < 0 || !maze.wall(cell, m)) continue;
    open(cell, m);
    ++opened;
  }
  maze.compute_distances();
  while (maze.diameter() > kMazeHorizon) {
    const int cell = static_cast<int>(rng.below(kMazeCells));
    const auto m = static_cast<Move>(rng.below(kMoveCount));
    if (grid_neighbor(cell, m) < 0 || !maze.wall(cell, m)) continue;
    open(cell, m);
    maze.compute_distances();
  }
  return maze;
}

int MazeLayout::neighbor(int cell, Move m) const {
  if (wall(cell, m)) return cell;
  return grid_neighbor(cell, m);
}

void MazeLayout::compute_distances() {
  dist_.assign(static_cast<std::size_t>(kMazeCells * kMazeCells), -1);
  for (int src = 0; src < kMazeCells; ++src) {
    auto* row = &dist_[static_cast<std::size_t>(src * kMazeCells)];
    std::deque<int> queue{src};
    row[src] = 0;
    while (!queue.empty()) {
      const int c = queue.front();
      queue.pop_front();
      for (int m = 0; m < kMoveCount; ++m) {
        const int n = neighbor(c, static_cast<Move>(m));
        if (row[n] < 0) {
          row[n] = row[c] + 1;
          queue.push_back(n);
        }
      }
    }
  }
}

int MazeLayout::diameter() const {
  const int d = *std::max_element(dist_.begin(), dist_.end());
  const bool connected = std::find(dist_.begin(), dist_.end(), -1) == dist_.end();
  return connected ? d : std::numeric_limits<int>::max();
}

// --- EnvSuite --------------------------------------------------------------

EnvSuite::EnvSuite(MazeLayout maze, WordList words, RecipeBook recipes)
    : maze_(std::move(maze)), words_(std::move(words)), recipes_(std::move(recipes)) {
  actions_.maze_begin = 0;
  actions_.wordle_begin = kMoveCount;
  actions_.gather_begin = actions_.wordle_begin + words_.size();
  actions_.craft_begin = actions_.gather_begin + recipes_.raw_items().size();
  actions_.size = actions_.craft_begin + recipes_.craftable_items().size();
}

std::shared_ptr<const EnvSuite> EnvSuite::standard() {
  static const auto suite = std::make_shared<const EnvSuite>(
      MazeLayout::generate(kDefaultMazeLayoutSeed), WordList::embedded(), RecipeBook::embedded());
  return suite;
}

Instruction EnvSuite::make_instruction(const TaskInstance& task) const {
  Rng rng = task_rng(task);
  Instruction u;
  u.env = task.env;
  switch (task.env) {
    case EnvId::maze: {
      u.start = static_cast<std::int32_t>(rng.below(kMazeCells));
      auto goal = static_cast<std::int32_t>(rng.below(kMazeCells - 1));
      if (goal >= u.start) ++goal;
      u.target = goal;
      break;
    }
    case EnvId::wordle:
      u.target = static_cast<std::int32_t>(rng.below(words_.size()));
      break;
    case EnvId::craft: {
      const auto& craftable = recipes_.craftable_items();
      u.target = static_cast<std::int32_t>(craftable[rng.below(craftable.size())]);
      break;
    }
  }
  return u;
}

int EnvSuite::horizon(EnvId env) const {
  switch (env) {
    case EnvId::maze: return kMazeHorizon;
    case EnvId::wordle: return kWordleGuesses;
    case EnvId::craft: return kCraftHorizon;
  }
  return 0;
}

// --- Environment base --------------------------------------------------------

int Environment::horizon() const { return suite_->horizon(id()); }

std::pair<Instruction, Observation> Environment::reset(const TaskInstance& task) {
  if (task.env != id())
    throw ContractViolation("reset: task for " + std::string(to_string(task.env)) +
                            " given to " + std::string(to_string(id())));
  if (!seed_in_split(task.seed, task.split))
    throw ContractViolation("reset: seed outside its split range");
  return start(suite_->make_instruction(task));
}

void Environment::begin_episode(const Instruction& instruction) {
  if (instruction.env != id())
    throw ContractViolation("start: instruction for " + std::string(to_string(instruction.env)) +
                            " given to " + std::string(to_string(id())));
  instruction_ = instruction;
  done_ = false;
  steps_ = 0;
}

StepResult Environment::finish_step(bool success) {
  ++steps_;
  done_ = success || steps_ >= horizon();
  return StepResult{observation(), done_, success ? 1 : 0};
}

void Environment::require_legal(ActionId action) const {
  if (done_) throw ContractViolation("step: episode already finished");
  const ActionMask mask = legal_mask();
  if (action >= mask.size() || !mask[action])
    throw ContractViolation("step: illegal action " + std::to_string(action) + " in " +
                            std::string(to_string(id())));
}

bool wordle_consistent(const WordList& words, std::size_t word,
                       std::span<const std::pair<std::size_t, Feedback>> guesses) {
  return std::all_of(guesses.begin(), guesses.end(), [&](const auto& g) {
    return wordle_feedback(words[word], words[g.first]) == g.second;
  });
}

namespace {

ActionMask range_mask(const ActionSpace& space, EnvId env) {
  ActionMask mask(space.size, 0);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(space.begin(env)),
            mask.begin() + static_cast<std::ptrdiff_t>(space.end(env)), 1);
  return mask;
}

class MazeEnv final : public Environment {
 public:
  explicit MazeEnv(std::shared_ptr<const EnvSuite> suite) : Environment(std::move(suite)) {}

  EnvId id() const override { return EnvId::maze; }

  std::pair<Instruction, Observation> start(const Instruction& instruction) override {
    begin_episode(instruction);
    cell_ = instruction_.start;
    refresh();
    return {instruction_, obs_};
  }

  StepResult step(ActionId action) override {
    require_legal(action);
    const auto m = static_cast<Move>(action - suite_->actions().maze_begin);
    cell_ = suite_->maze().neighbor(cell_, m);
    refresh();
    return finish_step(cell_ == instruction_.target);
  }

  ActionMask legal_mask() const override { return range_mask(suite_->actions(), id()); }
  const Observation& observation() const override { return obs_; }

  ActionId expert_action() const override {
    if (done_) throw ContractViolation("expert: episode already finished");
    const auto& maze = suite_->maze();
    const int d = maze.distance(cell_, instruction_.target);
    if (d < 0 || d > horizon() - steps_) throw ContractViolation("expert: maze goal unreachable");
    for (int m = 0; m < kMoveCount; ++m) {
      const int n = maze.neighbor(cell_, static_cast<Move>(m));
      if (n != cell_ && maze.distance(n, instruction_.target) == d - 1)
        return static_cast<ActionId>(suite_->actions().maze_begin + static_cast<std::size_t>(m));
    }
    throw ContractViolation("expert: no shortest-path move");
  }

 private:
  void refresh() {
    MazeObservation o;
    o.cell = cell_;
    for (int m = 0; m < kMoveCount; ++m)
      o.walls[static_cast<std::size_t>(m)] = suite_->maze().wall(cell_, static_cast<Move>(m));
    obs_ = o;
  }

  int cell_ = 0;
  Observation obs_;
};

class WordleEnv final : public Environment {
 public:
  explicit WordleEnv(std::shared_ptr<const EnvSuite> suite) : Environment(std::move(suite)) {}

  EnvId id() const override { return EnvId::wordle; }

  std::pair<Instruction, Observation> start(const Instruction& instruction) override {
    begin_episode(instruction);
    obs_ = WordleObservation{};
    return {instruction_, obs_};
  }

  StepResult step(ActionId action) override {
    require_legal(action);
    const std::size_t guess = action - suite_->actions().wordle_begin;
    const auto& words = suite_->words();
    const auto secret = static_cast<std::size_t>(instruction_.target);
    std::get<WordleObservation>(obs_).guesses.emplace_back(
        guess, wordle_feedback(words[secret], words[guess]));
    return finish_step(guess == secret);
  }

  ActionMask legal_mask() const override { return range_mask(suite_->actions(), id()); }
  const Observation& observation() const override { return obs_; }

  ActionId expert_action() const override {
    if (done_) throw ContractViolation("expert: episode already finished");
    const auto& guesses = std::get<WordleObservation>(obs_).guesses;
    for (std::size_t w = 0; w < suite_->words().size(); ++w)
      if (wordle_consistent(suite_->words(), w, guesses))
        return static_cast<ActionId>(suite_->actions().wordle_begin + w);
    throw ContractViolation("expert: no word consistent with feedback");
  }

 private:
  Observation obs_;
};

class CraftEnv final : public Environment {
 public:
  explicit CraftEnv(std::shared_ptr<const EnvSuite> suite) : Environment(std::move(suite)) {}

  EnvId id() const override { return EnvId::craft; }

  std::pair<Instruction, Observation> start(const Instruction& instruction) override {
    begin_episode(instruction);
    obs_ = CraftObservation{std::vector<int>(suite_->recipes().size(), 0), CraftResult::none};
    return {instruction_, obs_};
  }

  StepResult step(ActionId action) override {
    require_legal(action);
    const auto& space = suite_->actions();
    const auto& book = suite_->recipes();
    auto& o = std::get<CraftObservation>(obs_);
    bool success = false;
    if (action < space.craft_begin) {
      ++o.inventory[book.raw_items()[action - space.gather_begin]];
      o.last = CraftResult::gathered;
    } else {
      const std::size_t item = book.craftable_items()[action - space.craft_begin];
      if (can_craft(o.inventory, item)) {
        for (std::size_t ing : book[item].ingredients) --o.inventory[ing];
        ++o.inventory[item];
        o.last = CraftResult::crafted;
        success = static_cast<std::int32_t>(item) == instruction_.target;
      } else {
        o.last = CraftResult::failed;
      }
    }
    return finish_step(success);
  }

  ActionMask legal_mask() const override { return range_mask(suite_->actions(), id()); }
  const Observation& observation() const override { return obs_; }

  ActionId expert_action() const override {
    if (done_) throw ContractViolation("expert: episode already finished");
    auto inventory = std::get<CraftObservation>(obs_).inventory;
    const auto& target = suite_->recipes()[static_cast<std::size_t>(instruction_.target)];
    std::vector<ActionId> plan;
    for (std::size_t ing : target.ingredients) plan_item(ing, inventory, plan);
    plan.push_back(craft_action(static_cast<std::size_t>(instruction_.target)));
    if (static_cast<int>(plan.size()) > horizon() - steps_)
      throw ContractViolation("expert: craft target unreachable within horizon");
    return plan.front();
  }

 private:
  bool can_craft(const std::vector<int>& inventory, std::size_t item) const {
    std::vector<int> need(inventory.size(), 0);
    for (std::size_t ing : suite_->recipes()[item].ingredients) ++need[ing];
    for (std::size_t i = 0; i < need.size(); ++i)
      if (inventory[i] < need[i]) return false;
    return true;
  }

  ActionId craft_action(std::size_t item) const {
    const auto& craftable = suite_->recipes().craftable_items();
    const auto pos = std::find(craftable.begin(), craftable.end(), item) - craftable.begin();
    return static_cast<ActionId>(suite_->actions().craft_begin + static_cast<std::size_t>(pos));
  }

  ActionId gather_action(std::size_t item) const {
    const auto& raw = suite_->recipes().raw_items();
    const auto pos = std::find(raw.begin(), raw.end(), item) - raw.begin();
    return static_cast<ActionId>(suite_->actions().gather_begin + static_cast<std::size_t>(pos));
  }

  // Post-order walk of unmet prerequisites; items already held are reserved
  // for the recipe that needs them.
  void plan_item(std::size_t item, std::vector<int>& inventory, std::vector<ActionId>& plan) const {
    if (inventory[item] > 0) {
      --inventory[item];
      return;
    }
    const auto& recipe = suite_->recipes()[item];
    if (recipe.raw()) {
      plan.push_back(gather_action(item));
      return;
    }
    for (std::size_t ing : recipe.ingredients) plan_item(ing, inventory, plan);
    plan.push_back(craft_action(item));
  }

  Observation obs_;
};

}  // namespace

std::unique_ptr<Environment> make_environment(EnvId env, std::shared_ptr<const EnvSuite> suite) {
  if (!suite) throw ContractViolation("make_environment: null suite");
  switch (env) {
    case EnvId::maze: return std::make_unique<MazeEnv>(std::move(suite));
    case EnvId::wordle: return std::make_unique<WordleEnv>(std::move(suite));
    case EnvId::craft: return std::make_unique<CraftEnv>(std::move(suite));
  }
  throw ContractViolation("make_environment: unknown environment id");
}

}  // namespace fedse::env
