#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <map>
#include <set>

#include "fedse/env.hpp"
#include "fedse/errors.hpp"
#include "fedse/features.hpp"
#include "fedse/rollout.hpp"

using namespace fedse;
using namespace fedse::env;

namespace {

std::shared_ptr<const EnvSuite> suite() { return EnvSuite::standard(); }

// Count-based feedback: greens first, then yellows from the remaining
// letter multiset of the secret, scanning left to right.
Feedback feedback_oracle(const std::string& secret, const std::string& guess) {
  Feedback f{};
  std::map<char, int> unmatched;
  for (std::size_t i = 0; i < kWordLength; ++i) {
    if (guess[i] == secret[i])
      f[i] = Mark::green;
    else
      ++unmatched[secret[i]];
  }
  for (std::size_t i = 0; i < kWordLength; ++i) {
    if (f[i] == Mark::green) continue;
    if (unmatched[guess[i]] > 0) {
      f[i] = Mark::yellow;
      --unmatched[guess[i]];
    }
  }
  return f;
}

// Plain BFS over the layout's move function.
std::vector<int> bfs_from(const MazeLayout& maze, int source) {
  std::vector<int> dist(kMazeCells, -1);
  std::deque<int> queue{source};
  dist[static_cast<std::size_t>(source)] = 0;
  while (!queue.empty()) {
    const int c = queue.front();
    queue.pop_front();
    for (int m = 0; m < kMoveCount; ++m) {
      const int n = maze.neighbor(c, static_cast<Move>(m));
      if (dist[static_cast<std::size_t>(n)] < 0) {
        dist[static_cast<std::size_t>(n)] = dist[static_cast<std::size_t>(c)] + 1;
        queue.push_back(n);
      }
    }
  }
  return dist;
}

TaskInstance task_for(EnvId env, Split split, std::uint64_t i) {
  Rng rng(derive_seed(99, static_cast<std::uint64_t>(env), static_cast<std::uint64_t>(split), i));
  return sample_task(env, split, rng);
}

}  // namespace

TEST(WordList, EmbeddedVocabularyIsWellFormed) {
  const auto& words = suite()->words();
  EXPECT_EQ(words.size(), 50u);
  std::set<std::string> seen;
  for (const auto& w : words.words()) {
    ASSERT_EQ(w.size(), kWordLength);
    for (char c : w) EXPECT_TRUE(c >= 'a' && c <= 'f') << w;
    EXPECT_TRUE(seen.insert(w).second) << w;
  }
}

TEST(WordList, RejectsMalformedInput) {
  EXPECT_THROW(WordList::parse("abcd\nabcd\n"), ContractViolation);
  EXPECT_THROW(WordList::parse("abcg\n"), ContractViolation);
  EXPECT_THROW(WordList::parse("abc\n"), ContractViolation);
  EXPECT_THROW(WordList::parse(""), ContractViolation);
  EXPECT_EQ(WordList::parse("abcd\nfeed\n").size(), 2u);
}

TEST(WordleFeedback, HandCases) {
  using M = Mark;
  EXPECT_EQ(wordle_feedback("abcd", "abcd"), (Feedback{M::green, M::green, M::green, M::green}));
  EXPECT_EQ(wordle_feedback("abcd", "dcba"), (Feedback{M::yellow, M::yellow, M::yellow, M::yellow}));
  // One 'a' in the secret, already matched green: the other 'a' is gray.
  EXPECT_EQ(wordle_feedback("abcd", "aaef"), (Feedback{M::green, M::gray, M::gray, M::gray}));
  // Two 'a' in the guess, one in the secret, neither in place: first gets yellow.
  EXPECT_EQ(wordle_feedback("bcda", "aaef"), (Feedback{M::yellow, M::gray, M::gray, M::gray}));
  EXPECT_THROW(wordle_feedback("abc", "abcd"), ContractViolation);
}

TEST(WordleFeedback, MatchesOracleOnAllPairs) {
  const auto& words = suite()->words();
  std::size_t pairs = 0;
  for (const auto& secret : words.words())
    for (const auto& guess : words.words()) {
      EXPECT_EQ(wordle_feedback(secret, guess), feedback_oracle(secret, guess)) << secret << " " << guess;
      ++pairs;
    }
  EXPECT_EQ(pairs, 2500u);
}

TEST(WordleConsistent, SecretIsAlwaysConsistent) {
  const auto& words = suite()->words();
  for (std::size_t s = 0; s < words.size(); ++s) {
    std::vector<std::pair<std::size_t, Feedback>> guesses;
    for (std::size_t g = 0; g < words.size(); g += 7) {
      guesses.emplace_back(g, wordle_feedback(words[s], words[g]));
      EXPECT_TRUE(wordle_consistent(words, s, guesses));
    }
  }
}

TEST(RecipeBook, EmbeddedBookIsTopological) {
  const auto& book = suite()->recipes();
  EXPECT_EQ(book.size(), 12u);
  EXPECT_EQ(book.raw_items().size(), 5u);
  EXPECT_EQ(book.craftable_items().size(), 7u);
  for (std::size_t i = 0; i < book.size(); ++i)
    for (std::size_t ing : book[i].ingredients) EXPECT_LT(ing, i);
  EXPECT_EQ(book.index_of("wood"), 0u);
  EXPECT_THROW(book.index_of("diamond"), ContractViolation);
}

TEST(RecipeBook, RejectsMalformedInput) {
  EXPECT_THROW(RecipeBook::parse("plank <- wood\nwood <-\n"), ContractViolation);
  EXPECT_THROW(RecipeBook::parse("wood\n"), ContractViolation);
  EXPECT_THROW(RecipeBook::parse("wood <-\nwood <-\nplank <- wood\n"), ContractViolation);
  EXPECT_THROW(RecipeBook::parse("wood <-\n"), ContractViolation);
  const auto book = RecipeBook::parse("wood <-\nrope <- wood,wood\n");
  EXPECT_EQ(book[1].ingredients, (std::vector<std::size_t>{0, 0}));
}

TEST(ActionSpace, UnionVocabularyLayout) {
  const auto& a = suite()->actions();
  EXPECT_EQ(a.size, 66u);
  EXPECT_EQ(a.begin(EnvId::maze), 0u);
  EXPECT_EQ(a.end(EnvId::maze), 4u);
  EXPECT_EQ(a.begin(EnvId::wordle), 4u);
  EXPECT_EQ(a.end(EnvId::wordle), 54u);
  EXPECT_EQ(a.begin(EnvId::craft), 54u);
  EXPECT_EQ(a.end(EnvId::craft), 66u);
  for (ActionId i = 0; i < 66; ++i) {
    const EnvId e = a.owner(i);
    EXPECT_GE(i, a.begin(e));
    EXPECT_LT(i, a.end(e));
  }
  EXPECT_THROW(a.owner(66), ContractViolation);
}

TEST(MazeLayout, MovesAreSymmetricAndDistancesMatchBfs) {
  const auto& maze = suite()->maze();
  int max_d = 0;
  for (int c = 0; c < kMazeCells; ++c) {
    for (int m = 0; m < kMoveCount; ++m) {
      const int n = maze.neighbor(c, static_cast<Move>(m));
      if (n == c) continue;
      // Passage in one direction means a passage back.
      bool back = false;
      for (int r = 0; r < kMoveCount; ++r) back |= maze.neighbor(n, static_cast<Move>(r)) == c;
      EXPECT_TRUE(back);
    }
    const auto dist = bfs_from(maze, c);
    for (int t = 0; t < kMazeCells; ++t) {
      ASSERT_GE(dist[static_cast<std::size_t>(t)], 0) << "disconnected " << c << " -> " << t;
      EXPECT_EQ(maze.distance(c, t), dist[static_cast<std::size_t>(t)]);
      max_d = std::max(max_d, dist[static_cast<std::size_t>(t)]);
    }
  }
  EXPECT_EQ(maze.diameter(), max_d);
  EXPECT_LE(max_d, kMazeHorizon);
}

TEST(MazeLayout, GenerationIsDeterministic) {
  const auto a = MazeLayout::generate(5), b = MazeLayout::generate(5);
  for (int c = 0; c < kMazeCells; ++c)
    for (int m = 0; m < kMoveCount; ++m)
      EXPECT_EQ(a.wall(c, static_cast<Move>(m)), b.wall(c, static_cast<Move>(m)));
}

TEST(Tasks, SplitsAreDisjointAndResetIsDeterministic) {
  EXPECT_TRUE(seed_in_split(0, Split::train));
  EXPECT_FALSE(seed_in_split(0, Split::test));
  EXPECT_TRUE(seed_in_split(kTestSeedBegin, Split::test));
  EXPECT_FALSE(seed_in_split(kTestSeedBegin, Split::train));
  for (EnvId e : {EnvId::maze, EnvId::wordle, EnvId::craft}) {
    for (std::uint64_t i = 0; i < 50; ++i) {
      for (Split s : {Split::train, Split::test}) {
        const auto task = task_for(e, s, i);
        EXPECT_TRUE(seed_in_split(task.seed, s));
        auto env = make_environment(e, suite());
        const auto first = env->reset(task).first;
        env->step(env->expert_action());
        EXPECT_EQ(env->reset(task).first, first);
        EXPECT_EQ(env->steps_taken(), 0);
      }
    }
  }
}

TEST(Tasks, ResetContractViolations) {
  auto env = make_environment(EnvId::maze, suite());
  EXPECT_THROW(env->reset({EnvId::wordle, 1, Split::train}), ContractViolation);
  EXPECT_THROW(env->reset({EnvId::maze, kTestSeedBegin, Split::train}), ContractViolation);
  EXPECT_THROW(env->reset({EnvId::maze, 5, Split::test}), ContractViolation);
}

TEST(Environment, MazeStartDiffersFromGoal) {
  for (std::uint64_t i = 0; i < 500; ++i) {
    const auto u = suite()->make_instruction(task_for(EnvId::maze, Split::train, i));
    EXPECT_NE(u.start, u.target);
  }
}

TEST(Environment, ExpertSolvesEveryTask) {
  const FeatureEncoder encoder(suite());
  for (EnvId e : {EnvId::maze, EnvId::wordle, EnvId::craft}) {
    for (Split s : {Split::train, Split::test}) {
      for (std::uint64_t i = 0; i < 100; ++i) {
        const auto task = task_for(e, s, i);
        const auto t = expert_rollout(encoder, task);
        EXPECT_EQ(t.reward, 1) << to_string(e) << " task " << task.seed;
        EXPECT_LE(static_cast<int>(t.steps.size()), suite()->horizon(e));
        EXPECT_EQ(static_cast<int>(t.steps.size()), expert_solution_length(encoder, task));
        EXPECT_EQ(replay_reward(suite(), t), 1);
      }
    }
  }
}

TEST(Environment, MazeExpertTakesShortestPath) {
  const FeatureEncoder encoder(suite());
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto task = task_for(EnvId::maze, Split::test, i);
    const auto u = suite()->make_instruction(task);
    EXPECT_EQ(expert_solution_length(encoder, task), suite()->maze().distance(u.start, u.target));
  }
}

TEST(Environment, EpisodesNeverExceedHorizonAndRewardIsTerminal) {
  Rng rng(17);
  for (EnvId e : {EnvId::maze, EnvId::wordle, EnvId::craft}) {
    auto env = make_environment(e, suite());
    for (int ep = 0; ep < 200; ++ep) {
      env->reset(task_for(e, Split::train, static_cast<std::uint64_t>(ep)));
      int steps = 0;
      while (!env->done()) {
        const auto mask = env->legal_mask();
        std::vector<ActionId> legal;
        for (ActionId a = 0; a < mask.size(); ++a)
          if (mask[a]) legal.push_back(a);
        const auto r = env->step(legal[rng.below(legal.size())]);
        ++steps;
        EXPECT_TRUE(r.reward == 0 || r.reward == 1);
        if (!r.done) {
          EXPECT_EQ(r.reward, 0);
        }
      }
      EXPECT_LE(steps, env->horizon());
      EXPECT_THROW(env->step(0), ContractViolation);
    }
  }
}

TEST(Environment, IllegalActionsThrow) {
  auto maze = make_environment(EnvId::maze, suite());
  maze->reset(task_for(EnvId::maze, Split::train, 0));
  EXPECT_THROW(maze->step(10), ContractViolation);
  EXPECT_THROW(maze->step(1000), ContractViolation);
  auto craft = make_environment(EnvId::craft, suite());
  craft->reset(task_for(EnvId::craft, Split::train, 0));
  EXPECT_THROW(craft->step(0), ContractViolation);
}

TEST(Environment, CraftingConsumesIngredients) {
  auto env = make_environment(EnvId::craft, suite());
  const auto& book = suite()->recipes();
  const auto& space = suite()->actions();
  const auto plank = book.index_of("plank");
  Instruction u{EnvId::craft, static_cast<std::int32_t>(book.index_of("stick")), 0};
  env->start(u);
  const auto craft_plank = static_cast<ActionId>(
      space.craft_begin + static_cast<std::size_t>(std::find(book.craftable_items().begin(),
                                                             book.craftable_items().end(), plank) -
                                                   book.craftable_items().begin()));
  auto r = env->step(craft_plank);
  EXPECT_EQ(std::get<CraftObservation>(r.observation).last, CraftResult::failed);
  r = env->step(static_cast<ActionId>(space.gather_begin));  // wood
  EXPECT_EQ(std::get<CraftObservation>(r.observation).last, CraftResult::gathered);
  r = env->step(craft_plank);
  const auto& obs = std::get<CraftObservation>(r.observation);
  EXPECT_EQ(obs.last, CraftResult::crafted);
  EXPECT_EQ(obs.inventory[book.index_of("wood")], 0);
  EXPECT_EQ(obs.inventory[plank], 1);
  EXPECT_FALSE(r.done);
}

TEST(Features, LayoutAndActiveBlock) {
  const FeatureEncoder encoder(suite());
  const auto& l = encoder.layout();
  // Block offsets.
  EXPECT_EQ(l.env_onehot, 0u);
  EXPECT_EQ(l.maze, 3u);
  EXPECT_EQ(l.wordle - l.maze, 2u * kMazeCells + 4u);
  EXPECT_EQ(l.craft - l.wordle, 50u + 7u);
  EXPECT_EQ(l.history - l.craft, 4u * 12u + 4u);
  EXPECT_EQ(encoder.dim() - l.history, 4u * 66u);
  EXPECT_EQ(encoder.dim(), 508u);

  const std::size_t begin[] = {l.maze, l.wordle, l.craft};
  const std::size_t size[] = {l.wordle - l.maze, l.craft - l.wordle, l.history - l.craft};
  for (EnvId e : {EnvId::maze, EnvId::wordle, EnvId::craft}) {
    const FeatureEncoder& enc = encoder;
    std::vector<ActionId> history;
    Trajectory t = expert_rollout(enc, task_for(e, Split::train, 3));
    for (const auto& step : t.steps) {
      ASSERT_EQ(step.features.size(), encoder.dim());
      const auto k = static_cast<std::size_t>(e);
      for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(step.features[j], j == k ? 1.0 : 0.0);
      for (std::size_t b = 0; b < 3; ++b) {
        if (b == k) continue;
        for (std::size_t j = begin[b]; j < begin[b] + size[b]; ++j) EXPECT_EQ(step.features[j], 0.0);
      }
    }
  }
}

TEST(Features, HistoryWindowMostRecentFirst) {
  const FeatureEncoder encoder(suite());
  const auto& l = encoder.layout();
  const std::size_t h0 = l.history;
  auto env = make_environment(EnvId::maze, suite());
  const auto [u, obs] = env->reset(task_for(EnvId::maze, Split::train, 1));
  const std::vector<ActionId> history{0, 1, 2, 3, 1};
  const auto x = encoder.encode(u, history, obs);
  // Slots hold actions 1, 3, 2, 1 (the last four, newest first).
  const ActionId expected[] = {1, 3, 2, 1};
  for (std::size_t slot = 0; slot < 4; ++slot)
    for (std::size_t a = 0; a < 66; ++a)
      EXPECT_EQ(x[h0 + slot * 66 + a], a == expected[slot] ? 1.0 : 0.0);
  const std::vector<ActionId> bad{66};
  EXPECT_THROW(encoder.encode(u, bad, obs), ContractViolation);
}

TEST(Features, WordleSecretNeverReachesTheEncoder) {
  const FeatureEncoder encoder(suite());
  const Instruction a{EnvId::wordle, 3, 0}, b{EnvId::wordle, 41, 0};
  const WordleObservation obs;
  EXPECT_EQ(encoder.encode(a, {}, obs), encoder.encode(b, {}, obs));
}

TEST(SeedDataset, ExpertSuccessesFromThePool) {
  const FeatureEncoder encoder(suite());
  for (EnvId e : {EnvId::maze, EnvId::wordle, EnvId::craft}) {
    const auto pool = seed_task_pool(encoder, e, 0.4, 11);
    EXPECT_EQ(pool.size(), static_cast<std::size_t>(std::ceil(0.4 * kSeedTaskPool)));
    std::set<Instruction, decltype([](const Instruction& x, const Instruction& y) {
               return std::tie(x.target, x.start) < std::tie(y.target, y.start);
             })>
        allowed;
    for (const auto& t : pool) {
      EXPECT_EQ(t.split, Split::train);
      allowed.insert(suite()->make_instruction(t));
    }
    for (std::size_t i = 1; i < pool.size(); ++i)
      EXPECT_LE(expert_solution_length(encoder, pool[i - 1]), expert_solution_length(encoder, pool[i]));
    const auto data = generate_seed_dataset(encoder, e, 20, 0.4, 11);
    EXPECT_EQ(data.size(), 20u);
    for (const auto& t : data) {
      EXPECT_EQ(t.reward, 1);
      EXPECT_TRUE(allowed.contains(t.instruction));
    }
  }
  EXPECT_THROW(generate_seed_dataset(encoder, EnvId::maze, 5, 0.0, 1), ContractViolation);
  EXPECT_THROW(generate_seed_dataset(encoder, EnvId::maze, 5, 1.5, 1), ContractViolation);
}

TEST(Rollout, GreedyTiesGoToLowestIndex) {
  const std::vector<double> p{0.1, 0.4, 0.4, 0.1};
  EXPECT_EQ(greedy_action(p, ActionMask{1, 1, 1, 1}), 1u);
  EXPECT_EQ(greedy_action(p, ActionMask{1, 0, 1, 1}), 2u);
  EXPECT_THROW(greedy_action(p, ActionMask{0, 0, 0, 0}), ContractViolation);
}

TEST(Rollout, SamplingFrequenciesFollowProbabilities) {
  Rng rng(3);
  const std::vector<double> p{0.2, 0.0, 0.5, 0.3};
  std::vector<int> counts(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[sample_action(p, rng)];
  EXPECT_EQ(counts[1], 0);
  for (std::size_t a : {0u, 2u, 3u}) EXPECT_NEAR(counts[a] / static_cast<double>(n), p[a], 0.01);
}

TEST(Rollout, EvaluateRequiresTestTasks) {
  const FeatureEncoder encoder(suite());
  std::vector<nn::DenseLayer> layers;
  layers.push_back({nn::Matrix(4, encoder.dim()), std::vector<double>(4, 0.0)});
  layers.push_back({nn::Matrix(4, 4), std::vector<double>(4, 0.0)});
  layers.push_back({nn::Matrix(66, 4), std::vector<double>(66, 0.0)});
  auto base = std::make_shared<const nn::BaseModel>(std::move(layers));
  const nn::PolicyNet net(base, nn::LoraAdapter::zeros(base->schema(), 1, 1.0));
  EXPECT_THROW(evaluate(net, encoder, EnvId::maze, 0, 1), ContractViolation);
  const double s = evaluate(net, encoder, EnvId::craft, 20, 1);
  EXPECT_GE(s, 0.0);
  EXPECT_LE(s, 1.0);
  EXPECT_EQ(s, evaluate(net, encoder, EnvId::craft, 20, 1));
}
