#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedse::env {

/// Contents of data/words.txt and data/recipes.txt compiled into the library.
std::string_view embedded_words_txt();
std::string_view embedded_recipes_txt();

inline constexpr std::size_t kWordLength = 4;

/// Wordle vocabulary: one word per line, 4 letters from {a..f}, no duplicates.
class WordList {
 public:
  static WordList parse(std::string_view text);
  static WordList load(const std::filesystem::path& path);
  static WordList embedded() { return parse(embedded_words_txt()); }

  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  const std::string& operator[](std::size_t i) const { return words_[i]; }

 private:
  std::vector<std::string> words_;
};

enum class Mark : std::uint8_t { gray = 0, yellow = 1, green = 2 };
using Feedback = std::array<Mark, kWordLength>;

/// Per-letter feedback with duplicate accounting: greens are assigned first,
/// then yellows left to right while unmatched copies of the letter remain in
/// the secret.
Feedback wordle_feedback(std::string_view secret, std::string_view guess);

struct Recipe {
  std::string item;
  std::vector<std::size_t> ingredients;  // item indices, repeats allowed

  bool raw() const { return ingredients.empty(); }
};

/// Crafting DAG: `item <- ingredient[,ingredient...]`; empty right-hand side
/// marks a raw resource. Ingredients must be declared on an earlier line,
/// which makes the file order a topological order.
class RecipeBook {
 public:
  static RecipeBook parse(std::string_view text);
  static RecipeBook load(const std::filesystem::path& path);
  static RecipeBook embedded() { return parse(embedded_recipes_txt()); }

  const std::vector<Recipe>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  const Recipe& operator[](std::size_t i) const { return items_[i]; }
  std::size_t index_of(std::string_view name) const;

  /// Raw resources in file order.
  const std::vector<std::size_t>& raw_items() const { return raw_; }
  /// Craftable (non-raw) items in file order.
  const std::vector<std::size_t>& craftable_items() const { return craftable_; }

 private:
  std::vector<Recipe> items_;
  std::vector<std::size_t> raw_;
  std::vector<std::size_t> craftable_;
};

}  // namespace fedse::env
