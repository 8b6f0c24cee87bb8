#include "fedse/env_data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "fedse/errors.hpp"

namespace fedse::env {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(std::string_view text) {
  std::vector<std::string> lines;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto end = nl == std::string_view::npos ? text.size() : nl;
    std::string line = trim(text.substr(pos, end - pos));
    if (!line.empty()) lines.push_back(std::move(line));
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

WordList WordList::parse(std::string_view text) {
  WordList list;
  std::unordered_set<std::string> seen;
  for (auto& w : split_lines(text)) {
    if (w.size() != kWordLength ||
        !std::all_of(w.begin(), w.end(), [](char c) { return c >= 'a' && c <= 'f'; }))
      throw ContractViolation("words: malformed word '" + w + "'");
    if (!seen.insert(w).second) throw ContractViolation("words: duplicate word '" + w + "'");
    list.words_.push_back(std::move(w));
  }
  if (list.words_.empty()) throw ContractViolation("words: empty vocabulary");
  return list;
}

WordList WordList::load(const std::filesystem::path& path) { return parse(read_file(path)); }

Feedback wordle_feedback(std::string_view secret, std::string_view guess) {
  if (secret.size() != kWordLength || guess.size() != kWordLength)
    throw ContractViolation("wordle_feedback: words must have 4 letters");
  Feedback fb{};
  std::array<int, 26> unmatched{};
  for (std::size_t i = 0; i < kWordLength; ++i) {
    if (guess[i] == secret[i]) {
      fb[i] = Mark::green;
    } else {
      fb[i] = Mark::gray;
      ++unmatched[static_cast<std::size_t>(secret[i] - 'a')];
    }
  }
  for (std::size_t i = 0; i < kWordLength; ++i) {
    if (fb[i] == Mark::green) continue;
    auto& left = unmatched[static_cast<std::size_t>(guess[i] - 'a')];
    if (left > 0) {
      fb[i] = Mark::yellow;
      --left;
    }
  }
  return fb;
}

RecipeBook RecipeBook::parse(std::string_view text) {
  RecipeBook book;
  for (const auto& line : split_lines(text)) {
    const auto arrow = line.find("<-");
    if (arrow == std::string::npos) throw ContractViolation("recipes: missing '<-' in '" + line + "'");
    Recipe recipe;
    recipe.item = trim(std::string_view(line).substr(0, arrow));
    if (recipe.item.empty()) throw ContractViolation("recipes: empty item name");
    if (std::any_of(book.items_.begin(), book.items_.end(),
                    [&](const Recipe& r) { return r.item == recipe.item; }))
      throw ContractViolation("recipes: duplicate item '" + recipe.item + "'");
    const std::string rhs = trim(std::string_view(line).substr(arrow + 2));
    std::size_t pos = 0;
    while (!rhs.empty() && pos <= rhs.size()) {
      const auto comma = rhs.find(',', pos);
      const auto end = comma == std::string::npos ? rhs.size() : comma;
      const std::string name = trim(std::string_view(rhs).substr(pos, end - pos));
      const auto it = std::find_if(book.items_.begin(), book.items_.end(),
                                   [&](const Recipe& r) { return r.item == name; });
      if (it == book.items_.end())
        throw ContractViolation("recipes: '" + recipe.item + "' uses undeclared ingredient '" +
                                name + "'");
      recipe.ingredients.push_back(static_cast<std::size_t>(it - book.items_.begin()));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    (recipe.raw() ? book.raw_ : book.craftable_).push_back(book.items_.size());
    book.items_.push_back(std::move(recipe));
  }
  if (book.raw_.empty() || book.craftable_.empty())
    throw ContractViolation("recipes: need at least one raw and one craftable item");
  return book;
}

RecipeBook RecipeBook::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::size_t RecipeBook::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].item == name) return i;
  throw ContractViolation("recipes: unknown item '" + std::string(name) + "'");
}

}  // namespace fedse::env
