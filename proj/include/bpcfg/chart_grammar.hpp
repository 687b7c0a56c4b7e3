#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grammar.hpp"

namespace bpcfg {

// A grammar as the inside chart sees it: chart categories come in blocks of
// C, one block per side/depth position (a single block in unbounded mode).
// Every rule of a parent in block p rewrites to a left child in block
// `left_child` and a right child in block `right_child`, so each block's
// binary rules form a dense C x C^2 table.
struct RuleBlock {
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  std::string name;
  std::size_t left_child = npos;   // npos: block only rewrites to words
  std::size_t right_child = npos;
  std::vector<double> binary;      // C x C*C, row-major, column a*C + b
  std::vector<double> terminal;    // C x W
  std::vector<std::uint8_t> usable;

  bool has_binary() const { return left_child != npos; }
};

class ChartGrammar {
 public:
  ChartGrammar() = default;
  ChartGrammar(std::size_t categories, std::size_t vocab, std::vector<RuleBlock> blocks,
               std::size_t root_block, CategoryId root_category)
      : categories_(categories),
        vocab_(vocab),
        blocks_(std::move(blocks)),
        root_block_(root_block),
        root_category_(root_category) {
    if (root_block_ >= blocks_.size() || root_category_ >= categories_)
      throw ParameterError("root slot out of range");
    for (const auto& b : blocks_) {
      if (b.terminal.size() != categories_ * vocab_ || b.usable.size() != categories_ ||
          (b.has_binary() && b.binary.size() != categories_ * categories_ * categories_))
        throw ParameterError("rule block '" + b.name + "' has wrong shape");
    }
  }

  std::size_t num_categories() const { return categories_; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t num_blocks() const { return blocks_.size(); }
  std::size_t chart_size() const { return blocks_.size() * categories_; }
  const RuleBlock& block(std::size_t i) const { return blocks_[i]; }
  const std::vector<RuleBlock>& blocks() const { return blocks_; }

  std::size_t root_block() const { return root_block_; }
  CategoryId root_category() const { return root_category_; }
  std::size_t root_slot() const { return slot(root_block_, root_category_); }

  std::size_t slot(std::size_t block, CategoryId c) const { return block * categories_ + c; }
  std::size_t block_of(std::size_t slot) const { return slot / categories_; }
  CategoryId category_of(std::size_t slot) const {
    return static_cast<CategoryId>(slot % categories_);
  }

  double binary_prob(std::size_t block, CategoryId parent, CategoryId left,
                     CategoryId right) const {
    const auto& b = blocks_[block];
    if (!b.has_binary()) return 0.0;
    return b.binary[(parent * categories_ + left) * categories_ + right];
  }
  double terminal_prob(std::size_t block, CategoryId parent, WordId w) const {
    return blocks_[block].terminal[parent * vocab_ + w];
  }
  bool usable(std::size_t block, CategoryId c) const { return blocks_[block].usable[c] != 0; }

 private:
  std::size_t categories_ = 0;
  std::size_t vocab_ = 0;
  std::vector<RuleBlock> blocks_;
  std::size_t root_block_ = 0;
  CategoryId root_category_ = 0;
};

// Unbounded grammar: one block whose children live in the same block,
// rooted at T.
inline ChartGrammar plain_chart_grammar(const Grammar& g) {
  const std::size_t C = g.num_categories();
  const std::size_t W = g.vocab_size();
  RuleBlock b;
  b.name = "";
  b.left_child = 0;
  b.right_child = 0;
  b.binary.resize(C * C * C);
  b.terminal.resize(C * W);
  b.usable.assign(C, 1);
  for (CategoryId c = 0; c < C; ++c) {
    auto row = g.row(c);
    std::copy(row.begin(), row.begin() + C * C, b.binary.begin() + c * C * C);
    std::copy(row.begin() + C * C, row.end(), b.terminal.begin() + c * W);
  }
  return ChartGrammar(C, W, {std::move(b)}, 0, CategorySet::top);
}

}  // namespace bpcfg
