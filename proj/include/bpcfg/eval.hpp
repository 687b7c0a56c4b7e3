#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "treebank.hpp"

namespace bpcfg {

using Span = std::pair<std::size_t, std::size_t>;

// Sorted multiset of constituent spans of width >= 2. A node whose only
// child is itself a constituent adds nothing (the chain is one bracket).
inline std::vector<Span> extract_spans(const Tree& tree, bool include_root = true) {
  std::vector<Span> spans;
  const std::size_t length = yield_length(tree);
  auto walk = [&](auto&& self, const Tree& t, std::size_t start) -> std::size_t {
    if (t.is_leaf()) return 1;
    std::size_t width = 0;
    for (const auto& c : t.children) width += self(self, c, start + width);
    bool chain = t.children.size() == 1 && !t.children[0].is_leaf();
    bool root = start == 0 && width == length;
    if (width >= 2 && !chain && (include_root || !root)) spans.emplace_back(start, start + width);
    return width;
  };
  walk(walk, tree, 0);
  std::sort(spans.begin(), spans.end());
  return spans;
}

inline std::size_t matched_spans(const std::vector<Span>& gold, const std::vector<Span>& pred) {
  std::vector<Span> common;
  std::set_intersection(gold.begin(), gold.end(), pred.begin(), pred.end(),
                        std::back_inserter(common));
  return common.size();
}

struct SentenceScore {
  std::size_t index = 0;
  bool skipped = false;
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
};

struct ParsevalResult {
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::size_t matched = 0;
  std::size_t gold = 0;
  std::size_t predicted = 0;
  std::size_t skipped = 0;
  std::vector<SentenceScore> sentences;
};

struct ParsevalOptions {
  bool include_root = true;
};

inline double f1_score(double recall, double precision) {
  return recall + precision > 0.0 ? 2.0 * recall * precision / (recall + precision) : 0.0;
}

// Corpus-level micro-averaged unlabeled PARSEVAL. Punctuation is stripped
// from both sides first; sentences that are all punctuation are skipped.
inline ParsevalResult unlabeled_parseval(std::span<const Tree> gold, std::span<const Tree> pred,
                                         const PunctuationPredicate& is_punct,
                                         ParsevalOptions options = {}) {
  if (gold.size() != pred.size())
    throw DataError("gold has " + std::to_string(gold.size()) + " trees but prediction has " +
                    std::to_string(pred.size()));
  ParsevalResult r;
  for (std::size_t n = 0; n < gold.size(); ++n) {
    SentenceScore s{n};
    auto g = strip_punctuation(gold[n], is_punct);
    auto p = strip_punctuation(pred[n], is_punct);
    if (!g || !p) {
      if (g || p) throw DataError("sentence " + std::to_string(n) + ": yield mismatch after punctuation removal");
      s.skipped = true;
      ++r.skipped;
      r.sentences.push_back(s);
      continue;
    }
    if (yield(*g) != yield(*p))
      throw DataError("sentence " + std::to_string(n) + ": gold and predicted yields differ");
    auto gs = extract_spans(*g, options.include_root);
    auto ps = extract_spans(*p, options.include_root);
    s.matched = matched_spans(gs, ps);
    s.gold = gs.size();
    s.predicted = ps.size();
    r.matched += s.matched;
    r.gold += s.gold;
    r.predicted += s.predicted;
    r.sentences.push_back(s);
  }
  r.recall = r.gold ? static_cast<double>(r.matched) / static_cast<double>(r.gold) : 0.0;
  r.precision = r.predicted ? static_cast<double>(r.matched) / static_cast<double>(r.predicted) : 0.0;
  r.f1 = f1_score(r.recall, r.precision);
  return r;
}

inline ParsevalResult unlabeled_parseval(std::span<const Tree> gold, std::span<const Tree> pred,
                                         ParsevalOptions options = {}) {
  return unlabeled_parseval(gold, pred, default_is_punctuation, options);
}

}  // namespace bpcfg
