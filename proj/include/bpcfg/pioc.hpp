#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "treebank.hpp"

namespace bpcfg {

// Monte Carlo span and split-point counts for one sentence, pooled over any
// number of posterior samples (from any iterations or runs). Labels are
// ignored.
class SpanStats {
 public:
  explicit SpanStats(std::vector<std::string> words) : words_(std::move(words)) {}

  // Adds one sample, which must yield exactly this sentence. A node with
  // more than two children (a flattened constituent) counts as a span
  // without split evidence.
  void add(const Tree& sample) {
    auto y = yield(sample);
    if (y != words_)
      throw DataError("sample yield '" + join(y) + "' does not match sentence '" + join(words_) + "'");
    std::set<std::pair<std::size_t, std::size_t>> spans;
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> splits;
    collect(sample, 0, spans, splits);
    for (auto s : spans) ++spans_[s];
    for (auto s : splits) ++splits_[s];
    ++total_;
  }

  SpanStats& operator+=(const SpanStats& other) {
    if (other.words_ != words_) throw DataError("cannot pool statistics of different sentences");
    for (auto& [k, v] : other.spans_) spans_[k] += v;
    for (auto& [k, v] : other.splits_) splits_[k] += v;
    total_ += other.total_;
    return *this;
  }

  const std::vector<std::string>& words() const { return words_; }
  std::size_t length() const { return words_.size(); }
  std::uint64_t total_samples() const { return total_; }

  std::uint64_t span_count(std::size_t i, std::size_t j) const {
    auto it = spans_.find({i, j});
    return it == spans_.end() ? 0 : it->second;
  }
  std::uint64_t split_count(std::size_t i, std::size_t j, std::size_t k) const {
    auto it = splits_.find({i, j, k});
    return it == splits_.end() ? 0 : it->second;
  }
  // P(split at k | span (i, j)); 0 for spans never observed.
  double split_posterior(std::size_t i, std::size_t j, std::size_t k) const {
    auto n = span_count(i, j);
    return n == 0 ? 0.0 : static_cast<double>(split_count(i, j, k)) / static_cast<double>(n);
  }

 private:
  static std::string join(const std::vector<std::string>& w) {
    std::string s;
    for (const auto& x : w) s += (s.empty() ? "" : " ") + x;
    return s;
  }

  // Returns the width of `t`.
  static std::size_t collect(const Tree& t, std::size_t start,
                             std::set<std::pair<std::size_t, std::size_t>>& spans,
                             std::set<std::tuple<std::size_t, std::size_t, std::size_t>>& splits) {
    if (t.is_leaf()) {
      spans.insert({start, start + 1});
      return 1;
    }
    std::size_t width = collect(t.children[0], start, spans, splits);
    if (t.children.size() == 2) {
      std::size_t k = start + width;
      width += collect(t.children[1], k, spans, splits);
      splits.insert({start, start + width, k});
    } else {
      for (std::size_t c = 1; c < t.children.size(); ++c)
        width += collect(t.children[c], start + width, spans, splits);
    }
    spans.insert({start, start + width});
    return width;
  }

  std::vector<std::string> words_;
  std::uint64_t total_ = 0;
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> spans_;
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::uint64_t> splits_;
};

// samples[n] holds every sample of sentence n.
inline std::vector<SpanStats> collect_span_stats(std::span<const std::vector<Tree>> samples) {
  std::vector<SpanStats> out;
  for (std::size_t n = 0; n < samples.size(); ++n) {
    if (samples[n].empty()) throw DataError("sentence " + std::to_string(n) + " has no samples");
    SpanStats stats(yield(samples[n].front()));
    for (const auto& t : samples[n]) {
      try {
        stats.add(t);
      } catch (const DataError& e) {
        throw DataError("sentence " + std::to_string(n) + ": " + e.what());
      }
    }
    out.push_back(std::move(stats));
  }
  return out;
}

// MAP unlabeled tree: from the whole sentence down, each constituent takes
// its most frequent split (smallest k on ties). A span with no split
// evidence (never sampled, or only sampled flat) takes the k maximizing
// span_count(i,k) + span_count(k,j), again smallest k on ties. Every node
// is labelled X; words are bare leaves.
inline Tree map_decode(const SpanStats& stats) {
  const auto& words = stats.words();
  if (words.empty()) throw DataError("cannot decode an empty sentence");
  auto build = [&](auto&& self, std::size_t i, std::size_t j) -> Tree {
    if (j - i == 1) return Tree::leaf(words[i]);
    bool observed = false;
    for (std::size_t k = i + 1; k < j && !observed; ++k) observed = stats.split_count(i, j, k) > 0;
    std::size_t best = i + 1;
    std::uint64_t best_score = 0;
    for (std::size_t k = i + 1; k < j; ++k) {
      std::uint64_t score = observed ? stats.split_count(i, j, k)
                                     : stats.span_count(i, k) + stats.span_count(k, j);
      if (k == i + 1 || score > best_score) {
        best = k;
        best_score = score;
      }
    }
    return Tree::node("X", {self(self, i, best), self(self, best, j)});
  };
  return build(build, 0, words.size());
}

inline constexpr double kDefaultMergeThreshold = 0.3;

// Flattens decoded constituents covering 3 or 4 words when the gap between
// their two most probable splits is below `threshold`: the words become
// direct children of the constituent. Wider spans are left alone.
inline Tree merge_uncertain_spans(const Tree& tree, const SpanStats& stats,
                                  double threshold = kDefaultMergeThreshold) {
  const auto& words = stats.words();
  auto walk = [&](auto&& self, const Tree& t, std::size_t i) -> Tree {
    if (t.is_leaf()) return t;
    std::size_t j = i + yield_length(t);
    const std::size_t width = j - i;
    if ((width == 3 || width == 4) && t.children.size() == 2) {
      std::vector<double> post;
      for (std::size_t k = i + 1; k < j; ++k) post.push_back(stats.split_posterior(i, j, k));
      std::sort(post.begin(), post.end(), std::greater<>());
      if (post[0] - post[1] < threshold) {
        std::vector<Tree> leaves;
        for (std::size_t w = i; w < j; ++w) leaves.push_back(Tree::leaf(words.at(w)));
        return Tree::node(t.label, std::move(leaves));
      }
    }
    std::vector<Tree> children;
    std::size_t at = i;
    for (const auto& c : t.children) {
      children.push_back(self(self, c, at));
      at += yield_length(c);
    }
    return Tree::node(t.label, std::move(children));
  };
  if (yield_length(tree) != stats.length())
    throw DataError("tree and statistics cover different sentences");
  return walk(walk, tree, 0);
}

}  // namespace bpcfg
