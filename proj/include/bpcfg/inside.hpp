#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "bounding.hpp"
#include "chart_grammar.hpp"
#include "errors.hpp"
#include "grammar.hpp"
#include "random.hpp"
#include "treebank.hpp"

namespace bpcfg {

enum class InsidePath { naive, batched };

// Cells whose largest entry falls below this are rescaled by a power of two.
// Low enough to leave short sentences unscaled, high enough that the
// product of two stored cells cannot underflow.
inline constexpr double kRescaleThreshold = 1e-100;

// Inside likelihoods V[i, j, slot] for 0 <= i < j <= L. The true likelihood
// of a cell is value * 2^exponent(i, j). A second copy with the span
// indices swapped makes V[i, i+1..j-1, :] and V'[j, i+1..j-1, :] contiguous
// so the split-point sum is a single matrix product.
class InsideChart {
 public:
  std::size_t length() const { return length_; }
  std::size_t chart_size() const { return slots_; }
  std::size_t root_slot() const { return root_; }
  std::span<const WordId> sentence() const { return sentence_; }

  std::span<const double> cell(std::size_t i, std::size_t j) const {
    return {forward_.data() + offset(i, j), slots_};
  }
  double value(std::size_t i, std::size_t j, std::size_t slot) const {
    return forward_[offset(i, j) + slot];
  }
  int scale_exponent(std::size_t i, std::size_t j) const { return exponent_[i * (length_ + 1) + j]; }
  // Natural-log scaling: log true likelihood = log value + scale_log.
  double scale_log(std::size_t i, std::size_t j) const {
    return scale_exponent(i, j) * std::numbers::ln2;
  }

  InsideChart(std::size_t length, std::size_t slots, std::size_t root,
              std::vector<WordId> sentence)
      : length_(length),
        slots_(slots),
        root_(root),
        sentence_(std::move(sentence)),
        forward_((length + 1) * (length + 1) * slots, 0.0),
        reversed_(forward_.size(), 0.0),
        exponent_((length + 1) * (length + 1), 0) {}

  std::size_t offset(std::size_t i, std::size_t j) const { return (i * (length_ + 1) + j) * slots_; }
  std::size_t reversed_offset(std::size_t i, std::size_t j) const {
    return (j * (length_ + 1) + i) * slots_;
  }

  // Stores cell (i, j) in both layouts after rescaling; `exponent` is the
  // power of two already factored out of `values`.
  void store(std::size_t i, std::size_t j, std::span<double> values, int exponent) {
    double mx = 0.0;
    for (double v : values) mx = std::max(mx, v);
    if (mx > 0.0 && (mx < kRescaleThreshold || mx > 1.0)) {
      int e = 0;
      std::frexp(mx, &e);
      for (double& v : values) v = std::ldexp(v, -e);
      exponent += e;
    }
    if (mx == 0.0) exponent = 0;
    std::copy(values.begin(), values.end(), forward_.begin() + offset(i, j));
    std::copy(values.begin(), values.end(), reversed_.begin() + reversed_offset(i, j));
    exponent_[i * (length_ + 1) + j] = exponent;
  }

  const double* forward_data() const { return forward_.data(); }
  const double* reversed_data() const { return reversed_.data(); }

 private:
  std::size_t length_;
  std::size_t slots_;
  std::size_t root_;
  std::vector<WordId> sentence_;
  std::vector<double> forward_;
  std::vector<double> reversed_;
  std::vector<int> exponent_;
};

namespace detail {

// Relative weights 2^(e_ik + e_kj - ref) of the split points of (i, j);
// returns ref.
inline int split_weights(const InsideChart& chart, std::size_t i, std::size_t j,
                         std::vector<double>& weights) {
  weights.resize(j - i - 1);
  int ref = std::numeric_limits<int>::min();
  for (std::size_t k = i + 1; k < j; ++k)
    ref = std::max(ref, chart.scale_exponent(i, k) + chart.scale_exponent(k, j));
  for (std::size_t k = i + 1; k < j; ++k)
    weights[k - i - 1] =
        std::ldexp(1.0, chart.scale_exponent(i, k) + chart.scale_exponent(k, j) - ref);
  return ref;
}

inline void naive_cell(const ChartGrammar& g, const InsideChart& chart, std::size_t i,
                       std::size_t j, std::span<const double> weights, std::span<double> out) {
  const std::size_t C = g.num_categories();
  for (std::size_t blk = 0; blk < g.num_blocks(); ++blk) {
    const RuleBlock& block = g.block(blk);
    if (!block.has_binary()) continue;
    for (CategoryId c = 0; c < C; ++c) {
      if (!block.usable[c]) continue;
      const double* rules = block.binary.data() + c * C * C;
      double sum = 0.0;
      for (std::size_t k = i + 1; k < j; ++k) {
        const double* left = chart.cell(i, k).data() + block.left_child * C;
        const double* right = chart.cell(k, j).data() + block.right_child * C;
        for (CategoryId a = 0; a < C; ++a) {
          if (left[a] == 0.0) continue;
          for (CategoryId b = 0; b < C; ++b)
            sum += rules[a * C + b] * left[a] * right[b] * weights[k - i - 1];
        }
      }
      out[blk * C + c] = sum;
    }
  }
}

inline void batched_cell(const ChartGrammar& g, const InsideChart& chart, std::size_t i,
                         std::size_t j, std::span<const double> weights, std::span<double> out) {
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Strided = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;
  const auto C = static_cast<Eigen::Index>(g.num_categories());
  const auto K = static_cast<Eigen::Index>(chart.chart_size());
  const auto splits = static_cast<Eigen::Index>(j - i - 1);
  const bool uniform =
      std::all_of(weights.begin(), weights.end(), [](double w) { return w == 1.0; });
  Eigen::Map<const Eigen::VectorXd> scale(weights.data(), splits);

  // Blocks that share a (left, right) child pair share the outer-product sum.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::vector<RowMatrix> sums;
  for (std::size_t blk = 0; blk < g.num_blocks(); ++blk) {
    const RuleBlock& block = g.block(blk);
    if (!block.has_binary()) continue;
    std::pair key{block.left_child, block.right_child};
    auto it = std::find(pairs.begin(), pairs.end(), key);
    std::size_t idx = static_cast<std::size_t>(it - pairs.begin());
    if (it == pairs.end()) {
      Strided left(chart.forward_data() + chart.offset(i, i + 1) + key.first * C, splits, C,
                   Eigen::OuterStride<>(K));
      Strided right(chart.reversed_data() + chart.reversed_offset(i + 1, j) + key.second * C,
                    splits, C, Eigen::OuterStride<>(K));
      if (uniform)
        sums.emplace_back(left.transpose() * right);
      else
        sums.emplace_back(left.transpose() * scale.asDiagonal() * right);
      pairs.push_back(key);
    }
    Eigen::Map<const RowMatrix> rules(block.binary.data(), C, C * C);
    Eigen::Map<const Eigen::VectorXd> outer(sums[idx].data(), C * C);
    Eigen::Map<Eigen::VectorXd> target(out.data() + blk * C, C);
    target.noalias() = rules * outer;
  }
}

}  // namespace detail

inline InsideChart build_inside_chart(const ChartGrammar& g, std::span<const WordId> sentence,
                                      InsidePath path = InsidePath::batched) {
  if (sentence.empty()) throw ParameterError("empty sentence");
  for (WordId w : sentence)
    if (w >= g.vocab_size()) throw DataError("token id " + std::to_string(w) + " not in vocabulary");
  if (!g.usable(g.root_block(), g.root_category()))
    throw DegenerateGrammarError("root category cannot be expanded");

  const std::size_t L = sentence.size();
  const std::size_t C = g.num_categories();
  const std::size_t K = g.chart_size();
  InsideChart chart(L, K, g.root_slot(), std::vector<WordId>(sentence.begin(), sentence.end()));
  std::vector<double> cell(K);
  std::vector<double> weights;

  for (std::size_t i = 0; i < L; ++i) {
    std::fill(cell.begin(), cell.end(), 0.0);
    for (std::size_t blk = 0; blk < g.num_blocks(); ++blk)
      for (CategoryId c = 0; c < C; ++c) cell[blk * C + c] = g.terminal_prob(blk, c, sentence[i]);
    chart.store(i, i + 1, cell, 0);
  }
  for (std::size_t width = 2; width <= L; ++width) {
    for (std::size_t i = 0; i + width <= L; ++i) {
      const std::size_t j = i + width;
      std::fill(cell.begin(), cell.end(), 0.0);
      int ref = detail::split_weights(chart, i, j, weights);
      if (path == InsidePath::naive)
        detail::naive_cell(g, chart, i, j, weights, cell);
      else
        detail::batched_cell(g, chart, i, j, weights, cell);
      chart.store(i, j, cell, ref);
    }
  }
  return chart;
}

inline InsideChart build_inside_chart(const Grammar& g, std::span<const WordId> sentence,
                                      InsidePath path = InsidePath::batched) {
  return build_inside_chart(plain_chart_grammar(g), sentence, path);
}

inline InsideChart build_inside_chart(const BoundedGrammar& g, std::span<const WordId> sentence,
                                      InsidePath path = InsidePath::batched) {
  return build_inside_chart(g.chart(), sentence, path);
}

// Log likelihood of the whole sentence from the root slot; -inf when the
// grammar cannot generate it.
inline double sentence_log_likelihood(const InsideChart& chart) {
  const std::size_t L = chart.length();
  double v = chart.value(0, L, chart.root_slot());
  if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
  return std::log(v) + chart.scale_log(0, L);
}

struct SampledTree {
  Tree tree;
  double log_prob = 0.0;  // log posterior probability of the sampled derivation
};

namespace detail {

inline std::size_t draw(std::span<const double> weights, double total, Rng& rng) {
  double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = weights.size();
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] <= 0.0) continue;
    acc += weights[k];
    last = k;
    if (u < acc) return k;
  }
  // u landed in the rounding gap at the top of the cumulative sum.
  return last;
}

struct TreeSampler {
  const ChartGrammar& g;
  const InsideChart& chart;
  const Vocabulary& vocab;
  Rng& rng;
  double log_prob = 0.0;
  std::vector<double> split_w;
  std::vector<double> pair_w;
  std::vector<double> scale;

  Tree sample(std::size_t slot, std::size_t i, std::size_t j) {
    const std::size_t C = g.num_categories();
    const std::size_t blk = g.block_of(slot);
    const CategoryId c = g.category_of(slot);
    const std::string label = category_token(c);
    if (j - i == 1) return Tree::node(label, {Tree::leaf(vocab.word(chart.sentence()[i]))});

    const RuleBlock& block = g.block(blk);
    const double* rules = block.binary.data() + c * C * C;
    split_weights(chart, i, j, scale);

    // Split point, summed over child labels.
    split_w.assign(j - i - 1, 0.0);
    double total = 0.0;
    for (std::size_t k = i + 1; k < j; ++k) {
      const double* left = chart.cell(i, k).data() + block.left_child * C;
      const double* right = chart.cell(k, j).data() + block.right_child * C;
      double s = 0.0;
      for (CategoryId a = 0; a < C; ++a) {
        if (left[a] == 0.0) continue;
        double inner = 0.0;
        for (CategoryId b = 0; b < C; ++b) inner += rules[a * C + b] * right[b];
        s += left[a] * inner;
      }
      split_w[k - i - 1] = s * scale[k - i - 1];
      total += split_w[k - i - 1];
    }
    if (!(total > 0.0)) throw SamplingError("constituent has zero inside mass");
    std::size_t k = i + 1 + draw(split_w, total, rng);
    log_prob += std::log(split_w[k - i - 1] / total);

    // Child label pair at that split, ordered (left, right) ascending.
    const double* left = chart.cell(i, k).data() + block.left_child * C;
    const double* right = chart.cell(k, j).data() + block.right_child * C;
    pair_w.assign(C * C, 0.0);
    double pair_total = 0.0;
    for (CategoryId a = 0; a < C; ++a)
      for (CategoryId b = 0; b < C; ++b) {
        double w = rules[a * C + b] * left[a] * right[b];
        pair_w[a * C + b] = w;
        pair_total += w;
      }
    std::size_t ab = draw(pair_w, pair_total, rng);
    log_prob += std::log(pair_w[ab] / pair_total);
    auto a = static_cast<CategoryId>(ab / C);
    auto b = static_cast<CategoryId>(ab % C);

    Tree lt = sample(g.slot(block.left_child, a), i, k);
    Tree rt = sample(g.slot(block.right_child, b), k, j);
    return Tree::node(label, {std::move(lt), std::move(rt)});
  }
};

}  // namespace detail

// Draws a tree from P(tree | grammar, sentence), top-down: a split point
// with probability proportional to its inside mass, then the child label
// pair at that split. Nodes are labelled with plain category tokens.
inline SampledTree sample_tree(const InsideChart& chart, const ChartGrammar& g,
                               const Vocabulary& vocab, Rng& rng) {
  if (chart.chart_size() != g.chart_size()) throw ParameterError("chart built for another grammar");
  if (!(chart.value(0, chart.length(), chart.root_slot()) > 0.0))
    throw SamplingError("sentence is unparsable under the grammar");
  detail::TreeSampler sampler{g, chart, vocab, rng, 0.0, {}, {}, {}};
  Tree t = sampler.sample(chart.root_slot(), 0, chart.length());
  return SampledTree{std::move(t), sampler.log_prob};
}

inline SampledTree sample_tree(const InsideChart& chart, const BoundedGrammar& g,
                               const Vocabulary& vocab, Rng& rng) {
  return sample_tree(chart, g.chart(), vocab, rng);
}

}  // namespace bpcfg
