#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "chart_grammar.hpp"
#include "errors.hpp"
#include "grammar.hpp"
#include "position.hpp"

namespace bpcfg {

inline constexpr int kDefaultContainmentIterations = 20;
inline constexpr double kContainmentFloor = 1e-12;
inline constexpr double kContainmentWarnChange = 1e-8;

// Block layout shared by containment, bounded grammars and bounded counts:
// L1..L(D+1) first, then R0..RD.
inline std::size_t bounded_block_count(int max_depth) {
  return 2 * static_cast<std::size_t>(max_depth) + 2;
}
inline std::size_t bounded_block_index(Position p, int max_depth) {
  if (!is_valid_position(p, max_depth))
    throw ParameterError("position " + to_string(p) + " outside depth bound " +
                         std::to_string(max_depth));
  return p.side == Side::left ? static_cast<std::size_t>(p.depth - 1)
                              : static_cast<std::size_t>(max_depth + 1 + p.depth);
}
inline Position bounded_block_position(std::size_t block, int max_depth) {
  auto d = static_cast<int>(block);
  if (d <= max_depth) return {Side::left, d + 1};
  return {Side::right, d - max_depth - 1};
}

// Probability that a category at a given side/depth generates a complete
// yield without exceeding the depth bound, after a fixed number of
// fixed-point iterations.
class Containment {
 public:
  Containment(std::size_t categories, int max_depth, int iterations)
      : categories_(categories),
        max_depth_(max_depth),
        iterations_(iterations),
        values_(bounded_block_count(max_depth) * categories, 0.0),
        zeros_(categories, 0.0) {}

  std::size_t num_categories() const { return categories_; }
  int max_depth() const { return max_depth_; }
  int iterations() const { return iterations_; }

  // Zero vector for positions outside the bound.
  std::span<const double> at(Position p) const {
    if (!is_valid_position(p, max_depth_)) return zeros_;
    return {values_.data() + bounded_block_index(p, max_depth_) * categories_, categories_};
  }
  double at(Position p, CategoryId c) const { return at(p)[c]; }

  // Largest entrywise change made by the final iteration.
  double last_change() const { return last_change_; }
  bool converged(double tolerance = kContainmentWarnChange) const {
    return last_change_ <= tolerance;
  }

 private:
  friend Containment compute_containment(const Grammar&, int, int);

  std::size_t categories_;
  int max_depth_;
  int iterations_;
  std::vector<double> values_;
  std::vector<double> zeros_;
  double last_change_ = 0.0;
};

// h^(0) = 0;
// h_{L,d} = G (terminal mass + h_{L,d} (x) h_{R,d})     1 <= d <= D+1
// h_{R,0} = indicator of T
// h_{R,d} = G (terminal mass + h_{L,d+1} (x) h_{R,d})   1 <= d <= D
// with every right-hand side taken from the previous iterate.
inline Containment compute_containment(const Grammar& g, int max_depth,
                                       int iterations = kDefaultContainmentIterations) {
  if (max_depth < 1) throw ParameterError("depth bound must be at least 1");
  if (iterations < 1) throw ParameterError("containment needs at least one iteration");
  const std::size_t C = g.num_categories();
  const int D = max_depth;
  Containment h(C, D, iterations);

  std::vector<double> terminal(C);
  for (CategoryId c = 0; c < C; ++c) terminal[c] = g.terminal_mass(c);

  std::vector<double> next(h.values_.size());
  std::vector<double> inner(C);
  for (int it = 0; it < iterations; ++it) {
    for (std::size_t blk = 0; blk < bounded_block_count(D); ++blk) {
      Position p = bounded_block_position(blk, D);
      double* out = next.data() + blk * C;
      if (p == kRootPosition) {
        std::fill(out, out + C, 0.0);
        out[CategorySet::top] = 1.0;
        continue;
      }
      auto [lp, rp] = child_positions(p);
      auto hl = h.at(lp);
      auto hr = h.at(rp);
      for (CategoryId c = 0; c < C; ++c) {
        double mass = 0.0;
        for (CategoryId a = 0; a < C; ++a) {
          if (hl[a] == 0.0) continue;
          double s = 0.0;
          for (CategoryId b = 0; b < C; ++b) s += g.binary_prob(c, a, b) * hr[b];
          mass += hl[a] * s;
        }
        out[c] = std::min(1.0, terminal[c] + mass);
      }
    }
    double change = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) {
      if (next[i] < h.values_[i])
        throw InternalError("containment iterate decreased");
      change = std::max(change, next[i] - h.values_[i]);
    }
    h.values_.swap(next);
    h.last_change_ = change;
  }
  return h;
}

// Depth-bounded grammar: side/depth-specific copies of the unbounded rules,
// reweighted by the containment of the children at their positions and
// renormalized. Rows whose containment is below kContainmentFloor are
// zeroed and marked unusable.
class BoundedGrammar {
 public:
  BoundedGrammar(ChartGrammar chart, int max_depth)
      : chart_(std::move(chart)), max_depth_(max_depth) {}

  const ChartGrammar& chart() const { return chart_; }
  int max_depth() const { return max_depth_; }
  std::size_t num_categories() const { return chart_.num_categories(); }
  std::size_t vocab_size() const { return chart_.vocab_size(); }

  std::size_t block_index(Position p) const { return bounded_block_index(p, max_depth_); }

  double binary_prob(Position p, CategoryId parent, CategoryId left, CategoryId right) const {
    if (!is_valid_position(p, max_depth_)) return 0.0;
    return chart_.binary_prob(block_index(p), parent, left, right);
  }
  double terminal_prob(Position p, CategoryId parent, WordId w) const {
    if (!is_valid_position(p, max_depth_)) return 0.0;
    return chart_.terminal_prob(block_index(p), parent, w);
  }
  bool usable(Position p, CategoryId c) const {
    return is_valid_position(p, max_depth_) && chart_.usable(block_index(p), c);
  }

  // Dense numbering of the 2*D*C + C + 1 side/depth/category slots a bounded
  // derivation can use: L1..L(D+1), R1..RD, then (R,0,T).
  static std::size_t slot_space(std::size_t categories, int max_depth) {
    return 2 * static_cast<std::size_t>(max_depth) * categories + categories + 1;
  }
  std::size_t slot_space() const { return slot_space(num_categories(), max_depth_); }

  std::size_t position_index(Position p, CategoryId c) const {
    const std::size_t C = num_categories();
    if (c >= C || !is_valid_position(p, max_depth_))
      throw ParameterError("no slot for " + to_string(p));
    if (p.side == Side::left) return static_cast<std::size_t>(p.depth - 1) * C + c;
    if (p.depth == 0) {
      if (c != CategorySet::top) throw ParameterError("only T may occupy R0");
      return slot_space() - 1;
    }
    return static_cast<std::size_t>(max_depth_ + 1) * C +
           static_cast<std::size_t>(p.depth - 1) * C + c;
  }

  std::pair<Position, CategoryId> position_at(std::size_t index) const {
    const std::size_t C = num_categories();
    if (index >= slot_space()) throw ParameterError("slot index out of range");
    if (index == slot_space() - 1) return {kRootPosition, CategorySet::top};
    const std::size_t left_slots = static_cast<std::size_t>(max_depth_ + 1) * C;
    auto c = static_cast<CategoryId>(index % C);
    if (index < left_slots) return {{Side::left, static_cast<int>(index / C) + 1}, c};
    return {{Side::right, static_cast<int>((index - left_slots) / C) + 1}, c};
  }

 private:
  ChartGrammar chart_;
  int max_depth_;
};

inline BoundedGrammar bound_grammar(const Grammar& g, const Containment& h,
                                    std::optional<int> expected_depth = std::nullopt) {
  if (h.num_categories() != g.num_categories())
    throw ParameterError("containment was computed for a different grammar");
  if (expected_depth && *expected_depth != h.max_depth())
    throw ParameterError("containment depth " + std::to_string(h.max_depth()) +
                         " does not match requested depth " + std::to_string(*expected_depth));
  const std::size_t C = g.num_categories();
  const std::size_t W = g.vocab_size();
  const int D = h.max_depth();

  auto floored = [&](Position p) {
    std::vector<double> v(h.at(p).begin(), h.at(p).end());
    for (double& x : v)
      if (x < kContainmentFloor) x = 0.0;
    return v;
  };

  std::vector<RuleBlock> blocks(bounded_block_count(D));
  for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
    Position p = bounded_block_position(blk, D);
    RuleBlock& b = blocks[blk];
    b.name = to_string(p);
    b.terminal.assign(C * W, 0.0);
    b.usable.assign(C, 0);
    auto [lp, rp] = child_positions(p);
    const bool binary = is_valid_position(lp, D) && is_valid_position(rp, D);
    std::vector<double> hl, hr;
    if (binary) {
      b.left_child = bounded_block_index(lp, D);
      b.right_child = bounded_block_index(rp, D);
      b.binary.assign(C * C * C, 0.0);
      hl = floored(lp);
      hr = floored(rp);
    }
    auto hp = h.at(p);
    for (CategoryId c = 0; c < C; ++c) {
      if (hp[c] < kContainmentFloor) continue;
      double mass = 0.0;
      if (binary) {
        for (CategoryId a = 0; a < C; ++a)
          for (CategoryId x = 0; x < C; ++x) {
            double v = g.binary_prob(c, a, x) * hl[a] * hr[x];
            b.binary[(c * C + a) * C + x] = v;
            mass += v;
          }
      }
      for (WordId w = 0; w < W; ++w) {
        double v = g.terminal_prob(c, w);
        b.terminal[c * W + w] = v;
        mass += v;
      }
      if (!(mass > 0.0)) {
        if (binary) std::fill_n(b.binary.begin() + c * C * C, C * C, 0.0);
        std::fill_n(b.terminal.begin() + c * W, W, 0.0);
        continue;
      }
      b.usable[c] = 1;
      if (binary)
        for (std::size_t k = 0; k < C * C; ++k) b.binary[c * C * C + k] /= mass;
      for (WordId w = 0; w < W; ++w) b.terminal[c * W + w] /= mass;
    }
  }
  return BoundedGrammar(
      ChartGrammar(C, W, std::move(blocks), bounded_block_index(kRootPosition, D),
                   CategorySet::top),
      D);
}

// Convenience: containment + transform in one step.
inline BoundedGrammar bound_grammar(const Grammar& g, int max_depth,
                                    int iterations = kDefaultContainmentIterations) {
  return bound_grammar(g, compute_containment(g, max_depth, iterations), max_depth);
}

// Rule counts kept per parent position; children are implicitly at
// child_positions(parent).
class BoundedCounts {
 public:
  BoundedCounts(std::size_t categories, std::size_t vocab, int max_depth)
      : max_depth_(max_depth),
        per_block_(bounded_block_count(max_depth), CountMatrix(categories, vocab)) {}

  int max_depth() const { return max_depth_; }
  CountMatrix& at(Position p) { return per_block_[bounded_block_index(p, max_depth_)]; }
  const CountMatrix& at(Position p) const {
    return per_block_[bounded_block_index(p, max_depth_)];
  }
  const std::vector<CountMatrix>& blocks() const { return per_block_; }

 private:
  int max_depth_;
  std::vector<CountMatrix> per_block_;
};

// Sums out side and depth.
inline CountMatrix project_counts(const BoundedCounts& bounded) {
  const auto& blocks = bounded.blocks();
  CountMatrix out = blocks.front();
  for (std::size_t i = 1; i < blocks.size(); ++i) out += blocks[i];
  return out;
}

// --- bounded grammar file ------------------------------------------------------
// Same layout as the grammar file, plus a `depth` header; categories are
// written `c<index>@<L|R><depth>`. Only usable rows are listed.

inline std::string bounded_category_token(CategoryId c, Position p) {
  return category_token(c) + "@" + to_string(p);
}

inline std::optional<std::pair<CategoryId, Position>> parse_bounded_category_token(
    std::string_view tok) {
  auto at = tok.find('@');
  if (at == std::string_view::npos || at + 2 >= tok.size() + 0) return std::nullopt;
  auto c = parse_category_token(tok.substr(0, at));
  char side = tok[at + 1];
  if (!c || (side != 'L' && side != 'R')) return std::nullopt;
  int d = 0;
  auto rest = tok.substr(at + 2);
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), d);
  if (ec != std::errc() || ptr != rest.data() + rest.size()) return std::nullopt;
  return std::pair{*c, Position{side == 'L' ? Side::left : Side::right, d}};
}

inline void write_bounded_grammar(std::ostream& out, const BoundedGrammar& bg,
                                  const Vocabulary& vocab) {
  if (vocab.size() != bg.vocab_size()) throw ParameterError("vocabulary does not match grammar");
  const std::size_t C = bg.num_categories();
  const auto& chart = bg.chart();
  out << "categories\t" << C << '\n' << "depth\t" << bg.max_depth() << '\n' << "vocab\t";
  for (std::size_t w = 0; w < vocab.size(); ++w) out << (w ? " " : "") << vocab.word(w);
  out << '\n';
  for (std::size_t blk = 0; blk < chart.num_blocks(); ++blk) {
    Position p = bounded_block_position(blk, bg.max_depth());
    auto [lp, rp] = child_positions(p);
    const auto& block = chart.block(blk);
    for (CategoryId c = 0; c < C; ++c) {
      if (!block.usable[c]) continue;
      const std::string parent = bounded_category_token(c, p);
      if (block.has_binary())
        for (CategoryId a = 0; a < C; ++a)
          for (CategoryId b = 0; b < C; ++b)
            out << parent << '\t' << bounded_category_token(a, lp) << '\t'
                << bounded_category_token(b, rp) << '\t'
                << format_probability(chart.binary_prob(blk, c, a, b)) << '\n';
      for (WordId w = 0; w < vocab.size(); ++w)
        out << parent << '\t' << vocab.word(w) << "\t-\t"
            << format_probability(chart.terminal_prob(blk, c, w)) << '\n';
    }
  }
}

struct BoundedGrammarFile {
  BoundedGrammar grammar;
  Vocabulary vocabulary;
};

inline BoundedGrammarFile read_bounded_grammar(std::istream& in) {
  using detail::fail_line;
  std::optional<std::size_t> C;
  std::optional<int> D;
  std::optional<Vocabulary> vocab;
  std::vector<RuleBlock> blocks;
  std::vector<std::vector<std::size_t>> last_line;

  std::string raw;
  std::size_t lineno = 0;
  auto parse_uint = [&](std::string_view s) {
    std::size_t n = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
    if (ec != std::errc() || p != s.data() + s.size()) fail_line(lineno, "malformed header");
    return n;
  };
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = detail::strip_cr(raw);
    if (line.empty() || line[0] == '#') continue;
    auto f = detail::split(line, '\t');
    if (f[0] == "categories" && f.size() == 2 && !C) {
      C = parse_uint(f[1]);
      if (*C == 0) fail_line(lineno, "malformed header");
      continue;
    }
    if (f[0] == "depth" && f.size() == 2 && !D) {
      D = static_cast<int>(parse_uint(f[1]));
      if (*D < 1) fail_line(lineno, "depth must be at least 1");
      continue;
    }
    if (f[0] == "vocab" && f.size() == 2 && !vocab) {
      vocab = Vocabulary(detail::split_whitespace(f[1]));
      if (vocab->empty()) fail_line(lineno, "empty vocabulary");
      continue;
    }
    if (!C || !D || !vocab) fail_line(lineno, "rule before headers");
    const std::size_t W = vocab->size();
    if (blocks.empty()) {
      blocks.resize(bounded_block_count(*D));
      last_line.assign(blocks.size(), std::vector<std::size_t>(*C, 0));
      for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
        Position p = bounded_block_position(blk, *D);
        auto [lp, rp] = child_positions(p);
        auto& b = blocks[blk];
        b.name = to_string(p);
        b.terminal.assign(*C * W, 0.0);
        b.usable.assign(*C, 0);
        if (is_valid_position(lp, *D) && is_valid_position(rp, *D)) {
          b.left_child = bounded_block_index(lp, *D);
          b.right_child = bounded_block_index(rp, *D);
          b.binary.assign(*C * *C * *C, 0.0);
        }
      }
    }
    if (f.size() != 4) fail_line(lineno, "malformed rule (expected 4 tab-separated fields)");
    auto slot = [&](std::string_view tok) {
      auto s = parse_bounded_category_token(tok);
      if (!s || s->first >= *C || !is_valid_position(s->second, *D))
        fail_line(lineno, "unknown category '" + std::string(tok) + "'");
      return *s;
    };
    auto [parent, pos] = slot(f[0]);
    std::size_t blk = bounded_block_index(pos, *D);
    auto& b = blocks[blk];
    auto prob = detail::parse_double(f[3]);
    if (!prob || !(*prob >= 0.0)) fail_line(lineno, "bad probability");
    if (f[2] == "-") {
      auto w = vocab->find(f[1]);
      if (!w) fail_line(lineno, "unknown word '" + std::string(f[1]) + "'");
      b.terminal[parent * W + *w] = *prob;
    } else {
      auto [a, apos] = slot(f[1]);
      auto [x, xpos] = slot(f[2]);
      auto [lp, rp] = child_positions(pos);
      if (!b.has_binary() || apos != lp || xpos != rp)
        fail_line(lineno, "child positions do not follow parent " + to_string(pos));
      b.binary[(parent * *C + a) * *C + x] = *prob;
    }
    b.usable[parent] = 1;
    last_line[blk][parent] = lineno;
  }
  if (!C || !D || !vocab || blocks.empty())
    throw ParseError("incomplete bounded grammar file", lineno);
  const std::size_t W = vocab->size();
  for (std::size_t blk = 0; blk < blocks.size(); ++blk) {
    auto& b = blocks[blk];
    for (CategoryId c = 0; c < *C; ++c) {
      if (!b.usable[c]) continue;
      double sum = 0.0;
      if (b.has_binary())
        for (std::size_t k = 0; k < *C * *C; ++k) sum += b.binary[c * *C * *C + k];
      for (std::size_t w = 0; w < W; ++w) sum += b.terminal[c * W + w];
      if (std::abs(sum - 1.0) > 1e-6) fail_line(last_line[blk][c], "row sum is " + format_probability(sum));
    }
  }
  BoundedGrammar bg(ChartGrammar(*C, W, std::move(blocks),
                                 bounded_block_index(kRootPosition, *D), CategorySet::top),
                    *D);
  return BoundedGrammarFile{std::move(bg), std::move(*vocab)};
}

}  // namespace bpcfg
