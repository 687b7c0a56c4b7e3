#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "errors.hpp"
#include "random.hpp"

namespace bpcfg {

using WordId = std::uint32_t;
using CategoryId = std::uint32_t;

class Vocabulary {
 public:
  Vocabulary() = default;

  explicit Vocabulary(std::vector<std::string> words) {
    for (auto& w : words) {
      if (find(w)) throw DataError("duplicate vocabulary entry '" + w + "'");
      add(std::move(w));
    }
  }

  // Returns the id of `word`, inserting it if it is new.
  WordId add(std::string word) {
    if (auto it = index_.find(word); it != index_.end()) return it->second;
    auto id = static_cast<WordId>(words_.size());
    index_.emplace(word, id);
    words_.push_back(std::move(word));
    return id;
  }

  std::optional<WordId> find(std::string_view word) const {
    auto it = index_.find(std::string(word));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  WordId id(std::string_view word) const {
    if (auto found = find(word)) return *found;
    throw DataError("unknown word '" + std::string(word) + "'");
  }

  const std::string& word(WordId id) const { return words_.at(id); }
  const std::vector<std::string>& words() const { return words_; }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.words_ == b.words_;
  }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, WordId> index_;
};

// The C syntactic categories. Category 0 is the top category T.
class CategorySet {
 public:
  static constexpr CategoryId top = 0;

  explicit CategorySet(std::size_t count) : count_(count) {
    if (count == 0) throw ParameterError("need at least one category");
  }
  std::size_t count() const { return count_; }
  friend bool operator==(CategorySet, CategorySet) = default;

 private:
  std::size_t count_;
};

inline std::string category_token(CategoryId c) { return "c" + std::to_string(c); }

// Parses "c<index>"; returns nullopt when the token is not of that shape.
inline std::optional<CategoryId> parse_category_token(std::string_view tok) {
  if (tok.size() < 2 || tok[0] != 'c') return std::nullopt;
  CategoryId v = 0;
  auto [ptr, ec] = std::from_chars(tok.data() + 1, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

namespace detail {

// Row-major C x (C*C + W) table shared by Grammar and CountMatrix.
class RuleTable {
 public:
  RuleTable() = default;
  RuleTable(std::size_t categories, std::size_t vocab, double fill = 0.0)
      : categories_(categories),
        vocab_(vocab),
        values_(categories * (categories * categories + vocab), fill) {}

  std::size_t num_categories() const { return categories_; }
  std::size_t vocab_size() const { return vocab_; }
  std::size_t columns() const { return categories_ * categories_ + vocab_; }

  std::size_t pair_column(CategoryId left, CategoryId right) const {
    return static_cast<std::size_t>(left) * categories_ + right;
  }
  std::size_t word_column(WordId w) const { return categories_ * categories_ + w; }

  double at(CategoryId parent, std::size_t column) const {
    return values_[parent * columns() + column];
  }
  std::span<const double> row(CategoryId parent) const {
    return {values_.data() + parent * columns(), columns()};
  }
  std::span<const double> values() const { return values_; }

  bool same_shape(const RuleTable& o) const {
    return categories_ == o.categories_ && vocab_ == o.vocab_;
  }

 protected:
  std::span<double> mutable_row(CategoryId parent) {
    return {values_.data() + parent * columns(), columns()};
  }

  std::size_t categories_ = 0;
  std::size_t vocab_ = 0;
  std::vector<double> values_;
};

}  // namespace detail

// Unbounded CNF grammar: each parent row is a distribution over the C*C
// child pairs followed by the W words. Pair (a, b) lives in column a*C + b,
// word w in column C*C + w.
class Grammar : public detail::RuleTable {
 public:
  static constexpr double kRowTolerance = 1e-9;

  Grammar() = default;

  // Takes ownership of a row-major table; every row must already be a
  // distribution within kRowTolerance.
  Grammar(std::size_t categories, std::size_t vocab, std::vector<double> probs)
      : RuleTable(categories, vocab) {
    if (categories == 0) throw ParameterError("grammar needs at least one category");
    if (probs.size() != values_.size())
      throw ParameterError("grammar table has wrong size");
    values_ = std::move(probs);
    for (CategoryId c = 0; c < categories_; ++c) {
      double sum = 0.0;
      for (double p : row(c)) {
        if (!(p >= 0.0)) throw DataError("negative or NaN rule probability");
        sum += p;
      }
      if (std::abs(sum - 1.0) > kRowTolerance)
        throw DataError("row sum of " + category_token(c) + " is " + std::to_string(sum));
    }
  }

  // Normalizes each row of nonnegative weights. Zero rows are an error.
  static Grammar from_weights(std::size_t categories, std::size_t vocab,
                              std::vector<double> weights) {
    RuleTable shape(categories, vocab);
    if (weights.size() != shape.values().size())
      throw ParameterError("grammar table has wrong size");
    const std::size_t cols = shape.columns();
    for (std::size_t c = 0; c < categories; ++c) {
      double sum = 0.0;
      for (std::size_t k = 0; k < cols; ++k) {
        double w = weights[c * cols + k];
        if (!(w >= 0.0)) throw DataError("negative or NaN rule weight");
        sum += w;
      }
      if (!(sum > 0.0)) throw DataError("row of " + category_token(c) + " has no mass");
      for (std::size_t k = 0; k < cols; ++k) weights[c * cols + k] /= sum;
    }
    return Grammar(categories, vocab, std::move(weights));
  }

  double prob(CategoryId parent, std::size_t column) const { return at(parent, column); }
  double binary_prob(CategoryId parent, CategoryId left, CategoryId right) const {
    return at(parent, pair_column(left, right));
  }
  double terminal_prob(CategoryId parent, WordId w) const {
    return at(parent, word_column(w));
  }

  // Total probability of expanding `parent` directly to a word.
  double terminal_mass(CategoryId parent) const {
    double sum = 0.0;
    for (WordId w = 0; w < vocab_; ++w) sum += terminal_prob(parent, w);
    return sum;
  }
};

class CountMatrix : public detail::RuleTable {
 public:
  CountMatrix() = default;
  CountMatrix(std::size_t categories, std::size_t vocab) : RuleTable(categories, vocab) {}

  static CountMatrix from_values(std::size_t categories, std::size_t vocab,
                                 std::vector<double> counts) {
    CountMatrix m(categories, vocab);
    if (counts.size() != m.values_.size())
      throw ParameterError("count table has wrong size");
    for (double v : counts)
      if (!(v >= 0.0)) throw DataError("negative count");
    m.values_ = std::move(counts);
    return m;
  }

  void add(CategoryId parent, std::size_t column, double amount = 1.0) {
    if (!(amount >= 0.0)) throw DataError("negative count");
    values_[parent * columns() + column] += amount;
  }

  CountMatrix& operator+=(const CountMatrix& other) {
    if (!same_shape(other)) throw ParameterError("count matrix shape mismatch");
    for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
    return *this;
  }

  double total() const {
    double sum = 0.0;
    for (double v : values_) sum += v;
    return sum;
  }

  friend bool operator==(const CountMatrix& a, const CountMatrix& b) {
    return a.same_shape(b) && a.values_ == b.values_;
  }
};

// Draws each row from Dirichlet(beta + counts[row]) as normalized Gamma
// variates. Row r uses its own stream derived from (seed, r).
inline Grammar sample_posterior_grammar(const CountMatrix& counts, double beta,
                                        std::uint64_t seed) {
  if (!(beta > 0.0)) throw ParameterError("beta must be positive");
  if (counts.num_categories() == 0) throw ParameterError("no categories");
  if (counts.vocab_size() == 0) throw ParameterError("empty vocabulary");
  const std::size_t cols = counts.columns();
  std::vector<double> probs(counts.values().size());
  for (CategoryId c = 0; c < counts.num_categories(); ++c) {
    Rng rng = make_stream(seed, {c});
    auto in = counts.row(c);
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) {
      if (!(in[k] >= 0.0)) throw DataError("negative count");
      std::gamma_distribution<double> gamma(beta + in[k], 1.0);
      double g = gamma(rng);
      probs[c * cols + k] = g;
      sum += g;
    }
    if (!(sum > 0.0) || !std::isfinite(sum))
      throw InternalError("Dirichlet draw underflowed for " + category_token(c));
    for (std::size_t k = 0; k < cols; ++k) probs[c * cols + k] /= sum;
  }
  return Grammar(counts.num_categories(), counts.vocab_size(), std::move(probs));
}

inline Grammar sample_prior_grammar(const CategorySet& categories, const Vocabulary& vocab,
                                    double beta, std::uint64_t seed) {
  if (vocab.empty()) throw ParameterError("empty vocabulary");
  return sample_posterior_grammar(CountMatrix(categories.count(), vocab.size()), beta, seed);
}

// ---------------------------------------------------------------------------
// Grammar file format (tab separated):
//   categories  <C>
//   vocab       <w_0> <w_1> ...
//   <parent>    <left>   <right>  <prob>     binary rule
//   <parent>    <word>   -        <prob>     terminal rule
// Blank lines and lines starting with '#' are ignored.

inline std::string format_probability(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", p);
  return buf;
}

inline void write_grammar(std::ostream& out, const Grammar& g, const Vocabulary& vocab) {
  if (vocab.size() != g.vocab_size()) throw ParameterError("vocabulary does not match grammar");
  const std::size_t C = g.num_categories();
  out << "categories\t" << C << '\n' << "vocab\t";
  for (std::size_t w = 0; w < vocab.size(); ++w) out << (w ? " " : "") << vocab.word(w);
  out << '\n';
  for (CategoryId p = 0; p < C; ++p) {
    for (CategoryId a = 0; a < C; ++a)
      for (CategoryId b = 0; b < C; ++b)
        out << category_token(p) << '\t' << category_token(a) << '\t' << category_token(b)
            << '\t' << format_probability(g.binary_prob(p, a, b)) << '\n';
    for (WordId w = 0; w < vocab.size(); ++w)
      out << category_token(p) << '\t' << vocab.word(w) << "\t-\t"
          << format_probability(g.terminal_prob(p, w)) << '\n';
  }
}

inline std::string write_grammar(const Grammar& g, const Vocabulary& vocab) {
  std::ostringstream out;
  write_grammar(out, g, vocab);
  return out.str();
}

struct GrammarFile {
  Grammar grammar;
  CategorySet categories;
  Vocabulary vocabulary;
};

namespace detail {

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> split_whitespace(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t j = i;
    while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

[[noreturn]] inline void fail_line(std::size_t line, const std::string& msg) {
  throw ParseError("line " + std::to_string(line) + ": " + msg, line);
}

}  // namespace detail

inline GrammarFile read_grammar(std::istream& in) {
  using detail::fail_line;
  std::optional<std::size_t> C;
  std::optional<Vocabulary> vocab;
  std::vector<double> table;
  std::vector<std::uint8_t> seen;
  std::vector<std::size_t> last_line;
  std::size_t cols = 0;

  std::string raw;
  std::size_t lineno = 0;
  while (std::getline(in, raw)) {
    ++lineno;
    std::string_view line = detail::strip_cr(raw);
    if (line.empty() || line[0] == '#') continue;
    auto fields = detail::split(line, '\t');
    if (fields[0] == "categories") {
      if (C || fields.size() != 2) fail_line(lineno, "malformed categories header");
      std::size_t n = 0;
      auto [p, ec] = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), n);
      if (ec != std::errc() || p != fields[1].data() + fields[1].size() || n == 0)
        fail_line(lineno, "malformed categories header");
      C = n;
      continue;
    }
    if (fields[0] == "vocab") {
      if (vocab || fields.size() != 2) fail_line(lineno, "malformed vocab header");
      try {
        vocab = Vocabulary(detail::split_whitespace(fields[1]));
      } catch (const DataError& e) {
        fail_line(lineno, e.what());
      }
      if (vocab->empty()) fail_line(lineno, "empty vocabulary");
      continue;
    }
    if (!C || !vocab) fail_line(lineno, "rule before categories/vocab headers");
    if (table.empty()) {
      cols = *C * *C + vocab->size();
      table.assign(*C * cols, 0.0);
      seen.assign(*C * cols, 0);
      last_line.assign(*C, 0);
    }
    if (fields.size() != 4) fail_line(lineno, "malformed rule (expected 4 tab-separated fields)");
    auto category = [&](std::string_view tok) {
      auto c = parse_category_token(tok);
      if (!c || *c >= *C) fail_line(lineno, "unknown category '" + std::string(tok) + "'");
      return *c;
    };
    CategoryId parent = category(fields[0]);
    std::size_t column;
    if (fields[2] == "-") {
      auto w = vocab->find(fields[1]);
      if (!w) fail_line(lineno, "unknown word '" + std::string(fields[1]) + "'");
      column = *C * *C + *w;
    } else {
      column = static_cast<std::size_t>(category(fields[1])) * *C + category(fields[2]);
    }
    auto p = detail::parse_double(fields[3]);
    if (!p || !(*p >= 0.0) || !std::isfinite(*p))
      fail_line(lineno, "bad probability '" + std::string(fields[3]) + "'");
    std::size_t idx = parent * cols + column;
    if (seen[idx]) fail_line(lineno, "duplicate rule");
    seen[idx] = 1;
    table[idx] = *p;
    last_line[parent] = lineno;
  }
  if (!C || !vocab) throw ParseError("missing categories or vocab header", lineno);
  if (table.empty()) throw ParseError("grammar has no rules", lineno);
  for (std::size_t c = 0; c < *C; ++c) {
    double sum = 0.0;
    for (std::size_t k = 0; k < cols; ++k) sum += table[c * cols + k];
    if (std::abs(sum - 1.0) > 1e-6) {
      std::size_t where = last_line[c] ? last_line[c] : lineno;
      fail_line(where, "row sum of " + category_token(static_cast<CategoryId>(c)) + " is " +
                           format_probability(sum));
    }
  }
  return GrammarFile{Grammar::from_weights(*C, vocab->size(), std::move(table)),
                     CategorySet(*C), std::move(*vocab)};
}

inline GrammarFile read_grammar(std::string_view text) {
  std::istringstream in{std::string(text)};
  return read_grammar(in);
}

}  // namespace bpcfg
