#pragma once

#include <algorithm>
#include <clocale>
#include <cstdint>
#include <cwctype>
#include <fstream>
#include <functional>
#include <istream>
#include <locale.h>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "grammar.hpp"
#include "position.hpp"

namespace bpcfg {

// A constituent tree. Leaves carry words and have no children; internal
// nodes carry a category label. CNF trees have binary internal nodes plus
// unary preterminals over a single word.
struct Tree {
  std::string label;
  std::vector<Tree> children;

  static Tree leaf(std::string word) { return Tree{std::move(word), {}}; }
  static Tree node(std::string label, std::vector<Tree> children) {
    return Tree{std::move(label), std::move(children)};
  }

  bool is_leaf() const { return children.empty(); }
  bool is_preterminal() const { return children.size() == 1 && children[0].is_leaf(); }

  friend bool operator==(const Tree&, const Tree&) = default;
};

// Path of child indices from the root; for binary trees 0 = l, 1 = r.
using GornAddress = std::vector<std::size_t>;

inline std::string format_address(const GornAddress& address) {
  if (address.empty()) return "ε";
  bool binary = std::all_of(address.begin(), address.end(), [](auto i) { return i < 2; });
  std::string out;
  for (std::size_t i = 0; i < address.size(); ++i) {
    if (binary) {
      out += address[i] == 0 ? 'l' : 'r';
    } else {
      if (i) out += '.';
      out += std::to_string(address[i]);
    }
  }
  return out;
}

inline const Tree& subtree_at(const Tree& tree, const GornAddress& address) {
  const Tree* t = &tree;
  for (auto i : address) {
    if (i >= t->children.size()) throw ParameterError("no node at " + format_address(address));
    t = &t->children[i];
  }
  return *t;
}

// Pre-order walk; `visit(node, address)`.
template <class Visitor>
void for_each_node(const Tree& tree, Visitor&& visit) {
  GornAddress address;
  auto walk = [&](auto&& self, const Tree& t) -> void {
    visit(t, std::as_const(address));
    for (std::size_t i = 0; i < t.children.size(); ++i) {
      address.push_back(i);
      self(self, t.children[i]);
      address.pop_back();
    }
  };
  walk(walk, tree);
}

inline void append_yield(const Tree& t, std::vector<std::string>& out) {
  if (t.is_leaf()) {
    out.push_back(t.label);
    return;
  }
  for (const auto& c : t.children) append_yield(c, out);
}

inline std::vector<std::string> yield(const Tree& t) {
  std::vector<std::string> out;
  append_yield(t, out);
  return out;
}

inline std::size_t yield_length(const Tree& t) {
  if (t.is_leaf()) return 1;
  std::size_t n = 0;
  for (const auto& c : t.children) n += yield_length(c);
  return n;
}

// --- bracketed I/O ---------------------------------------------------------

namespace detail {

class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : text_(text) {}

  Tree parse() {
    skip_space();
    if (pos_ == text_.size()) fail("empty tree");
    Tree t = parse_node();
    skip_space();
    if (pos_ != text_.size()) {
      if (text_[pos_] == ')') fail("unbalanced: unexpected ')'");
      fail("trailing input after tree");
    }
    return t;
  }

 private:
  Tree parse_node() {
    if (text_[pos_] != '(') return Tree::leaf(token());
    ++pos_;
    skip_space();
    if (pos_ == text_.size()) fail("unbalanced: missing ')'");
    std::string label;
    if (text_[pos_] != '(' && text_[pos_] != ')') label = token();
    std::vector<Tree> children;
    while (true) {
      skip_space();
      if (pos_ == text_.size()) fail("unbalanced: missing ')'");
      if (text_[pos_] == ')') {
        ++pos_;
        break;
      }
      children.push_back(parse_node());
    }
    if (children.empty()) fail("empty constituent");
    return Tree::node(std::move(label), std::move(children));
  }

  std::string token() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' &&
           text_[pos_] != ')')
      ++pos_;
    if (pos_ == start) fail("expected token");
    return std::string(text_.substr(start, pos_ - start));
  }

  static bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }
  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(msg + " at offset " + std::to_string(pos_), pos_);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

inline void emit(const Tree& t, std::string& out) {
  if (t.is_leaf()) {
    out += t.label;
    return;
  }
  out += '(';
  out += t.label;
  for (const auto& c : t.children) {
    out += ' ';
    emit(c, out);
  }
  out += ')';
}

}  // namespace detail

// `(LABEL child child ...)`; a leaf is a bare token, so a bare token line is
// a one-word tree. An empty label is allowed: `((a b) c)`.
inline Tree parse_bracketed(std::string_view line) {
  return detail::BracketReader(line).parse();
}

inline std::string emit_bracketed(const Tree& t) {
  std::string out;
  detail::emit(t, out);
  return out;
}

// One tree per non-blank line.
inline std::vector<Tree> read_trees(std::istream& in) {
  std::vector<Tree> trees;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view v = detail::strip_cr(line);
    if (v.find_first_not_of(" \t") == std::string_view::npos) continue;
    try {
      trees.push_back(parse_bracketed(v));
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return trees;
}

inline std::vector<Tree> read_tree_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tree file " + path);
  return read_trees(in);
}

inline void write_trees(std::ostream& out, std::span<const Tree> trees) {
  for (const auto& t : trees) out << emit_bracketed(t) << '\n';
}

// --- corpus ----------------------------------------------------------------

// One pre-tokenized sentence per line, whitespace separated.
struct Corpus {
  Vocabulary vocabulary;
  std::vector<std::vector<WordId>> sentences;
  std::vector<std::string> raw;

  std::size_t size() const { return sentences.size(); }

  std::vector<std::string> words(std::size_t i) const {
    std::vector<std::string> out;
    for (WordId w : sentences.at(i)) out.push_back(vocabulary.word(w));
    return out;
  }

  void add_sentence(std::string_view line) {
    auto tokens = detail::split_whitespace(line);
    if (tokens.empty()) throw DataError("empty sentence");
    std::vector<WordId> ids;
    for (auto& t : tokens) ids.push_back(vocabulary.add(std::move(t)));
    sentences.push_back(std::move(ids));
    raw.emplace_back(line);
  }

  static Corpus read(std::istream& in) {
    Corpus c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      try {
        c.add_sentence(detail::strip_cr(line));
      } catch (const DataError&) {
        throw ParseError("line " + std::to_string(lineno) + ": empty sentence", lineno);
      }
    }
    return c;
  }

  static Corpus read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open corpus " + path);
    return read(in);
  }
};

// --- punctuation -----------------------------------------------------------

using PunctuationPredicate = std::function<bool(std::string_view)>;

namespace detail {

// Decodes UTF-8; malformed bytes come back as U+FFFD.
inline std::vector<char32_t> decode_utf8(std::string_view s) {
  std::vector<char32_t> out;
  std::size_t i = 0;
  while (i < s.size()) {
    auto b = static_cast<unsigned char>(s[i]);
    std::size_t extra = 0;
    char32_t cp = b;
    if (b >= 0x80) {
      if ((b >> 5) == 0x6) {
        extra = 1, cp = b & 0x1F;
      } else if ((b >> 4) == 0xE) {
        extra = 2, cp = b & 0x0F;
      } else if ((b >> 3) == 0x1E) {
        extra = 3, cp = b & 0x07;
      } else {
        extra = s.size();  // invalid lead byte
      }
    }
    bool ok = i + extra < s.size();
    for (std::size_t k = 1; ok && k <= extra; ++k) {
      auto c = static_cast<unsigned char>(s[i + k]);
      ok = (c & 0xC0) == 0x80;
      cp = (cp << 6) | (c & 0x3F);
    }
    out.push_back(ok ? cp : char32_t{0xFFFD});
    i += ok ? extra + 1 : 1;
  }
  return out;
}

inline locale_t utf8_locale() {
  static locale_t loc = [] {
    locale_t l = newlocale(LC_CTYPE_MASK, "C.UTF-8", locale_t{});
    if (!l) l = newlocale(LC_CTYPE_MASK, "en_US.UTF-8", locale_t{});
    return l;
  }();
  return loc;
}

inline bool is_punct_codepoint(char32_t cp) {
  if (cp < 0x80) return std::ispunct(static_cast<int>(cp)) != 0;
  if (locale_t l = utf8_locale()) return iswpunct_l(static_cast<wint_t>(cp), l) != 0;
  // Without a UTF-8 locale fall back to the main punctuation/symbol blocks.
  return (cp >= 0x00A1 && cp <= 0x00BF) || cp == 0x00D7 || cp == 0x00F7 ||
         (cp >= 0x2010 && cp <= 0x2BFF) || (cp >= 0x3000 && cp <= 0x303F) ||
         (cp >= 0xFE30 && cp <= 0xFE4F) || (cp >= 0xFF01 && cp <= 0xFF0F) ||
         (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
         (cp >= 0xFF5B && cp <= 0xFF65);
}

}  // namespace detail

// A token is punctuation iff it is nonempty and every character is in the
// Unicode punctuation or symbol classes.
inline bool default_is_punctuation(std::string_view token) {
  if (token.empty()) return false;
  auto cps = detail::decode_utf8(token);
  return std::all_of(cps.begin(), cps.end(), detail::is_punct_codepoint);
}

// One token per line.
inline PunctuationPredicate load_punctuation_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open punctuation list " + path);
  auto set = std::make_shared<std::unordered_set<std::string>>();
  std::string line;
  while (std::getline(in, line)) {
    for (auto& tok : detail::split_whitespace(line)) set->insert(std::move(tok));
  }
  return [set](std::string_view tok) { return set->count(std::string(tok)) > 0; };
}

// Deletes punctuation leaves, then nodes left without children; a node that
// lost children and kept exactly one is replaced by that child. Returns
// nullopt when nothing remains.
inline std::optional<Tree> strip_punctuation(const Tree& tree, const PunctuationPredicate& is_punct) {
  if (tree.is_leaf()) {
    if (is_punct(tree.label)) return std::nullopt;
    return tree;
  }
  std::vector<Tree> kept;
  for (const auto& c : tree.children)
    if (auto s = strip_punctuation(c, is_punct)) kept.push_back(std::move(*s));
  if (kept.empty()) return std::nullopt;
  if (kept.size() == 1 && tree.children.size() > 1) return std::move(kept[0]);
  return Tree::node(tree.label, std::move(kept));
}

// --- baselines and depth -----------------------------------------------------

inline Tree right_branching_tree(std::span<const std::string> tokens) {
  if (tokens.empty()) throw ParameterError("empty sentence");
  Tree t = Tree::leaf(tokens.back());
  for (std::size_t i = tokens.size() - 1; i-- > 0;)
    t = Tree::node("X", {Tree::leaf(tokens[i]), std::move(t)});
  return t;
}

// Left-corner stack depth needed to recognize `tree`: the root is at (R,0),
// positions propagate via child_positions, and each binary node contributes
// max(1, depth of its position). Preterminals and leaves contribute nothing,
// so a D-bounded derivation (which may rewrite to words at L,D+1) measures
// at most D. A one-word tree has depth 0.
inline int left_corner_depth(const Tree& tree) {
  auto walk = [](auto&& self, const Tree& t, Position p) -> int {
    if (t.is_leaf() || t.is_preterminal()) return 0;
    if (t.children.size() == 1) return self(self, t.children[0], p);  // unary chains keep position
    if (t.children.size() != 2)
      throw DataError("left_corner_depth needs a binary tree; node '" + t.label + "' has " +
                      std::to_string(t.children.size()) + " children");
    auto [lp, rp] = child_positions(p);
    int here = std::max(1, p.depth);
    return std::max({here, self(self, t.children[0], lp), self(self, t.children[1], rp)});
  };
  return walk(walk, tree, kRootPosition);
}

// Fraction of trees at each left-corner depth.
inline std::map<int, double> depth_histogram(std::span<const Tree> trees) {
  if (trees.empty()) throw ParameterError("depth histogram of no trees");
  std::map<int, std::size_t> counts;
  for (const auto& t : trees) ++counts[left_corner_depth(t)];
  std::map<int, double> out;
  for (auto [d, n] : counts) out[d] = static_cast<double>(n) / static_cast<double>(trees.size());
  return out;
}

}  // namespace bpcfg
