#pragma once

// Hand-worked scoring and decoding cases. Expected values were computed by
// hand from the span sets noted beside each case.

#include <bpcfg/bpcfg.hpp>

#include <string>
#include <vector>

namespace fixtures {

using namespace bpcfg;

struct ParsevalCase {
  std::string name;
  std::vector<std::string> gold;
  std::vector<std::string> pred;
  bool include_root;
  std::size_t matched, gold_spans, pred_spans, skipped;
};

// Gold flattens every other level of a right-branching tree over 50 words
// (25 spans); the prediction is fully right-branching (49 spans).
inline std::string half_flat_gold(std::size_t n) {
  std::string s;
  std::size_t open = 0;
  for (std::size_t i = 0; i + 2 < n; i += 2) {
    s += "(X w" + std::to_string(i) + " w" + std::to_string(i + 1) + " ";
    ++open;
  }
  s += "(X w" + std::to_string(n - 2) + " w" + std::to_string(n - 1) + ")";
  return s + std::string(open, ')');
}

inline std::string right_branching(std::size_t n) {
  std::vector<std::string> w;
  for (std::size_t i = 0; i < n; ++i) w.push_back("w" + std::to_string(i));
  return emit_bracketed(right_branching_tree(w));
}

inline std::vector<ParsevalCase> parseval_cases() {
  return {
      // {(0,2),(2,4),(0,4)} vs {(0,4),(1,4),(2,4)}
      {"balanced vs right-branching", {"(X (X a b) (X c d))"}, {"(X a (X b (X c d)))"}, true, 2, 3, 3, 0},
      {"same brackets, other labels", {"(S (NP the dog) (VP barks))"}, {"(X (X the dog) barks)"}, true, 2, 2, 2, 0},
      // flat prediction keeps only the root span
      {"flat prediction", {"(X (X a b) (X c d))"}, {"(X a b c d)"}, true, 1, 3, 1, 0},
      // after stripping: {(0,3),(0,2)} vs {(0,3),(1,3)}
      {"punctuation stripped", {"(S (NP the dog) (VP barks) (. .))"},
       {"(X (X the (X dog barks)) .)"}, true, 1, 2, 2, 0},
      // S over VP is one bracket
      {"unary chain", {"(S (VP (V runs) (ADV fast)))"}, {"(X runs fast)"}, true, 1, 1, 1, 0},
      {"root excluded", {"(X (X a b) (X c d))"}, {"(X a (X b (X c d)))"}, false, 1, 2, 2, 0},
      // 1 + 3 matched of 2 + 3 on each side: micro 0.8, macro would be 0.75
      {"micro average", {"(X (X a b) c)", "(X a (X b (X c d)))"}, {"(X a (X b c))", "(X a (X b (X c d)))"}, true, 4,
       5, 5, 0},
      // {(0,5),(0,3)} vs {(0,5),(0,3),(1,3),(3,5)}
      {"flat gold", {"(S (A a b c) d e)"}, {"(X (X a (X b c)) (X d e))"}, true, 2, 2, 4, 0},
      {"all punctuation skipped", {"(S (. .) (, ,))", "(X a b)"}, {"(X . ,)", "(X a b)"}, true, 1,
       1, 1, 1},
      {"nothing matches", {"(X (X a b) c)"}, {"(X a (X b c))"}, false, 0, 1, 1, 0},
      {"single words", {"a", "(X a b)"}, {"a", "(X a b)"}, true, 1, 1, 1, 0},
      // precision ceiling: 25 / 49 = 0.5102
      {"precision ceiling", {half_flat_gold(50)}, {right_branching(50)}, true, 25, 25, 49, 0},
  };
}

struct PiocCase {
  std::string name;
  std::vector<std::string> words;
  std::vector<std::pair<std::string, int>> samples;  // tree, multiplicity
  double threshold;
  std::string expected;
};

inline std::vector<PiocCase> pioc_cases() {
  const std::vector<std::string> abcd{"a", "b", "c", "d"};
  const std::vector<std::string> abc{"a", "b", "c"};
  return {
      // root: k=2 twice, k=1 once
      {"majority split", abcd, {{"(X (X a b) (X c d))", 2}, {"(X a (X b (X c d)))", 1}}, 0.0,
       "(X (X a b) (X c d))"},
      {"point mass", abcd, {{"(T (c1 (c2 a) (c2 b)) (c1 (c2 c) (c2 d)))", 4}}, 0.0,
       "(X (X a b) (X c d))"},
      // 5 / 5 tie goes to the smaller split point
      {"tie", abc, {{"(X a (X b c))", 5}, {"(X (X a b) c)", 5}}, 0.0, "(X a (X b c))"},
      {"tie merged", abc, {{"(X a (X b c))", 5}, {"(X (X a b) c)", 5}}, 0.3, "(X a b c)"},
      // 0.55 / 0.45: gap 0.10 < 0.3
      {"uncertain span merged", abc, {{"(X (X a b) c)", 11}, {"(X a (X b c))", 9}}, 0.3, "(X a b c)"},
      // 1.0 / 0.0
      {"certain span kept", abc, {{"(X a (X b c))", 20}}, 0.3, "(X a (X b c))"},
      // root 0.5 / 0.5 over five words is out of merge scope; its
      // 4-word child has split posterior 1.0
      {"wide span untouched",
       {"a", "b", "c", "d", "e"},
       {{"(X a (X b (X c (X d e))))", 5}, {"(X (X a b) (X c (X d e)))", 5}},
       0.3,
       "(X a (X b (X c (X d e))))"},
      // (0,3) only ever appears flat: fallback compares
      // span(0,1)+span(1,3) = 3+0 with span(0,2)+span(2,3) = 1+3
      {"fallback", abcd, {{"(X (X a b c) d)", 2}, {"(X (X a b) c d)", 1}}, 0.0, "(X (X (X a b) c) d)"},
      {"fallback merged", abcd, {{"(X (X a b c) d)", 2}, {"(X (X a b) c d)", 1}}, 0.3, "(X (X a b c) d)"},
      // both samples split the root at 3; each half ties and takes the
      // smaller split, from a different sample
      {"novel tree",
       {"a", "b", "c", "d", "e", "f"},
       {{"(X (X a (X b c)) (X (X d e) f))", 1}, {"(X (X (X a b) c) (X d (X e f)))", 1}},
       0.0,
       "(X (X a (X b c)) (X d (X e f)))"},
  };
}

}  // namespace fixtures
