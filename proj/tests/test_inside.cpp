#include <gtest/gtest.h>

#include <cmath>

#include "support/oracles.hpp"

using namespace bpcfg;

namespace {

std::vector<WordId> ids(const Vocabulary& v, const std::vector<std::string>& words) {
  std::vector<WordId> out;
  for (const auto& w : words) out.push_back(v.id(w));
  return out;
}

std::vector<std::string> random_sentence(std::size_t L, std::size_t W, std::mt19937_64& rng) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < L; ++i) s.push_back("w" + std::to_string(rng() % W));
  return s;
}

double true_value(const InsideChart& c, std::size_t i, std::size_t j, std::size_t slot) {
  return std::ldexp(c.value(i, j, slot), c.scale_exponent(i, j));
}

}  // namespace

TEST(InsideChart, ToyGrammarCells) {
  Grammar g = oracle::toy_grammar();
  std::vector<WordId> s{0, 0, 0};
  for (auto path : {InsidePath::naive, InsidePath::batched}) {
    InsideChart c = build_inside_chart(g, s, path);
    EXPECT_DOUBLE_EQ(true_value(c, 0, 1, 0), 0.6);
    EXPECT_DOUBLE_EQ(true_value(c, 0, 2, 0), 0.144);
    // two bracketings of three words
    EXPECT_NEAR(true_value(c, 0, 3, 0), 2 * 0.4 * 0.6 * 0.144, 1e-15);
  }
}

TEST(InsideChart, RootEqualsSumOverEnumeratedTrees) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    std::size_t C = 1 + trial % 3, W = 2, L = 1 + trial % 5;
    if (C == 3 && L > 4) L = 4;
    Vocabulary v = oracle::numbered_vocabulary(W);
    Grammar g = sample_prior_grammar(CategorySet(C), v, 1.0, rng());
    auto words = random_sentence(L, W, rng);
    double expected = 0;
    for (const auto& t : oracle::all_trees(C, words)) expected += oracle::tree_prob(g, t, v);
    InsideChart c = build_inside_chart(g, ids(v, words));
    EXPECT_NEAR(std::exp(sentence_log_likelihood(c)), expected, 1e-12 * expected) << trial;
  }
}

TEST(InsideChart, BoundedRootEqualsSumOverEnumeratedTrees) {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t C = 1 + trial % 2, W = 2, L = 2 + trial % 5;
    int D = 1 + trial % 2;
    Vocabulary v = oracle::numbered_vocabulary(W);
    Grammar g = sample_prior_grammar(CategorySet(C), v, 1.0, rng());
    BoundedGrammar bg = bound_grammar(g, D);
    auto words = random_sentence(L, W, rng);
    double expected = 0;
    for (const auto& t : oracle::all_trees(C, words)) expected += oracle::bounded_tree_prob(bg, t, v);
    InsideChart c = build_inside_chart(bg, ids(v, words));
    EXPECT_NEAR(std::exp(sentence_log_likelihood(c)), expected, 1e-12 * expected) << trial;
  }
}

TEST(InsideChart, NaiveAndBatchedAgree) {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t C = 1 + rng() % 5, W = 1 + rng() % 6, L = 1 + rng() % 10;
    Vocabulary v = oracle::numbered_vocabulary(W);
    Grammar g = sample_prior_grammar(CategorySet(C), v, 0.3, rng());
    auto s = ids(v, random_sentence(L, W, rng));
    ChartGrammar cg = trial % 2 ? bound_grammar(g, 1 + static_cast<int>(trial % 3)).chart()
                                : plain_chart_grammar(g);
    InsideChart a = build_inside_chart(cg, s, InsidePath::naive);
    InsideChart b = build_inside_chart(cg, s, InsidePath::batched);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j <= L; ++j)
        for (std::size_t k = 0; k < cg.chart_size(); ++k) {
          double x = true_value(a, i, j, k), y = true_value(b, i, j, k);
          ASSERT_NEAR(x, y, 1e-12 * std::max(std::abs(x), std::abs(y))) << trial;
        }
  }
}

TEST(InsideChart, ReversedCopyMirrorsForward) {
  Vocabulary v = oracle::numbered_vocabulary(3);
  Grammar g = sample_prior_grammar(CategorySet(3), v, 1.0, 4);
  std::vector<WordId> s{0, 1, 2, 1, 0};
  InsideChart c = build_inside_chart(g, s);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = i + 1; j <= 5; ++j)
      for (std::size_t k = 0; k < c.chart_size(); ++k)
        EXPECT_EQ(c.forward_data()[c.offset(i, j) + k], c.reversed_data()[c.reversed_offset(i, j) + k]);
}

// A long sentence whose likelihood is far below the smallest double: the
// one-category grammar's likelihood has a closed form in the Catalan numbers.
TEST(InsideChart, RescalingKeepsLongSentencesFinite) {
  const std::size_t W = 100, L = 250;
  std::vector<double> p(1 + W, 0.5 / W);
  p[0] = 0.5;
  Grammar g(1, W, p);
  std::vector<WordId> s(L);
  for (std::size_t i = 0; i < L; ++i) s[i] = static_cast<WordId>(i % W);
  // log(Catalan(L-1) * 0.5^(L-1) * (0.5/W)^L)
  const double n = L - 1;
  double expected = std::lgamma(2 * n + 1) - std::lgamma(n + 1) - std::lgamma(n + 2) +
                    n * std::log(0.5) + L * std::log(0.5 / W);
  ASSERT_LT(expected, std::log(std::numeric_limits<double>::denorm_min()));
  for (auto path : {InsidePath::naive, InsidePath::batched}) {
    double ll = sentence_log_likelihood(build_inside_chart(g, s, path));
    EXPECT_NEAR(ll, expected, 1e-9 * std::abs(expected));
  }
}

TEST(InsideChart, UnparsableSentenceHasZeroLikelihood) {
  // c0 -> c0 c0 | a ; word b is never generated.
  Grammar g(1, 2, {0.5, 0.5, 0.0});
  InsideChart c = build_inside_chart(g, std::vector<WordId>{0, 1});
  EXPECT_EQ(sentence_log_likelihood(c), -std::numeric_limits<double>::infinity());
  Rng rng = make_stream(1, {});
  EXPECT_THROW(sample_tree(c, plain_chart_grammar(g), Vocabulary({"a", "b"}), rng), SamplingError);
}

TEST(InsideChart, RejectsBadInput) {
  Grammar g = oracle::toy_grammar();
  EXPECT_THROW(build_inside_chart(g, std::vector<WordId>{}), ParameterError);
  EXPECT_THROW(build_inside_chart(g, std::vector<WordId>{0, 3}), DataError);
  // T only rewrites to c1 c1, which never terminates: nothing fits any bound.
  std::vector<double> w(2 * (4 + 1), 0.0);
  w[3] = 1.0;
  w[5 + 3] = 1.0;
  Grammar dead(2, 1, w);
  EXPECT_THROW(build_inside_chart(bound_grammar(dead, 2), std::vector<WordId>{0}),
               DegenerateGrammarError);
}

// The sampler reports the log posterior of the tree it drew; the enumeration
// oracle gives the same number.
TEST(TreeSampler, ReportedProbabilityMatchesEnumeration) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t C = 1 + trial % 3, W = 2;
    const std::size_t L = C == 3 ? 3 : 4;
    const bool bounded = trial % 2;
    Vocabulary v = oracle::numbered_vocabulary(W);
    Grammar g = sample_prior_grammar(CategorySet(C), v, 1.0, rng());
    BoundedGrammar bg = bound_grammar(g, 1);
    auto words = random_sentence(L, W, rng);
    auto trees = oracle::all_trees(C, words);
    auto exact = bounded ? oracle::exact_posterior(trees, [&](const Tree& t) { return oracle::bounded_tree_prob(bg, t, v); })
                         : oracle::exact_posterior(trees, [&](const Tree& t) { return oracle::tree_prob(g, t, v); });
    ChartGrammar cg = bounded ? bg.chart() : plain_chart_grammar(g);
    InsideChart c = build_inside_chart(cg, ids(v, words));
    Rng sr = make_stream(trial, {});
    for (int k = 0; k < 200; ++k) {
      SampledTree st = sample_tree(c, cg, v, sr);
      auto it = exact.find(emit_bracketed(st.tree));
      ASSERT_NE(it, exact.end()) << emit_bracketed(st.tree);
      ASSERT_NEAR(std::exp(st.log_prob), it->second, 1e-9);
    }
  }
}

TEST(TreeSampler, MatchesExactPosteriorInDistribution) {
  Vocabulary v = oracle::numbered_vocabulary(2);
  Grammar g = sample_prior_grammar(CategorySet(2), v, 1.0, 77);
  std::vector<std::string> words{"w0", "w1", "w1"};
  auto exact = oracle::exact_posterior(oracle::all_trees(2, words),
                                       [&](const Tree& t) { return oracle::tree_prob(g, t, v); });
  InsideChart c = build_inside_chart(g, ids(v, words));
  ChartGrammar cg = plain_chart_grammar(g);
  Rng rng = make_stream(5, {});
  const int n = 20000;
  std::map<std::string, double> freq;
  for (int k = 0; k < n; ++k) freq[emit_bracketed(sample_tree(c, cg, v, rng).tree)] += 1.0 / n;
  EXPECT_LT(oracle::total_variation(freq, exact), 0.03);
}

TEST(TreeSampler, BoundedSamplesRespectDepth) {
  Vocabulary v = oracle::numbered_vocabulary(3);
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 10; ++trial) {
    Grammar g = sample_prior_grammar(CategorySet(3), v, 0.5, rng());
    BoundedGrammar bg = bound_grammar(g, 1);
    auto s = ids(v, random_sentence(9, 3, rng));
    InsideChart c = build_inside_chart(bg, s);
    Rng sr = make_stream(trial, {});
    for (int k = 0; k < 100; ++k) ASSERT_LE(left_corner_depth(sample_tree(c, bg, v, sr).tree), 1);
  }
}
