#include <gtest/gtest.h>

#include <sstream>

#include "support/oracles.hpp"

using namespace bpcfg;

namespace {

Corpus small_corpus() {
  std::stringstream s(
      "the dog barks\n"
      "a cat sleeps\n"
      "the dog sees a cat\n"
      "a cat sees the dog\n"
      "dogs bark\n"
      "the cat sees dogs\n");
  return Corpus::read(s);
}

RunConfig small_config() {
  RunConfig c;
  c.categories = 3;
  c.iterations = 12;
  c.burn_in = 4;
  c.sample_every = 2;
  c.seed = 11;
  return c;
}

struct Recorded {
  std::vector<std::pair<int, double>> trace;
  std::vector<std::pair<int, std::string>> samples;
};

RunSinks recording(Recorded& r) {
  RunSinks s;
  s.trace = [&](int t, double ll) { r.trace.emplace_back(t, ll); };
  s.sample = [&](int t, const std::vector<Tree>& trees) {
    std::ostringstream o;
    write_trees(o, trees);
    r.samples.emplace_back(t, o.str());
  };
  return s;
}

}  // namespace

TEST(RuleCounts, TotalEqualsExpansions) {
  Vocabulary v({"a", "b"});
  std::vector<Tree> trees{parse_bracketed("(c0 (c1 a) (c0 (c2 b) (c0 a)))"),
                          parse_bracketed("(c0 b)")};
  CountMatrix m = count_rules(trees, 3, v);
  EXPECT_EQ(m.total(), static_cast<double>(count_expansions(trees)));
  EXPECT_EQ(m.total(), 6.0);
  EXPECT_EQ(m.at(0, 1 * 3 + 0), 1.0);  // c0 -> c1 c0
  EXPECT_EQ(m.at(0, 2 * 3 + 0), 1.0);  // c0 -> c2 c0
  EXPECT_EQ(m.at(1, 9 + 0), 1.0);
  EXPECT_EQ(m.at(0, 9 + 0), 1.0);
  EXPECT_EQ(m.at(0, 9 + 1), 1.0);
  CountMatrix bounded = count_rules(trees, 3, v, 2);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t col = 0; col < 9 + 2; ++col) EXPECT_EQ(bounded.at(c, col), m.at(c, col));
}

TEST(RuleCounts, RejectsTreesOutsideTheModel) {
  Vocabulary v({"a", "b"});
  EXPECT_THROW(count_rules(std::vector<Tree>{parse_bracketed("(c0 (c7 a) (c0 b))")}, 3, v), DataError);
  EXPECT_THROW(count_rules(std::vector<Tree>{parse_bracketed("(c0 (c1 z) (c0 b))")}, 3, v), DataError);
  EXPECT_THROW(count_rules(std::vector<Tree>{parse_bracketed("(c0 a b c)")}, 3, v), DataError);
}

TEST(RunConfig, Validation) {
  RunConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  auto bad = [&](auto tweak) {
    RunConfig x = small_config();
    tweak(x);
    EXPECT_THROW(x.validate(), ParameterError);
  };
  bad([](RunConfig& x) { x.max_depth = 0; });
  bad([](RunConfig& x) { x.categories = 0; });
  bad([](RunConfig& x) { x.beta = 0; });
  bad([](RunConfig& x) { x.burn_in = x.iterations; });
  bad([](RunConfig& x) { x.sample_every = 0; });
  bad([](RunConfig& x) { x.workers = 0; });
}

TEST(RunConfig, SampleSchedule) {
  RunConfig c;
  int n = 0;
  for (int t = 1; t <= c.iterations; ++t) n += c.emits_sample(t);
  EXPECT_EQ(n, 100);
  EXPECT_FALSE(c.emits_sample(500));
  EXPECT_TRUE(c.emits_sample(502));
  EXPECT_TRUE(c.emits_sample(700));
}

TEST(Convergence, WindowMeans) {
  std::vector<double> flat(100, -50.0);
  EXPECT_TRUE(detect_convergence(flat, 50, 1e-4));
  std::vector<double> rising(100);
  for (std::size_t i = 0; i < 100; ++i) rising[i] = -100.0 + static_cast<double>(i);
  EXPECT_FALSE(detect_convergence(rising, 50, 1e-4));
  EXPECT_THROW(detect_convergence(flat, 60, 1e-4), ParameterError);
}

TEST(GibbsRun, EverySampledTreeCoversItsSentence) {
  Corpus corpus = small_corpus();
  for (std::optional<int> D : {std::optional<int>{}, std::optional<int>{1}, std::optional<int>{2}}) {
    RunConfig c = small_config();
    c.max_depth = D;
    std::size_t emitted = 0;
    RunSinks s;
    s.sample = [&](int, const std::vector<Tree>& trees) {
      ++emitted;
      ASSERT_EQ(trees.size(), corpus.size());
      for (std::size_t n = 0; n < trees.size(); ++n) {
        ASSERT_EQ(yield(trees[n]), corpus.words(n));
        if (D) {
          ASSERT_LE(left_corner_depth(trees[n]), *D);
        }
      }
    };
    SamplerState st = gibbs_run(corpus, c, s);
    EXPECT_EQ(emitted, 4u);
    EXPECT_EQ(st.iteration, c.iterations);
    EXPECT_TRUE(std::isfinite(st.corpus_log_likelihood));
  }
}

TEST(GibbsRun, SameSeedSameRun) {
  Corpus corpus = small_corpus();
  Recorded a, b, c;
  gibbs_run(corpus, small_config(), recording(a));
  gibbs_run(corpus, small_config(), recording(b));
  RunConfig other = small_config();
  other.seed = 12;
  gibbs_run(corpus, other, recording(c));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.trace, c.trace);
}

TEST(GibbsRun, WorkerCountDoesNotChangeTheRun) {
  Corpus corpus = small_corpus();
  Recorded a, b;
  gibbs_run(corpus, small_config(), recording(a));
  RunConfig par = small_config();
  par.workers = 4;
  gibbs_run(corpus, par, recording(b));
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.samples, b.samples);
}

TEST(GibbsRun, ResumedRunMatchesUninterruptedRun) {
  Corpus corpus = small_corpus();
  RunConfig c = small_config();
  Recorded full;
  gibbs_run(corpus, c, recording(full));

  std::string saved;
  RunSinks first;
  first.checkpoint_every = 5;
  first.checkpoint = [&](const SamplerState& st) {
    if (st.iteration != 5) return;
    std::ostringstream o;
    write_checkpoint(o, st, c, corpus.vocabulary);
    saved = o.str();
  };
  gibbs_run(corpus, c, first);
  ASSERT_FALSE(saved.empty());

  std::istringstream in(saved);
  SamplerState st = read_checkpoint(in, c);
  EXPECT_EQ(st.iteration, 5);
  Recorded rest;
  gibbs_run(corpus, c, recording(rest), std::move(st));
  std::vector<std::pair<int, double>> tail(full.trace.begin() + 6, full.trace.end());
  EXPECT_EQ(rest.trace, tail);
  EXPECT_EQ(rest.samples, full.samples);
}

TEST(Checkpoint, RejectsOtherConfigurations) {
  Corpus corpus = small_corpus();
  RunConfig c = small_config();
  c.iterations = 2;
  c.burn_in = 0;
  SamplerState st = gibbs_run(corpus, c);
  std::ostringstream o;
  write_checkpoint(o, st, c, corpus.vocabulary);
  RunConfig other = c;
  other.max_depth = std::nullopt;
  std::istringstream in(o.str());
  EXPECT_THROW(read_checkpoint(in, other), ParameterError);
  std::istringstream truncated(o.str().substr(0, o.str().size() / 2));
  EXPECT_THROW(read_checkpoint(truncated, c), ParseError);
}

TEST(GibbsRun, LikelihoodImprovesOnAStructuredCorpus) {
  Corpus corpus = small_corpus();
  RunConfig c = small_config();
  c.iterations = 60;
  c.burn_in = 40;
  Recorded r;
  gibbs_run(corpus, c, recording(r));
  double first = r.trace.front().second, last = 0;
  for (std::size_t i = r.trace.size() - 10; i < r.trace.size(); ++i) last += r.trace[i].second / 10;
  EXPECT_GT(last, first);
}
