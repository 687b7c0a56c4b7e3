#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bounding.hpp"
#include "chart_grammar.hpp"
#include "errors.hpp"
#include "grammar.hpp"
#include "inside.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "treebank.hpp"

namespace bpcfg {

struct RunConfig {
  std::optional<int> max_depth = 2;  // nullopt: unbounded
  std::size_t categories = 15;
  double beta = 0.2;
  int iterations = 700;
  int burn_in = 500;
  int sample_every = 2;
  std::uint64_t seed = 1;
  int containment_iterations = kDefaultContainmentIterations;
  int workers = 1;

  bool bounded() const { return max_depth.has_value(); }

  void validate() const {
    if (max_depth && *max_depth < 1) throw ParameterError("depth bound must be at least 1");
    if (categories == 0) throw ParameterError("need at least one category");
    if (!(beta > 0.0)) throw ParameterError("beta must be positive");
    if (iterations < 1) throw ParameterError("need at least one iteration");
    if (burn_in < 0 || burn_in >= iterations) throw ParameterError("burn-in must be in [0, iterations)");
    if (sample_every < 1) throw ParameterError("sample interval must be at least 1");
    if (containment_iterations < 1) throw ParameterError("containment iterations must be at least 1");
    if (workers < 1) throw ParameterError("need at least one worker");
  }

  // Iterations whose tree sets go to the sample sink.
  bool emits_sample(int iteration) const {
    return iteration > burn_in && (iteration - burn_in) % sample_every == 0;
  }
};

struct SamplerState {
  int iteration = 0;
  Grammar grammar;
  std::vector<Tree> trees;
  double corpus_log_likelihood = 0.0;
};

struct RunSinks {
  std::function<void(int iteration, double log_likelihood)> trace;
  std::function<void(int iteration, const std::vector<Tree>& trees)> sample;
  // Trees sampled under the prior grammar, before the first update.
  std::function<void(const std::vector<Tree>& trees)> initial;
  std::function<void(const SamplerState& state)> checkpoint;
  int checkpoint_every = 50;  // 0: only after the final iteration
  std::function<void(const std::string& message)> warning;
};

// --- rule counting -------------------------------------------------------------

namespace detail {

inline CategoryId tree_category(const Tree& t, std::size_t categories) {
  auto c = parse_category_token(t.label);
  if (!c || *c >= categories) throw DataError("tree label '" + t.label + "' is not a category");
  return *c;
}

// Calls on_rule(position, parent, column) for every expansion event.
template <class OnRule>
void walk_rules(const Tree& t, Position pos, std::size_t categories, const Vocabulary& vocab,
                OnRule& on_rule) {
  CategoryId parent = tree_category(t, categories);
  const std::size_t C = categories;
  if (t.is_preterminal()) {
    on_rule(pos, parent, C * C + vocab.id(t.children[0].label));
    return;
  }
  if (t.children.size() != 2 || t.children[0].is_leaf() || t.children[1].is_leaf())
    throw DataError("node '" + t.label + "' is not a binary or preterminal node");
  CategoryId a = tree_category(t.children[0], C);
  CategoryId b = tree_category(t.children[1], C);
  on_rule(pos, parent, static_cast<std::size_t>(a) * C + b);
  auto [lp, rp] = child_positions(pos);
  walk_rules(t.children[0], lp, C, vocab, on_rule);
  walk_rules(t.children[1], rp, C, vocab, on_rule);
}

}  // namespace detail

// Tallies every expansion event of the trees into a plain count matrix. In
// bounded mode counts are kept per side/depth position (derived from the
// root at R0) and then projected; a node outside the bound is an error.
inline CountMatrix count_rules(std::span<const Tree> trees, std::size_t categories,
                               const Vocabulary& vocab,
                               std::optional<int> max_depth = std::nullopt) {
  if (!max_depth) {
    CountMatrix counts(categories, vocab.size());
    auto on_rule = [&](Position, CategoryId parent, std::size_t column) { counts.add(parent, column); };
    for (const auto& t : trees) detail::walk_rules(t, kRootPosition, categories, vocab, on_rule);
    return counts;
  }
  BoundedCounts bounded(categories, vocab.size(), *max_depth);
  auto on_rule = [&](Position p, CategoryId parent, std::size_t column) {
    if (!is_valid_position(p, *max_depth))
      throw DataError("tree node at " + to_string(p) + " exceeds depth bound " +
                      std::to_string(*max_depth));
    bounded.at(p).add(parent, column);
  };
  for (const auto& t : trees) detail::walk_rules(t, kRootPosition, categories, vocab, on_rule);
  return project_counts(bounded);
}

// Number of internal (binary or preterminal) nodes.
inline std::size_t count_expansions(std::span<const Tree> trees) {
  std::size_t n = 0;
  for (const auto& t : trees)
    for_each_node(t, [&](const Tree& node, const GornAddress&) { n += node.is_leaf() ? 0 : 1; });
  return n;
}

// --- convergence ---------------------------------------------------------------

// True iff the mean of the last `window` values moved by less than
// tolerance * |mean of the window before it|.
inline bool detect_convergence(std::span<const double> trace, std::size_t window,
                               double tolerance) {
  if (window == 0) throw ParameterError("convergence window must be positive");
  if (trace.size() < 2 * window)
    throw ParameterError("trace of length " + std::to_string(trace.size()) +
                         " is shorter than two windows");
  auto mean = [&](std::size_t from) {
    double s = 0.0;
    for (std::size_t i = from; i < from + window; ++i) s += trace[i];
    return s / static_cast<double>(window);
  };
  double last = mean(trace.size() - window);
  double previous = mean(trace.size() - 2 * window);
  return std::abs(last - previous) < tolerance * std::abs(previous);
}

// --- the sampler -----------------------------------------------------------------

namespace detail {

struct TreeSweep {
  std::vector<Tree> trees;
  double log_likelihood = 0.0;
};

inline TreeSweep sample_trees(const Corpus& corpus, const ChartGrammar& g,
                              const RunConfig& config, int iteration) {
  const std::size_t N = corpus.size();
  TreeSweep out;
  out.trees.resize(N);
  std::vector<double> loglik(N);
  parallel_for(N, config.workers, [&](std::size_t n) {
    InsideChart chart = build_inside_chart(g, corpus.sentences[n]);
    loglik[n] = sentence_log_likelihood(chart);
    if (!std::isfinite(loglik[n]))
      throw InternalError("sentence " + std::to_string(n) + " is unparsable at iteration " +
                          std::to_string(iteration));
    Rng rng = make_stream(config.seed, {static_cast<std::uint64_t>(iteration),
                                        stream_tag::sentence, n});
    out.trees[n] = sample_tree(chart, g, corpus.vocabulary, rng).tree;
  });
  for (double ll : loglik) out.log_likelihood += ll;
  return out;
}

inline std::uint64_t grammar_seed(const RunConfig& config, int iteration) {
  return derive_seed(config.seed, {static_cast<std::uint64_t>(iteration), stream_tag::grammar});
}

}  // namespace detail

// Alternates G^t ~ Dirichlet(beta + counts(trees^{t-1})) and
// trees^t ~ P(trees | phi(G^t), corpus). Iteration 0 draws G^0 from the
// prior and samples the initial trees under it. Every random draw comes from
// a stream keyed by (seed, iteration, purpose, index), so the run is fully
// determined by (corpus, config) and resumes exactly from any checkpoint.
inline SamplerState gibbs_run(const Corpus& corpus, const RunConfig& config,
                              const RunSinks& sinks = {},
                              std::optional<SamplerState> resume = std::nullopt) {
  config.validate();
  if (corpus.size() == 0) throw ParameterError("empty corpus");
  const CategorySet categories(config.categories);

  auto chart_grammar_for = [&](const Grammar& g, int iteration) {
    if (!config.bounded()) return plain_chart_grammar(g);
    Containment h = compute_containment(g, *config.max_depth, config.containment_iterations);
    if (!h.converged() && sinks.warning)
      sinks.warning("containment not converged at iteration " + std::to_string(iteration) +
                    " (last change " + format_probability(h.last_change()) + ")");
    return bound_grammar(g, h, config.max_depth).chart();
  };

  SamplerState state;
  if (resume) {
    state = std::move(*resume);
    if (state.trees.size() != corpus.size())
      throw ParameterError("checkpoint has a different number of sentences than the corpus");
    if (state.grammar.num_categories() != config.categories ||
        state.grammar.vocab_size() != corpus.vocabulary.size())
      throw ParameterError("checkpoint grammar does not match the configuration");
  } else {
    state.iteration = 0;
    state.grammar = sample_prior_grammar(categories, corpus.vocabulary, config.beta,
                                         detail::grammar_seed(config, 0));
    auto sweep = detail::sample_trees(corpus, chart_grammar_for(state.grammar, 0), config, 0);
    state.trees = std::move(sweep.trees);
    state.corpus_log_likelihood = sweep.log_likelihood;
    if (sinks.initial) sinks.initial(state.trees);
    if (sinks.trace) sinks.trace(0, state.corpus_log_likelihood);
  }

  for (int t = state.iteration + 1; t <= config.iterations; ++t) {
    CountMatrix counts = count_rules(state.trees, config.categories, corpus.vocabulary,
                                     config.max_depth);
#ifndef NDEBUG
    if (counts.total() != static_cast<double>(count_expansions(state.trees)))
      throw InternalError("rule counts disagree with the tree set");
#endif
    Grammar g = sample_posterior_grammar(counts, config.beta, detail::grammar_seed(config, t));
    auto sweep = detail::sample_trees(corpus, chart_grammar_for(g, t), config, t);
    state.iteration = t;
    state.grammar = std::move(g);
    state.trees = std::move(sweep.trees);
    state.corpus_log_likelihood = sweep.log_likelihood;

    if (sinks.trace) sinks.trace(t, state.corpus_log_likelihood);
    if (sinks.sample && config.emits_sample(t)) sinks.sample(t, state.trees);
    if (sinks.checkpoint &&
        (t == config.iterations || (sinks.checkpoint_every > 0 && t % sinks.checkpoint_every == 0)))
      sinks.checkpoint(state);
  }
  return state;
}

// --- checkpoints -------------------------------------------------------------------
//
//   bpcfg-checkpoint 1
//   iteration  <t>
//   seed       <run seed>
//   rng        derived <run seed> <t>
//   depth      <D | unbounded>
//   categories <C>
//   beta       <beta>
//   log_likelihood <corpus log likelihood at t>
//   sentences  <N>
//   grammar
//   <grammar file>
//   trees
//   <N bracketed trees>
//   end
//
// The random streams of iteration t+1 are derived from (seed, t+1), so the
// seed and the iteration are the complete generator state.

inline constexpr std::string_view kCheckpointMagic = "bpcfg-checkpoint 1";

inline void write_checkpoint(std::ostream& out, const SamplerState& state, const RunConfig& config,
                             const Vocabulary& vocab) {
  out << kCheckpointMagic << '\n'
      << "iteration\t" << state.iteration << '\n'
      << "seed\t" << config.seed << '\n'
      << "rng\tderived " << config.seed << ' ' << state.iteration << '\n'
      << "depth\t" << (config.max_depth ? std::to_string(*config.max_depth) : "unbounded") << '\n'
      << "categories\t" << config.categories << '\n'
      << "beta\t" << format_probability(config.beta) << '\n'
      << "log_likelihood\t" << format_probability(state.corpus_log_likelihood) << '\n'
      << "sentences\t" << state.trees.size() << '\n'
      << "grammar\n";
  write_grammar(out, state.grammar, vocab);
  out << "trees\n";
  write_trees(out, state.trees);
  out << "end\n";
}

// Reads a checkpoint and checks it against the run configuration.
inline SamplerState read_checkpoint(std::istream& in, const RunConfig& config) {
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::string_view {
    if (!std::getline(in, line)) throw ParseError("truncated checkpoint", lineno);
    ++lineno;
    return detail::strip_cr(line);
  };
  if (next() != kCheckpointMagic) throw ParseError("not a checkpoint file (bad magic)", lineno);
  auto field = [&](std::string_view key) {
    auto f = detail::split(next(), '\t');
    if (f.size() != 2 || f[0] != key) detail::fail_line(lineno, "expected '" + std::string(key) + "'");
    return std::string(f[1]);
  };
  SamplerState state;
  state.iteration = std::stoi(field("iteration"));
  auto seed = std::stoull(field("seed"));
  field("rng");
  std::string depth = field("depth");
  auto categories = std::stoul(field("categories"));
  double beta = std::stod(field("beta"));
  auto ll = detail::parse_double(field("log_likelihood"));
  std::size_t sentences = std::stoul(field("sentences"));
  std::string want_depth = config.max_depth ? std::to_string(*config.max_depth) : "unbounded";
  if (seed != config.seed || depth != want_depth || categories != config.categories ||
      std::abs(beta - config.beta) > 1e-15 * std::abs(config.beta))
    throw ParameterError("checkpoint was written by a run with a different configuration");
  if (!ll) detail::fail_line(lineno, "bad log likelihood");
  state.corpus_log_likelihood = *ll;
  if (next() != "grammar") detail::fail_line(lineno, "expected 'grammar'");
  std::ostringstream grammar_text;
  while (next() != "trees") grammar_text << line << '\n';
  state.grammar = read_grammar(grammar_text.str()).grammar;
  for (std::size_t n = 0; n < sentences; ++n) state.trees.push_back(parse_bracketed(next()));
  if (next() != "end") detail::fail_line(lineno, "expected 'end'");
  return state;
}

}  // namespace bpcfg
