#pragma once

// Command-line front end. Everything lives here so tests can run commands
// in-process; tools/bpcfg.cpp only forwards argv.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bpcfg.hpp"

namespace bpcfg::cli {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestFormat = "bpcfg-run 1";
inline constexpr std::size_t kConvergenceWindow = 50;
inline constexpr double kConvergenceTolerance = 1e-4;

// --- small file helpers ----------------------------------------------------------

template <class Writer>
void write_file(const fs::path& path, Writer&& writer) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    writer(out);
    out.flush();
    if (!out) throw DataError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

inline std::string fixed4(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

// --- run directories -----------------------------------------------------------------

inline nlohmann::json config_json(const RunConfig& c) {
  nlohmann::json j;
  if (c.max_depth)
    j["depth"] = *c.max_depth;
  else
    j["depth"] = "unbounded";
  j["categories"] = c.categories;
  j["beta"] = c.beta;
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["sample_every"] = c.sample_every;
  j["seed"] = c.seed;
  j["containment_iterations"] = c.containment_iterations;
  return j;
}

struct TraceRow {
  int iteration;
  double log_likelihood;
};

inline std::vector<TraceRow> read_trace(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing trace " + path.string());
  std::vector<TraceRow> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto f = detail::split(detail::strip_cr(line), '\t');
    if (lineno == 1 && f[0] == "iteration") continue;
    if (f.size() != 2) continue;
    auto ll = detail::parse_double(f[1]);
    if (!ll && f[1] != "-inf") throw ParseError(path.string() + ": bad trace line", lineno);
    rows.push_back({std::stoi(std::string(f[0])), ll ? *ll : -INFINITY});
  }
  return rows;
}

inline std::string trace_line(int iteration, double ll) {
  return std::to_string(iteration) + "\t" + format_probability(ll) + "\n";
}

// Sample files of a run, ordered by iteration.
inline std::vector<fs::path> run_sample_files(const fs::path& dir) {
  fs::path samples = fs::is_directory(dir / "samples") ? dir / "samples" : dir;
  std::vector<std::pair<long, fs::path>> found;
  for (const auto& e : fs::directory_iterator(samples)) {
    if (!e.is_regular_file() || e.path().extension() != ".trees") continue;
    std::string stem = e.path().stem().string();
    long key = -1;
    if (stem.rfind("iter", 0) == 0) {
      try {
        key = std::stol(stem.substr(4));
      } catch (...) {
        key = -1;
      }
    }
    if (key < 0 && samples == dir) continue;  // skip initial.trees etc. in a flat dir
    found.emplace_back(key, e.path());
  }
  std::sort(found.begin(), found.end());
  std::vector<fs::path> out;
  for (auto& [k, p] : found) out.push_back(p);
  return out;
}

// --- induce -------------------------------------------------------------------------------

struct InduceOptions {
  std::string corpus;
  std::string out;
  std::string depth = "2";
  RunConfig config;
  int checkpoint_every = 50;
  bool resume = false;
};

inline std::optional<int> parse_depth(const std::string& s) {
  if (s == "unbounded" || s == "inf") return std::nullopt;
  std::size_t used = 0;
  int d = 0;
  try {
    d = std::stoi(s, &used);
  } catch (...) {
    used = 0;
  }
  if (used != s.size() || d < 1) throw ParameterError("--depth must be a positive integer or 'unbounded'");
  return d;
}

inline int cmd_induce(InduceOptions opt, std::ostream& out, std::ostream& err) {
  opt.config.max_depth = parse_depth(opt.depth);
  opt.config.validate();
  const RunConfig& config = opt.config;
  Corpus corpus = Corpus::read_file(opt.corpus);
  if (corpus.size() == 0) throw DataError("corpus " + opt.corpus + " is empty");

  const fs::path dir = opt.out;
  const fs::path manifest_path = dir / "manifest.json";
  const fs::path trace_path = dir / "trace.tsv";
  const fs::path checkpoint_path = dir / "checkpoint.txt";

  nlohmann::json manifest;
  std::optional<SamplerState> resume;
  if (fs::exists(manifest_path)) {
    if (!opt.resume)
      throw ParameterError("run directory " + dir.string() +
                           " already holds a run; use --resume or a new --out");
    manifest = nlohmann::json::parse(read_file(manifest_path));
    if (manifest.at("config") != config_json(config))
      throw ParameterError("--resume with a configuration that differs from the manifest");
    std::ifstream ck(checkpoint_path);
    if (!ck) throw DataError("no checkpoint to resume from in " + dir.string());
    resume = read_checkpoint(ck, config);
    if (manifest.value("status", "") != "running" && resume->iteration >= config.iterations) {
      out << "run in " << dir.string() << " is already complete\n";
      return 0;
    }
  } else {
    if (opt.resume) throw ParameterError("nothing to resume in " + dir.string());
    fs::create_directories(dir);
  }
  fs::create_directories(dir / "samples");

  manifest["format"] = kManifestFormat;
  manifest["corpus"] = opt.corpus;
  manifest["config"] = config_json(config);
  manifest["status"] = "running";
  write_file(manifest_path, [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });

  // The trace keeps exactly the iterations the checkpoint has seen.
  std::vector<TraceRow> trace;
  if (resume) {
    for (const auto& r : read_trace(trace_path))
      if (r.iteration <= resume->iteration) trace.push_back(r);
  }
  write_file(trace_path, [&](std::ostream& o) {
    o << "iteration\tlogLikelihood\n";
    for (const auto& r : trace) o << trace_line(r.iteration, r.log_likelihood);
  });
  std::ofstream trace_out(trace_path, std::ios::app);
  if (!trace_out) throw DataError("cannot append to " + trace_path.string());

  RunSinks sinks;
  sinks.checkpoint_every = opt.checkpoint_every;
  sinks.trace = [&](int t, double ll) {
    trace.push_back({t, ll});
    trace_out << trace_line(t, ll) << std::flush;
    if (!trace_out) throw DataError("failed writing " + trace_path.string());
  };
  sinks.initial = [&](const std::vector<Tree>& trees) {
    write_file(dir / "initial.trees", [&](std::ostream& o) { write_trees(o, trees); });
  };
  sinks.sample = [&](int t, const std::vector<Tree>& trees) {
    write_file(dir / "samples" / ("iter" + std::to_string(t) + ".trees"),
               [&](std::ostream& o) { write_trees(o, trees); });
  };
  sinks.checkpoint = [&](const SamplerState& s) {
    write_file(checkpoint_path, [&](std::ostream& o) { write_checkpoint(o, s, config, corpus.vocabulary); });
  };
  std::size_t warnings = 0;
  sinks.warning = [&](const std::string& m) {
    if (warnings++ == 0) err << "warning: " << m << '\n';
  };

  SamplerState final_state = gibbs_run(corpus, config, sinks, std::move(resume));
  trace_out.close();
  if (warnings > 1) err << "warning: " << warnings - 1 << " similar warnings suppressed\n";

  write_file(dir / "grammar.txt",
             [&](std::ostream& o) { write_grammar(o, final_state.grammar, corpus.vocabulary); });

  std::vector<double> lls;
  for (const auto& r : trace) lls.push_back(r.log_likelihood);
  bool converged = lls.size() >= 2 * kConvergenceWindow &&
                   detect_convergence(lls, kConvergenceWindow, kConvergenceTolerance);
  manifest["status"] = converged ? "converged" : "finished";
  manifest["final_log_likelihood"] = final_state.corpus_log_likelihood;
  manifest["last_iteration"] = final_state.iteration;
  write_file(manifest_path, [&](std::ostream& o) { o << manifest.dump(2) << '\n'; });

  if (read_trace(trace_path).size() != static_cast<std::size_t>(config.iterations + 1))
    throw InternalError("trace file is incomplete");
  out << "run " << dir.string() << ": " << manifest["status"].get<std::string>()
      << ", final log likelihood " << format_probability(final_state.corpus_log_likelihood) << '\n';
  return 0;
}

// --- bound --------------------------------------------------------------------------------

inline int cmd_bound(const std::string& grammar_path, int depth, int iterations,
                     const std::string& out_path, std::ostream& out, std::ostream& err) {
  std::ifstream in(grammar_path);
  if (!in) throw DataError("cannot open grammar " + grammar_path);
  GrammarFile gf = read_grammar(in);
  Containment h = compute_containment(gf.grammar, depth, iterations);
  if (!h.converged())
    err << "warning: containment not converged after " << iterations << " iterations (last change "
        << format_probability(h.last_change()) << ")\n";
  BoundedGrammar bg = bound_grammar(gf.grammar, h, depth);
  if (out_path == "-") {
    write_bounded_grammar(out, bg, gf.vocabulary);
  } else {
    write_file(out_path, [&](std::ostream& o) { write_bounded_grammar(o, bg, gf.vocabulary); });
  }
  return 0;
}

// --- pioc -------------------------------------------------------------------------------

inline std::vector<fs::path> expand_sample_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    fs::path p = in;
    if (fs::is_directory(p)) {
      auto found = run_sample_files(p);
      if (found.empty()) throw DataError("no sample files in " + p.string());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(p)) {
      files.push_back(p);
    } else {
      throw DataError("no such sample file or run directory: " + in);
    }
  }
  return files;
}

inline int cmd_pioc(const std::vector<std::string>& inputs, const std::string& corpus_path,
                    double threshold, const std::string& out_path, std::ostream& out) {
  if (threshold < 0.0) throw ParameterError("--merge-threshold must be nonnegative");
  Corpus corpus = Corpus::read_file(corpus_path);
  std::vector<SpanStats> stats;
  for (std::size_t n = 0; n < corpus.size(); ++n) stats.emplace_back(corpus.words(n));
  auto files = expand_sample_inputs(inputs);
  for (const auto& f : files) {
    auto trees = read_tree_file(f.string());
    if (trees.size() != corpus.size())
      throw DataError(f.string() + ": " + std::to_string(trees.size()) + " trees for " +
                      std::to_string(corpus.size()) + " sentences");
    for (std::size_t n = 0; n < trees.size(); ++n) {
      try {
        stats[n].add(trees[n]);
      } catch (const DataError& e) {
        throw DataError(f.string() + ": sentence " + std::to_string(n + 1) + ": " + e.what());
      }
    }
  }
  write_file(out_path, [&](std::ostream& o) {
    for (const auto& s : stats) o << emit_bracketed(merge_uncertain_spans(map_decode(s), s, threshold)) << '\n';
  });
  out << "decoded " << corpus.size() << " sentences from " << files.size() << " sample files\n";
  return 0;
}

// --- eval -------------------------------------------------------------------------------

inline int cmd_eval(const std::string& gold_path, const std::string& pred_path,
                    const std::string& punct_path, bool exclude_root,
                    const std::string& diagnostics_path, std::ostream& out, std::ostream& err) {
  auto gold = read_tree_file(gold_path);
  auto pred = read_tree_file(pred_path);
  PunctuationPredicate punct = punct_path.empty() ? PunctuationPredicate(default_is_punctuation)
                                                  : load_punctuation_list(punct_path);
  auto r = unlabeled_parseval(gold, pred, punct, {.include_root = !exclude_root});
  if (r.skipped) err << "warning: skipped " << r.skipped << " all-punctuation sentences\n";
  out << "recall\tprecision\tf1\n"
      << fixed4(r.recall) << '\t' << fixed4(r.precision) << '\t' << fixed4(r.f1) << '\n';
  if (!diagnostics_path.empty()) {
    write_file(diagnostics_path, [&](std::ostream& o) {
      o << "sentence\tmatched\tgold\tpredicted\tskipped\n";
      for (const auto& s : r.sentences)
        o << s.index + 1 << '\t' << s.matched << '\t' << s.gold << '\t' << s.predicted << '\t'
          << (s.skipped ? 1 : 0) << '\n';
    });
  }
  return 0;
}

// --- baseline -----------------------------------------------------------------------------

inline int cmd_baseline(const std::string& corpus_path, const std::string& out_path) {
  Corpus corpus = Corpus::read_file(corpus_path);
  write_file(out_path, [&](std::ostream& o) {
    for (std::size_t n = 0; n < corpus.size(); ++n)
      o << emit_bracketed(right_branching_tree(corpus.words(n))) << '\n';
  });
  return 0;
}

// --- analyze ------------------------------------------------------------------------------

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  if (x.size() < 2) return NAN;
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxx > 0 && syy > 0 ? sxy / std::sqrt(sxx * syy) : NAN;
}

struct AnalyzeOptions {
  std::vector<std::string> runs;
  std::string gold;
  std::string punct_list;
  std::string out;
  int top_k = 0;
};

inline int cmd_analyze(const AnalyzeOptions& opt, std::ostream& out, std::ostream& err) {
  std::optional<std::vector<Tree>> gold;
  if (!opt.gold.empty()) gold = read_tree_file(opt.gold);
  PunctuationPredicate punct = opt.punct_list.empty() ? PunctuationPredicate(default_is_punctuation)
                                                      : load_punctuation_list(opt.punct_list);
  struct RunRow {
    std::string name;
    std::string depth;
    double final_ll;
    std::optional<ParsevalResult> score;
  };
  std::vector<RunRow> rows;
  std::ostringstream depths;
  depths << "run\tstage\tdepth\tfraction\n";
  for (const auto& run : opt.runs) {
    fs::path dir = run;
    auto trace = read_trace(dir / "trace.tsv");
    if (trace.empty()) throw DataError("empty trace in " + run);
    RunRow row{run, "?", trace.back().log_likelihood, std::nullopt};
    if (fs::exists(dir / "manifest.json")) {
      auto m = nlohmann::json::parse(read_file(dir / "manifest.json"));
      const auto& d = m.at("config").at("depth");
      row.depth = d.is_string() ? d.get<std::string>() : std::to_string(d.get<int>());
    }
    auto samples = run_sample_files(dir);
    auto histogram = [&](const char* stage, const fs::path& file) {
      auto trees = read_tree_file(file.string());
      for (auto [d, f] : depth_histogram(trees))
        depths << run << '\t' << stage << '\t' << d << '\t' << format_probability(f) << '\n';
    };
    if (fs::exists(dir / "initial.trees")) histogram("initial", dir / "initial.trees");
    if (!samples.empty()) histogram("converged", samples.back());
    if (gold) {
      if (samples.empty()) throw DataError("no samples to score in " + run);
      auto pred = read_tree_file(samples.back().string());
      row.score = unlabeled_parseval(*gold, pred, punct);
    }
    rows.push_back(std::move(row));
  }

  fs::create_directories(opt.out);
  write_file(fs::path(opt.out) / "runs.tsv", [&](std::ostream& o) {
    o << "run\tdepth\tfinal_log_likelihood";
    if (gold) o << "\trecall\tprecision\tf1";
    o << '\n';
    std::vector<double> lls, f1s;
    for (const auto& r : rows) {
      o << r.name << '\t' << r.depth << '\t' << format_probability(r.final_ll);
      if (r.score) {
        o << '\t' << fixed4(r.score->recall) << '\t' << fixed4(r.score->precision) << '\t'
          << fixed4(r.score->f1);
        lls.push_back(r.final_ll);
        f1s.push_back(r.score->f1);
      }
      o << '\n';
    }
    if (gold) {
      double r = pearson(lls, f1s);
      o << "# pearson_r\t" << format_probability(r) << "\tn\t" << lls.size() << '\n';
      out << "pearson r (log likelihood vs F1) = " << format_probability(r) << " over "
          << lls.size() << " runs\n";
    }
  });
  write_file(fs::path(opt.out) / "depths.tsv", [&](std::ostream& o) { o << depths.str(); });

  if (opt.top_k > 0) {
    std::vector<const RunRow*> order;
    for (const auto& r : rows) order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [](auto* a, auto* b) { return a->final_ll > b->final_ll; });
    if (static_cast<std::size_t>(opt.top_k) > order.size())
      err << "warning: only " << order.size() << " runs available for top-" << opt.top_k << '\n';
    write_file(fs::path(opt.out) / "selected.txt", [&](std::ostream& o) {
      for (std::size_t i = 0; i < order.size() && i < static_cast<std::size_t>(opt.top_k); ++i)
        o << order[i]->name << '\n';
    });
  }
  return 0;
}

// --- entry point ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Depth-bounded and unbounded PCFG induction by Gibbs sampling", "bpcfg"};
  app.set_config("--config", "", "TOML/INI file of option defaults (flags take precedence)");
  app.require_subcommand(1);

  InduceOptions induce;
  auto* c_induce = app.add_subcommand("induce", "Run the Gibbs sampler on a corpus");
  c_induce->add_option("corpus", induce.corpus, "One tokenized sentence per line")->required();
  c_induce->add_option("--out", induce.out, "Run directory")->required();
  c_induce->add_option("--depth", induce.depth, "Depth bound D, or 'unbounded'")->capture_default_str();
  c_induce->add_option("--categories", induce.config.categories, "Number of categories C")->capture_default_str();
  c_induce->add_option("--beta", induce.config.beta, "Symmetric Dirichlet concentration")->capture_default_str();
  c_induce->add_option("--iterations", induce.config.iterations)->capture_default_str();
  c_induce->add_option("--burn-in", induce.config.burn_in)->capture_default_str();
  c_induce->add_option("--sample-every", induce.config.sample_every)->capture_default_str();
  c_induce->add_option("--seed", induce.config.seed)->capture_default_str();
  c_induce->add_option("--containment-iterations", induce.config.containment_iterations)->capture_default_str();
  c_induce->add_option("--workers", induce.config.workers, "Threads for per-sentence sampling")->capture_default_str();
  c_induce->add_option("--checkpoint-every", induce.checkpoint_every)->capture_default_str();
  c_induce->add_flag("--resume", induce.resume, "Continue an interrupted run from its checkpoint");

  std::string bound_grammar_path, bound_out = "-";
  int bound_depth = 2, bound_iters = kDefaultContainmentIterations;
  auto* c_bound = app.add_subcommand("bound", "Depth-bound a grammar file");
  c_bound->add_option("grammar", bound_grammar_path)->required();
  c_bound->add_option("--depth", bound_depth)->capture_default_str();
  c_bound->add_option("--iterations", bound_iters, "Containment iterations")->capture_default_str();
  c_bound->add_option("--out", bound_out, "Output file ('-' for stdout)")->capture_default_str();

  std::vector<std::string> pioc_inputs;
  std::string pioc_corpus, pioc_out;
  double pioc_threshold = kDefaultMergeThreshold;
  auto* c_pioc = app.add_subcommand("pioc", "Decode MAP trees from posterior samples");
  c_pioc->add_option("samples", pioc_inputs, "Sample files or run directories")->required();
  c_pioc->add_option("--corpus", pioc_corpus)->required();
  c_pioc->add_option("--merge-threshold", pioc_threshold)->capture_default_str();
  c_pioc->add_option("--out", pioc_out)->required();

  std::string eval_gold, eval_pred, eval_punct, eval_diag;
  bool eval_exclude_root = false;
  auto* c_eval = app.add_subcommand("eval", "Unlabeled PARSEVAL");
  c_eval->add_option("--gold", eval_gold)->required();
  c_eval->add_option("--pred", eval_pred)->required();
  c_eval->add_option("--punct-list", eval_punct, "Punctuation tokens, one per line");
  c_eval->add_flag("--exclude-root", eval_exclude_root, "Do not count whole-sentence spans");
  c_eval->add_option("--diagnostics", eval_diag, "Per-sentence TSV");

  std::string base_corpus, base_out;
  auto* c_base = app.add_subcommand("baseline", "Right-branching trees for a corpus");
  c_base->add_option("corpus", base_corpus)->required();
  c_base->add_option("--out", base_out)->required();

  AnalyzeOptions analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Likelihood, accuracy and depth reports for runs");
  c_analyze->add_option("runs", analyze.runs)->required();
  c_analyze->add_option("--gold", analyze.gold);
  c_analyze->add_option("--punct-list", analyze.punct_list);
  c_analyze->add_option("--out", analyze.out)->required();
  c_analyze->add_option("--top-k-by-loglik", analyze.top_k, "Write the K most likely runs to selected.txt");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*c_induce) return cmd_induce(induce, out, err);
    if (*c_bound) return cmd_bound(bound_grammar_path, bound_depth, bound_iters, bound_out, out, err);
    if (*c_pioc) return cmd_pioc(pioc_inputs, pioc_corpus, pioc_threshold, pioc_out, out);
    if (*c_eval) return cmd_eval(eval_gold, eval_pred, eval_punct, eval_exclude_root, eval_diag, out, err);
    if (*c_base) return cmd_baseline(base_corpus, base_out);
    if (*c_analyze) return cmd_analyze(analyze, out, err);
  } catch (const std::exception& e) {
    err << "bpcfg: error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  std::vector<const char*> argv{"bpcfg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace bpcfg::cli
