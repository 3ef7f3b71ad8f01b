// qaemb: command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or input error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qaemb/qaemb.hpp"

namespace fs = std::filesystem;
using namespace qaemb;

namespace {

// Bad invocation or unreadable input; maps to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("cannot read " + path);
}

void require_dir(const std::string& path) {
  if (!fs::is_directory(path)) throw UsageError("model directory " + path + " does not exist");
}

KnowledgeBase read_kb(const std::string& path) {
  require_file(path);
  return load_triples(path);
}

LoadedModel read_model(const std::string& dir, const KnowledgeBase* kb) {
  require_dir(dir);
  LoadedModel m = load_model(dir);
  if (kb) m.check_matches(*kb);
  return m;
}

// Questions either read from a qa.tsv or generated from the KB.
struct QuestionSource {
  std::vector<QAPair> pairs;

  static QuestionSource from(const KnowledgeBase& kb, const std::string& qa_path,
                             std::size_t count, std::uint64_t seed) {
    QuestionSource s;
    if (!qa_path.empty()) {
      require_file(qa_path);
      s.pairs = load_qa_tsv(qa_path, kb);
      if (s.pairs.empty()) throw UsageError(qa_path + " holds no questions");
    } else {
      s.pairs = generate_dataset(kb, seed, count ? count : default_question_count(kb));
    }
    return s;
  }
};

std::vector<ParaphrasePair> read_paraphrases(const std::string& path) {
  if (path.empty()) return {};
  require_file(path);
  return load_paraphrases(path);
}

std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file.open(path);
  if (!file) throw Error("cannot write " + path);
  return file;
}

// ---------------------------------------------------------------------------

struct BuildArgs {
  std::string kb, out;
};

int cmd_build(const BuildArgs& a) {
  const KnowledgeBase kb = read_kb(a.kb);
  std::ofstream file;
  std::ostream& out = open_output(a.out, file);
  out << "triples\t" << kb.size() << "\n"
      << "entities\t" << kb.entity_count() << "\n"
      << "relationships\t" << kb.relationship_count() << "\n"
      << "slots\t" << kb.embedding_slots() << "\n";
  return 0;
}

int cmd_patterns() {
  for (const auto& p : question_patterns()) std::cout << describe(p) << "\n";
  return 0;
}

struct GenArgs {
  std::string kb, out;
  std::size_t count = 0;
  std::uint64_t seed = 1;
};

int cmd_gen(const GenArgs& a) {
  const KnowledgeBase kb = read_kb(a.kb);
  const QuestionStream stream(kb, a.seed, a.count ? a.count : default_question_count(kb));
  std::ofstream file;
  std::ostream& out = open_output(a.out, file);
  for (std::size_t i = 0; i < stream.size(); ++i) write_qa_tsv(out, stream[i], kb);
  return 0;
}

struct TrainArgs {
  std::string kb, qa, paraphrases, out;
  std::size_t count = 0;
  std::uint64_t question_seed = 1;
  TrainConfig cfg;
  std::optional<std::size_t> steps;
  std::size_t log_every = 0;
  std::size_t checkpoint_every = 0;
};

int cmd_train(TrainArgs a) {
  const KnowledgeBase kb = read_kb(a.kb);
  const auto questions = QuestionSource::from(kb, a.qa, a.count, a.question_seed);
  const auto paraphrase_pairs = read_paraphrases(a.paraphrases);
  std::optional<ParaphraseCorpus> corpus;
  if (!paraphrase_pairs.empty()) corpus.emplace(paraphrase_pairs);

  const Vocabulary vocab = build_vocabulary(questions.pairs, paraphrase_pairs);
  a.cfg.steps = a.steps ? *a.steps : 2 * questions.pairs.size();
  a.cfg.validate();

  std::mt19937_64 rng(a.cfg.seed);
  EmbeddingModel model = init_model(vocab.size(), kb.embedding_slots(), a.cfg.dim, rng);

  TrainHooks hooks;
  hooks.log = &std::cerr;
  hooks.log_every = a.log_every;
  hooks.checkpoint_every = a.checkpoint_every;
  hooks.checkpoint = [&](std::size_t step, const EmbeddingModel& m) {
    save_model(a.out, m, vocab, kb);
    std::cerr << "checkpoint at step " << step << " -> " << a.out << "\n";
  };
  const TrainStats stats =
      train(model, kb, vocab, questions.pairs, corpus ? &*corpus : nullptr, a.cfg, hooks);
  save_model(a.out, model, vocab, kb);

  std::cout << "steps\t" << stats.steps << "\n"
            << "qa_steps\t" << stats.qa.steps << "\n"
            << "qa_mean_loss\t" << stats.qa.mean_loss() << "\n"
            << "qa_violation_rate\t" << stats.qa.violation_rate() << "\n"
            << "para_steps\t" << stats.para.steps << "\n"
            << "para_mean_loss\t" << stats.para.mean_loss() << "\n"
            << "para_violation_rate\t" << stats.para.violation_rate() << "\n"
            << "oov_dropped\t" << stats.oov_dropped << "\n"
            << "vocabulary\t" << vocab.size() << "\n"
            << "model\t" << a.out << "\n";
  return 0;
}

struct FinetuneArgs {
  std::string model, kb, qa, out, report;
  std::size_t count = 0;
  std::uint64_t question_seed = 1;
  std::uint64_t seed = 1;
  double corrupt_prob = 0.66;
  std::vector<double> lambdas;
  FinetuneConfig cfg;
};

int cmd_finetune(FinetuneArgs a) {
  const KnowledgeBase kb = read_kb(a.kb);
  LoadedModel loaded = read_model(a.model, &kb);
  const auto questions = QuestionSource::from(kb, a.qa, a.count, a.question_seed);
  if (!a.lambdas.empty()) a.cfg.lambdas = a.lambdas;
  std::mt19937_64 rng(a.seed);
  const FitResult fit =
      qaemb::fit(loaded.model, kb, loaded.vocab, questions.pairs, a.cfg, rng, a.corrupt_prob);

  const std::string out_dir = a.out.empty() ? a.model : a.out;
  save_model(out_dir, loaded.model, loaded.vocab, kb, &fit.similarity);

  std::ofstream file;
  std::ostream& out = open_output(a.report, file);
  write_lambda_report(out, fit);
  out << "selected_lambda\t" << fit.similarity.lambda << "\n"
      << "identity_validation_accuracy\t" << fit.identity_validation_accuracy << "\n"
      << "selected_validation_accuracy\t" << fit.selected_validation_accuracy << "\n"
      << "offdiagonal_share\t" << offdiagonal_share(fit.similarity.m) << "\n"
      << "solver_status\t" << fit.final_solve.status << "\n";
  return 0;
}

struct AnswerArgs {
  std::string model, kb, question;
  bool finetuned = false;
  bool no_filter = false;
  std::size_t topn = 1;
  std::size_t freq_threshold = kDefaultFrequencyThreshold;
};

const SimilarityMatrix* pick_similarity(const LoadedModel& m, bool finetuned) {
  if (!finetuned) return nullptr;
  if (!m.similarity) throw UsageError("--finetuned given but the model has no fitted M");
  return &*m.similarity;
}

int cmd_answer(const AnswerArgs& a) {
  const KnowledgeBase kb = read_kb(a.kb);
  const LoadedModel loaded = read_model(a.model, &kb);
  const Tokens question = tokenize(a.question);
  if (question.empty()) throw UsageError("empty question");
  const AnswerOptions opt{!a.no_filter, a.topn, a.freq_threshold};
  const auto ranked = answer(question, kb, loaded.model, loaded.vocab,
                             pick_similarity(loaded, a.finetuned), opt);
  std::cout << std::setprecision(9);
  for (std::size_t i = 0; i < ranked.entries.size(); ++i) {
    const Triple& t = kb.triple(ranked.entries[i].triple);
    std::cout << (i + 1) << '\t' << ranked.entries[i].score << '\t' << kb.symbol_name(t.left) << '\t'
              << kb.symbol_name(t.rel) << '\t' << kb.symbol_name(t.right) << '\n';
  }
  return 0;
}

struct EvalArgs {
  std::string model, kb, candidates, mode = "rerank", pr_out, name;
  bool finetuned = false;
  double threshold = -std::numeric_limits<double>::infinity();
};

int cmd_eval(const EvalArgs& a) {
  const KnowledgeBase kb = read_kb(a.kb);
  const LoadedModel loaded = read_model(a.model, &kb);
  require_file(a.candidates);
  const auto pools = load_candidates(a.candidates, kb);
  if (pools.empty()) throw UsageError(a.candidates + " holds no candidates");
  const SimilarityMatrix* sim = pick_similarity(loaded, a.finetuned);
  const TripleLookup lookup(kb);

  std::vector<LabeledRanking> rankings;
  for (const auto& pool : pools) {
    std::vector<bool> relevant(kb.size(), false);
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < pool.triples.size(); ++i) {
      if (pool.labels[i] < 0) throw UsageError(a.candidates + ": evaluation needs a label column");
      const auto& found = lookup.find(pool.triples[i]);
      if (found.empty()) throw UsageError(a.candidates + ": candidate triple is not in the KB");
      indices.push_back(found.front());
      if (pool.labels[i] == 1) {
        for (std::size_t t : found) relevant[t] = true;
      }
    }
    const CandidateSet set = a.mode == "full" ? all_candidates(pool.question, kb)
                                              : provided_candidates(pool.question, indices, kb);
    rankings.push_back(label_ranking(pool.text, rank(set, loaded.model, loaded.vocab, kb, sim),
                                     [&](std::size_t t) { return bool(relevant[t]); }));
  }

  const EvalReport report = evaluate(rankings, a.threshold);
  const std::string name = !a.name.empty() ? a.name : (sim ? "Embeddings+fine-tuning" : "Embeddings");
  write_report_table(std::cout, {{name, report}});
  std::cout << "\nmode=" << a.mode << "\n";
  write_report_kv(std::cout, report);
  if (!a.pr_out.empty()) {
    std::ofstream pr(a.pr_out);
    if (!pr) throw Error("cannot write " + a.pr_out);
    write_pr_curve(pr, report.pr_curve);
  } else {
    std::cout << "\n# recall precision\n";
    write_pr_curve(std::cout, report.pr_curve);
  }
  return 0;
}

struct NeighborsArgs {
  std::string model, word;
  std::size_t topn = 10;
};

int cmd_neighbors(const NeighborsArgs& a) {
  const LoadedModel loaded = read_model(a.model, nullptr);
  if (!loaded.vocab.find(a.word)) throw UsageError("word '" + a.word + "' is not in the vocabulary");
  std::cout << std::setprecision(9);
  for (const auto& n : nearest_symbols(a.word, loaded.model, loaded.vocab, loaded.slot_labels(), a.topn)) {
    std::cout << n.label << '\t' << n.similarity << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Embedding-based question answering over triple stores"};
  app.require_subcommand(1);

  BuildArgs build;
  auto* build_cmd = app.add_subcommand("build", "Load a triple file and print index counts");
  build_cmd->add_option("--kb", build.kb, "Triple file (left<TAB>rel<TAB>right)")->required();
  build_cmd->add_option("-o,--out", build.out, "Summary output (default stdout)");

  auto* patterns_cmd = app.add_subcommand("patterns", "Print the built-in question patterns");

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate question-triple pairs");
  gen_cmd->add_option("--kb", gen.kb, "Triple file")->required();
  gen_cmd->add_option("--count", gen.count, "Number of pairs (default 16 per triple)");
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("-o,--out", gen.out, "qa.tsv output (default stdout)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train word and symbol embeddings");
  train_cmd->add_option("--kb", tr.kb, "Triple file")->required();
  train_cmd->add_option("--qa", tr.qa, "qa.tsv training pairs (default: generate from the KB)");
  train_cmd->add_option("--count", tr.count, "Generated pairs when --qa is absent (default 16 per triple)");
  train_cmd->add_option("--question-seed", tr.question_seed, "Seed for generated pairs");
  train_cmd->add_option("--paraphrases", tr.paraphrases, "Paraphrase pairs (q1<TAB>q2)");
  train_cmd->add_option("-o,--out", tr.out, "Model directory")->required();
  train_cmd->add_option("--dim", tr.cfg.dim, "Embedding dimension")->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", tr.cfg.lr0, "Initial learning rate")->check(CLI::PositiveNumber);
  train_cmd->add_option("--margin", tr.cfg.margin, "Ranking margin")->check(CLI::PositiveNumber);
  train_cmd->add_option("--corrupt", tr.cfg.corrupt_prob, "Per-slot corruption probability")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--steps", tr.steps, "SGD steps, both tasks counted (default 2 per question)");
  train_cmd->add_option("--seed", tr.cfg.seed, "Training seed");
  train_cmd->add_option("--workers", tr.cfg.workers, "Lock-free worker threads")->check(CLI::PositiveNumber);
  train_cmd->add_option("--log-every", tr.log_every, "Progress line every N steps (stderr)");
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every, "Save the model every N steps");

  FinetuneArgs ft;
  auto* ft_cmd = app.add_subcommand("finetune", "Fit the bilinear similarity matrix M");
  ft_cmd->add_option("--model", ft.model, "Model directory")->required();
  ft_cmd->add_option("--kb", ft.kb, "Triple file the model was trained on")->required();
  ft_cmd->add_option("--qa", ft.qa, "qa.tsv pairs (default: generate from the KB)");
  ft_cmd->add_option("--count", ft.count, "Generated pairs when --qa is absent");
  ft_cmd->add_option("--question-seed", ft.question_seed, "Seed for generated pairs");
  ft_cmd->add_option("--lambda", ft.lambdas, "Regularization value; repeat for a grid (default 1e-7..1e-1)");
  ft_cmd->add_option("--train-fraction", ft.cfg.train_fraction, "Share of examples used for fitting")
      ->check(CLI::Range(0.0, 1.0));
  ft_cmd->add_option("--negatives", ft.cfg.negatives_per_question, "Fixed negatives per question")
      ->check(CLI::PositiveNumber);
  ft_cmd->add_option("--max-iterations", ft.cfg.solver.max_iterations, "L-BFGS iteration cap");
  ft_cmd->add_option("--corrupt", ft.corrupt_prob, "Per-slot corruption probability")
      ->check(CLI::Range(0.0, 1.0));
  ft_cmd->add_option("--seed", ft.seed, "Seed for negative sampling");
  ft_cmd->add_option("-o,--out", ft.out, "Output model directory (default: --model)");
  ft_cmd->add_option("--report", ft.report, "Lambda report output (default stdout)");

  AnswerArgs ans;
  auto* answer_cmd = app.add_subcommand("answer", "Rank KB triples for a question");
  answer_cmd->add_option("--model", ans.model, "Model directory")->required();
  answer_cmd->add_option("--kb", ans.kb, "Triple file")->required();
  answer_cmd->add_option("-q,--question", ans.question, "Question text")->required();
  answer_cmd->add_option("--topn", ans.topn, "Answers to print")->check(CLI::PositiveNumber);
  answer_cmd->add_flag("--no-filter", ans.no_filter, "Rank the whole KB instead of string-matched candidates");
  answer_cmd->add_flag("--finetuned", ans.finetuned, "Score with the fitted M");
  answer_cmd->add_option("--freq-threshold", ans.freq_threshold, "Filter: maximum string frequency");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate on labeled candidate pools");
  eval_cmd->add_option("--model", ev.model, "Model directory")->required();
  eval_cmd->add_option("--kb", ev.kb, "Triple file")->required();
  eval_cmd->add_option("--candidates", ev.candidates,
                       "question<TAB>left<TAB>rel<TAB>right<TAB>label lines")->required();
  eval_cmd->add_option("--mode", ev.mode, "rerank or full")->check(CLI::IsMember({"rerank", "full"}));
  eval_cmd->add_flag("--finetuned", ev.finetuned, "Score with the fitted M");
  eval_cmd->add_option("--threshold", ev.threshold, "Top-answer score threshold for P/R/F1");
  eval_cmd->add_option("--pr-out", ev.pr_out, "Write the precision-recall curve here");
  eval_cmd->add_option("--name", ev.name, "Method name in the table");

  NeighborsArgs nb;
  auto* nb_cmd = app.add_subcommand("neighbors", "Symbol slots closest to a word embedding");
  nb_cmd->add_option("--model", nb.model, "Model directory")->required();
  nb_cmd->add_option("-w,--word", nb.word, "Vocabulary word")->required();
  nb_cmd->add_option("--topn", nb.topn, "Neighbors to print");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*build_cmd) return cmd_build(build);
    if (*patterns_cmd) return cmd_patterns();
    if (*gen_cmd) return cmd_gen(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*ft_cmd) return cmd_finetune(ft);
    if (*answer_cmd) return cmd_answer(ans);
    if (*eval_cmd) return cmd_eval(ev);
    if (*nb_cmd) return cmd_neighbors(nb);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
