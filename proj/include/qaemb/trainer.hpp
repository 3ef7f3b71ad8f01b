#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_set>
#include <vector>

#include "qaemb/datagen.hpp"
#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/model.hpp"

namespace qaemb {

struct TrainConfig {
  double margin = 0.1;
  double lr0 = 0.1;
  std::size_t dim = 64;
  double corrupt_prob = 0.66;
  std::size_t steps = 0;  // QA and paraphrase steps both count
  std::uint64_t seed = 1;
  std::size_t workers = 1;
  double adagrad_eps = 1e-8;

  void validate() const {
    if (!(margin > 0)) throw Error("margin must be positive");
    if (!(lr0 > 0)) throw Error("initial learning rate must be positive");
    if (!(corrupt_prob > 0 && corrupt_prob <= 1)) throw Error("corrupt_prob must lie in (0, 1]");
    if (dim == 0) throw Error("embedding dimension must be positive");
    if (workers == 0) throw Error("need at least one worker");
    if (!(adagrad_eps > 0)) throw Error("adagrad epsilon must be positive");
  }
};

// Per-coordinate sums of squared gradients, shaped like V and W.
struct AdagradState {
  Matrix<double> words;
  Matrix<double> symbols;
  double eps = 1e-8;

  template <class Real>
  static AdagradState for_model(const BasicEmbeddingModel<Real>& model, double eps = 1e-8) {
    return {Matrix<double>(model.vocab_size(), model.dim()),
            Matrix<double>(model.slot_count(), model.dim()), eps};
  }
};

struct TaskStats {
  std::size_t steps = 0;
  double loss_sum = 0.0;
  std::size_t violations = 0;  // steps with a strictly positive hinge

  double mean_loss() const { return steps ? loss_sum / double(steps) : 0.0; }
  double violation_rate() const { return steps ? double(violations) / double(steps) : 0.0; }

  void record(double loss) {
    ++steps;
    loss_sum += loss;
    violations += loss > 0.0;
  }
  void merge(const TaskStats& o) {
    steps += o.steps;
    loss_sum += o.loss_sum;
    violations += o.violations;
  }
};

struct ProgressRecord {
  std::size_t step = 0;
  TaskStats qa;    // over the window ending at `step`
  TaskStats para;
};

struct TrainStats {
  std::size_t steps = 0;
  TaskStats qa;
  TaskStats para;
  std::size_t oov_dropped = 0;
  std::vector<ProgressRecord> history;

  double violation_rate() const {
    const auto n = qa.steps + para.steps;
    return n ? double(qa.violations + para.violations) / double(n) : 0.0;
  }
};

// ---------------------------------------------------------------------------
// Corruption

// Per-attempt bookkeeping of corrupt(): every drawn replacement mask counts,
// accepted or not.
struct CorruptionTrace {
  std::size_t calls = 0;
  std::size_t attempts = 0;
  std::array<std::size_t, 3> replaced{};  // left, rel, right
};

// Copies the slots of `donor` selected by `mask` (left, rel, right) into `t`.
inline Triple replace_slots(const Triple& t, const Triple& donor, std::array<bool, 3> mask) {
  return {mask[0] ? donor.left : t.left, mask[1] ? donor.rel : t.rel,
          mask[2] ? donor.right : t.right};
}

// Negative triple: take a uniformly drawn KB triple and copy each of its
// members into `t` with probability `p`; redraw until the result differs from `t`.
template <class Rng>
Triple corrupt(const Triple& t, const KnowledgeBase& kb, Rng& rng, double p,
               CorruptionTrace* trace = nullptr) {
  if (kb.size() < 2 || !kb.has_distinct_triples()) {
    throw Error("corruption needs a KB with at least two distinct triples");
  }
  std::uniform_int_distribution<std::size_t> pick(0, kb.size() - 1);
  std::bernoulli_distribution coin(p);
  if (trace) ++trace->calls;
  constexpr std::size_t kMaxAttempts = 1'000'000;
  for (std::size_t attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const Triple& donor = kb.triple(pick(rng));
    const std::array<bool, 3> mask = {coin(rng), coin(rng), coin(rng)};
    if (trace) {
      ++trace->attempts;
      for (int s = 0; s < 3; ++s) trace->replaced[s] += mask[s];
    }
    Triple out = replace_slots(t, donor, mask);
    if (!(out == t)) return out;
  }
  throw Error("could not draw a corrupted triple different from the positive one");
}

// ---------------------------------------------------------------------------
// Losses and subgradients

namespace detail {

// Relaxed atomic access: plain loads/stores on mainstream targets, and
// well-defined when lock-free workers share the parameters.
template <class T>
T load(const T& x) {
  return std::atomic_ref<T>(const_cast<T&>(x)).load(std::memory_order_relaxed);
}

template <class T>
void store(T& x, T v) {
  std::atomic_ref<T>(x).store(v, std::memory_order_relaxed);
}

template <class Real>
std::vector<double> sum_rows_shared(const Matrix<Real>& m, const SparseEncoding& enc) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i : enc.indices) {
    const auto r = m.row(i);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += double(load(r[c]));
  }
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) s += a[c] * b[c];
  return s;
}

}  // namespace detail

// d(loss)/d(row) for each touched row, keyed by row index.
using RowGradients = std::map<std::size_t, std::vector<double>>;

struct HingeEval {
  double loss = 0.0;
  RowGradients words;    // rows of V
  RowGradients symbols;  // rows of W
};

namespace detail {

inline void accumulate(RowGradients& g, const SparseEncoding& rows,
                       const std::vector<double>& direction, double sign) {
  for (std::size_t r : rows.indices) {
    auto& v = g[r];
    if (v.empty()) v.assign(direction.size(), 0.0);
    for (std::size_t c = 0; c < v.size(); ++c) v[c] += sign * direction[c];
  }
}

}  // namespace detail

// [margin - f(q).g(t) + f(q).g(t')]_+ and, when strictly positive, its
// gradient: f-rows get g(t') - g(t), rows of t get -f(q), rows of t' get +f(q).
template <class Real>
HingeEval qa_hinge(const BasicEmbeddingModel<Real>& model, const SparseEncoding& q,
                   const SparseEncoding& pos, const SparseEncoding& neg, double margin) {
  const auto f = detail::sum_rows_shared(model.words, q);
  const auto g_pos = detail::sum_rows_shared(model.symbols, pos);
  const auto g_neg = detail::sum_rows_shared(model.symbols, neg);
  HingeEval out;
  const double raw = margin - detail::dot(f, g_pos) + detail::dot(f, g_neg);
  if (!std::isfinite(raw)) {
    throw NumericalError("non-finite QA hinge: S(q,t)=" + std::to_string(detail::dot(f, g_pos)) +
                         " S(q,t')=" + std::to_string(detail::dot(f, g_neg)));
  }
  if (raw <= 0.0) return out;
  out.loss = raw;
  std::vector<double> diff(f.size());
  for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = g_neg[c] - g_pos[c];
  detail::accumulate(out.words, q, diff, 1.0);
  detail::accumulate(out.symbols, pos, f, -1.0);
  detail::accumulate(out.symbols, neg, f, 1.0);
  return out;
}

// [margin - f(q1).f(q2) + f(n1).f(n2)]_+ and its gradient over V rows.
template <class Real>
HingeEval paraphrase_hinge(const BasicEmbeddingModel<Real>& model, const SparseEncoding& q1,
                           const SparseEncoding& q2, const SparseEncoding& n1,
                           const SparseEncoding& n2, double margin) {
  const auto f1 = detail::sum_rows_shared(model.words, q1);
  const auto f2 = detail::sum_rows_shared(model.words, q2);
  const auto h1 = detail::sum_rows_shared(model.words, n1);
  const auto h2 = detail::sum_rows_shared(model.words, n2);
  HingeEval out;
  const double raw = margin - detail::dot(f1, f2) + detail::dot(h1, h2);
  if (!std::isfinite(raw)) throw NumericalError("non-finite paraphrase hinge");
  if (raw <= 0.0) return out;
  out.loss = raw;
  detail::accumulate(out.words, q1, f2, -1.0);
  detail::accumulate(out.words, q2, f1, -1.0);
  detail::accumulate(out.words, n1, h2, 1.0);
  detail::accumulate(out.words, n2, h1, 1.0);
  return out;
}

// Adagrad step on every row with a gradient, then projection of those rows
// onto the unit ball.
template <class Real>
void apply_adagrad(BasicEmbeddingModel<Real>& model, AdagradState& state, const HingeEval& eval,
                   double lr0) {
  auto update = [&](Matrix<Real>& params, Matrix<double>& acc, const RowGradients& grads) {
    for (const auto& [r, g] : grads) {
      auto row = params.row(r);
      auto sums = acc.row(r);
      for (std::size_t c = 0; c < g.size(); ++c) {
        const double G = detail::load(sums[c]) + g[c] * g[c];
        detail::store(sums[c], G);
        const double x = double(detail::load(row[c])) - lr0 * g[c] / std::sqrt(G + state.eps);
        detail::store(row[c], static_cast<Real>(x));
      }
      double sq = 0.0;
      for (std::size_t c = 0; c < row.size(); ++c) {
        const double x = detail::load(row[c]);
        sq += x * x;
      }
      if (sq > 1.0) {
        const double n = std::sqrt(sq);
        for (std::size_t c = 0; c < row.size(); ++c) {
          detail::store(row[c], static_cast<Real>(double(detail::load(row[c])) / n));
        }
      }
    }
  };
  update(model.words, state.words, eval.words);
  update(model.symbols, state.symbols, eval.symbols);
}

// QA step against a given negative triple. Returns the hinge loss.
template <class Real>
double sgd_step_qa(const QAPair& pair, const Triple& negative, BasicEmbeddingModel<Real>& model,
                   const KnowledgeBase& kb, const Vocabulary& vocab, const TrainConfig& cfg,
                   AdagradState& state, std::size_t* oov_dropped = nullptr) {
  const auto q = encode_question(pair.question, vocab, oov_dropped);
  const auto eval = qa_hinge(model, q, encode_triple(pair.answer, kb), encode_triple(negative, kb),
                             cfg.margin);
  if (eval.loss > 0.0) apply_adagrad(model, state, eval, cfg.lr0);
  return eval.loss;
}

// QA step with a freshly corrupted negative.
template <class Real, class Rng>
double sgd_step_qa(const QAPair& pair, BasicEmbeddingModel<Real>& model, const KnowledgeBase& kb,
                   const Vocabulary& vocab, const TrainConfig& cfg, AdagradState& state, Rng& rng,
                   std::size_t* oov_dropped = nullptr) {
  const Triple negative = corrupt(pair.answer, kb, rng, cfg.corrupt_prob);
  return sgd_step_qa(pair, negative, model, kb, vocab, cfg, state, oov_dropped);
}

// Paraphrase pairs plus the check that negatives can be drawn at all.
class ParaphraseCorpus {
 public:
  explicit ParaphraseCorpus(std::vector<ParaphrasePair> pairs) : pairs_(std::move(pairs)) {
    std::unordered_set<std::string> distinct;
    for (const auto& p : pairs_) {
      distinct.insert(join(p.q1));
      distinct.insert(join(p.q2));
      if (distinct.size() >= 2) return;
    }
    throw Error("paraphrase corpus needs at least two distinct questions");
  }

  std::size_t size() const noexcept { return pairs_.size(); }
  const ParaphrasePair& operator[](std::size_t i) const { return pairs_[i]; }
  const std::vector<ParaphrasePair>& pairs() const noexcept { return pairs_; }

  // A uniformly drawn question of the corpus (either side of a uniform pair).
  template <class Rng>
  const Tokens& random_question(Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, 2 * pairs_.size() - 1);
    const std::size_t i = pick(rng);
    return i % 2 ? pairs_[i / 2].q2 : pairs_[i / 2].q1;
  }

 private:
  std::vector<ParaphrasePair> pairs_;
};

// Replaces one side of `pos` (fair coin) by a random corpus question;
// redraws while the result equals `pos`.
template <class Rng>
ParaphrasePair paraphrase_negative(const ParaphrasePair& pos, const ParaphraseCorpus& corpus,
                                   Rng& rng) {
  std::bernoulli_distribution coin(0.5);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const Tokens& q = corpus.random_question(rng);
    ParaphrasePair neg = coin(rng) ? ParaphrasePair{q, pos.q2} : ParaphrasePair{pos.q1, q};
    if (neg.q1 != pos.q1 || neg.q2 != pos.q2) return neg;
  }
  throw Error("could not draw a paraphrase negative different from the positive pair");
}

template <class Real>
double sgd_step_para(const ParaphrasePair& pair, const ParaphrasePair& negative,
                     BasicEmbeddingModel<Real>& model, const Vocabulary& vocab,
                     const TrainConfig& cfg, AdagradState& state,
                     std::size_t* oov_dropped = nullptr) {
  const auto eval = paraphrase_hinge(model, encode_question(pair.q1, vocab, oov_dropped),
                                     encode_question(pair.q2, vocab, oov_dropped),
                                     encode_question(negative.q1, vocab),
                                     encode_question(negative.q2, vocab), cfg.margin);
  if (eval.loss > 0.0) apply_adagrad(model, state, eval, cfg.lr0);
  return eval.loss;
}

template <class Real, class Rng>
double sgd_step_para(const ParaphrasePair& pair, BasicEmbeddingModel<Real>& model,
                     const Vocabulary& vocab, const TrainConfig& cfg, AdagradState& state,
                     Rng& rng, const ParaphraseCorpus& corpus, std::size_t* oov_dropped = nullptr) {
  const ParaphrasePair negative = paraphrase_negative(pair, corpus, rng);
  return sgd_step_para(pair, negative, model, vocab, cfg, state, oov_dropped);
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainHooks {
  std::ostream* log = nullptr;
  std::size_t log_every = 0;  // 0: no progress lines / history
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t step, const EmbeddingModel&)> checkpoint;
  // Called after every step of worker 0 with the rows touched; used by tests
  // that watch the norm constraint. Only invoked when workers == 1.
  std::function<void(const EmbeddingModel&, const HingeEval&)> after_step;
};

inline std::string format_progress(const ProgressRecord& r) {
  std::ostringstream out;
  out << "step=" << r.step << " qa_loss=" << r.qa.mean_loss() << " para_loss=" << r.para.mean_loss()
      << " qa_violation=" << r.qa.violation_rate() << " para_violation=" << r.para.violation_rate();
  return out.str();
}

// Alternates QA and paraphrase steps (pure QA when `paraphrases` is null)
// for cfg.steps steps. With several workers, each runs its share of the
// budget against the shared parameters without any locking; a single worker
// is bitwise reproducible for a given seed.
//
// `dataset` is anything with size() and operator[] yielding a QAPair.
template <class QuestionSource>
TrainStats train(EmbeddingModel& model, const KnowledgeBase& kb, const Vocabulary& vocab,
                 const QuestionSource& dataset, const ParaphraseCorpus* paraphrases,
                 const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  if (dataset.size() == 0) throw Error("training needs at least one question");
  if (model.vocab_size() != vocab.size() || model.slot_count() != kb.embedding_slots()) {
    throw Error("model shape does not match the vocabulary and KB");
  }
  AdagradState state = AdagradState::for_model(model, cfg.adagrad_eps);

  struct Worker {
    std::mt19937_64 rng;
    std::size_t done = 0;  // steps taken by this worker
    std::size_t budget = 0;
    TrainStats stats;      // since the last merge
  };
  std::vector<Worker> workers(cfg.workers);
  for (std::size_t w = 0; w < workers.size(); ++w) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(w)};
    workers[w].rng.seed(seq);
    workers[w].budget = cfg.steps / workers.size() + (w < cfg.steps % workers.size() ? 1 : 0);
  }

  auto run = [&](Worker& w, std::size_t until, std::atomic<bool>& stop, bool watch) {
    std::uniform_int_distribution<std::size_t> pick_q(0, dataset.size() - 1);
    while (w.done < until && !stop.load(std::memory_order_relaxed)) {
      const bool para_turn = paraphrases && (w.done % 2 == 1);
      HingeEval eval;
      if (para_turn) {
        std::uniform_int_distribution<std::size_t> pick_p(0, paraphrases->size() - 1);
        const auto& pos = (*paraphrases)[pick_p(w.rng)];
        const auto neg = paraphrase_negative(pos, *paraphrases, w.rng);
        eval = paraphrase_hinge(model, encode_question(pos.q1, vocab, &w.stats.oov_dropped),
                                encode_question(pos.q2, vocab, &w.stats.oov_dropped),
                                encode_question(neg.q1, vocab), encode_question(neg.q2, vocab),
                                cfg.margin);
        w.stats.para.record(eval.loss);
      } else {
        const auto& pair = dataset[pick_q(w.rng)];
        const Triple negative = corrupt(pair.answer, kb, w.rng, cfg.corrupt_prob);
        eval = qa_hinge(model, encode_question(pair.question, vocab, &w.stats.oov_dropped),
                        encode_triple(pair.answer, kb), encode_triple(negative, kb), cfg.margin);
        w.stats.qa.record(eval.loss);
      }
      if (eval.loss > 0.0) apply_adagrad(model, state, eval, cfg.lr0);
      if (watch) hooks.after_step(model, eval);
      ++w.done;
      ++w.stats.steps;
    }
  };

  // Steps are taken in rounds so that logging and checkpoints see a
  // quiescent model.
  std::size_t round = cfg.steps;
  if (hooks.log_every) round = std::min(round, hooks.log_every);
  if (hooks.checkpoint_every && hooks.checkpoint) round = std::min(round, hooks.checkpoint_every);
  round = std::max<std::size_t>(round, 1);

  TrainStats total;
  std::size_t next_checkpoint = hooks.checkpoint_every;
  for (std::size_t target = 0; target < cfg.steps;) {
    target = std::min(cfg.steps, target + round);
    std::atomic<bool> stop{false};
    std::vector<std::exception_ptr> errors(workers.size());
    auto until = [&](const Worker& w) {
      // Each worker's share of the first `target` global steps.
      return std::min(w.budget, (target + workers.size() - 1) / workers.size());
    };
    if (workers.size() == 1) {
      run(workers[0], target, stop, static_cast<bool>(hooks.after_step));
    } else {
      std::vector<std::thread> threads;
      for (std::size_t i = 0; i < workers.size(); ++i) {
        threads.emplace_back([&, i] {
          try {
            run(workers[i], until(workers[i]), stop, false);
          } catch (...) {
            errors[i] = std::current_exception();
            stop = true;
          }
        });
      }
      for (auto& t : threads) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    ProgressRecord window;
    for (auto& w : workers) {
      window.qa.merge(w.stats.qa);
      window.para.merge(w.stats.para);
      total.steps += w.stats.steps;
      total.oov_dropped += w.stats.oov_dropped;
      w.stats = TrainStats{};
    }
    total.qa.merge(window.qa);
    total.para.merge(window.para);
    window.step = total.steps;
    if (!std::isfinite(window.qa.loss_sum) || !std::isfinite(window.para.loss_sum)) {
      throw NumericalError("running loss became non-finite at step " + std::to_string(total.steps));
    }
    if (hooks.log_every) {
      total.history.push_back(window);
      if (hooks.log) *hooks.log << format_progress(window) << '\n';
    }
    if (hooks.checkpoint && hooks.checkpoint_every && total.steps >= next_checkpoint) {
      hooks.checkpoint(total.steps, model);
      next_checkpoint += hooks.checkpoint_every;
    }
  }
  return total;
}

}  // namespace qaemb
