#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <vector>

#include "qaemb/datagen.hpp"
#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/lbfgs.hpp"
#include "qaemb/model.hpp"
#include "qaemb/trainer.hpp"

namespace qaemb {

// Fixed training examples for the similarity fit, kept in embedding space:
// f(q) and d = g(t') - g(t), so that S_ft(q,t') - S_ft(q,t) = f^T M d.
class FinetuneSet {
 public:
  explicit FinetuneSet(std::size_t dim) : dim_(dim) {}

  void add(std::span<const double> f, std::span<const double> g_pos, std::span<const double> g_neg) {
    if (f.size() != dim_ || g_pos.size() != dim_ || g_neg.size() != dim_) {
      throw Error("fine-tuning vectors must have the embedding dimension");
    }
    f_.insert(f_.end(), f.begin(), f.end());
    for (std::size_t c = 0; c < dim_; ++c) d_.push_back(g_neg[c] - g_pos[c]);
    ++size_;
  }

  std::size_t size() const noexcept { return size_; }
  std::size_t dim() const noexcept { return dim_; }
  std::span<const double> f(std::size_t i) const { return {f_.data() + i * dim_, dim_}; }
  std::span<const double> d(std::size_t i) const { return {d_.data() + i * dim_, dim_}; }

  // Examples [begin, end) as a new set.
  FinetuneSet slice(std::size_t begin, std::size_t end) const {
    FinetuneSet out(dim_);
    out.f_.assign(f_.begin() + begin * dim_, f_.begin() + end * dim_);
    out.d_.assign(d_.begin() + begin * dim_, d_.begin() + end * dim_);
    out.size_ = end - begin;
    return out;
  }

 private:
  std::size_t dim_;
  std::size_t size_ = 0;
  std::vector<double> f_;
  std::vector<double> d_;
};

// Builds the set from questions and one negative per question. Rejects any
// example whose negative equals its answer.
template <class Real>
FinetuneSet make_finetune_set(const BasicEmbeddingModel<Real>& model, const KnowledgeBase& kb,
                              const Vocabulary& vocab, const std::vector<QAPair>& pairs,
                              const std::vector<Triple>& negatives) {
  if (pairs.size() != negatives.size()) throw Error("need exactly one negative per question");
  FinetuneSet set(model.dim());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (negatives[i] == pairs[i].answer) {
      throw Error("fine-tuning example " + std::to_string(i) + " has a negative equal to its answer");
    }
    const auto f = question_embedding(model, encode_question(pairs[i].question, vocab));
    set.add(f, triple_embedding(model, encode_triple(pairs[i].answer, kb)),
            triple_embedding(model, encode_triple(negatives[i], kb)));
  }
  return set;
}

namespace detail {

// f^T M d with M flattened row-major.
inline double bilinear_flat(std::span<const double> f, const std::vector<double>& m,
                            std::span<const double> d) {
  const std::size_t k = f.size();
  double s = 0.0;
  for (std::size_t a = 0; a < k; ++a) {
    if (f[a] == 0.0) continue;
    const double* row = m.data() + a * k;
    double r = 0.0;
    for (std::size_t b = 0; b < k; ++b) r += row[b] * d[b];
    s += f[a] * r;
  }
  return s;
}

}  // namespace detail

// lambda/2 ||M||_F^2 + (1/m) sum [1 - S_ft(q,t) + S_ft(q,t')]_+^2, M flattened row-major.
inline double finetune_objective(const std::vector<double>& m, const FinetuneSet& set, double lambda) {
  double reg = 0.0;
  for (double v : m) reg += v * v;
  double loss = 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const double h = 1.0 + detail::bilinear_flat(set.f(i), m, set.d(i));
    if (h > 0) loss += h * h;
  }
  return 0.5 * lambda * reg + (set.size() ? loss / double(set.size()) : 0.0);
}

// Objective value, with its gradient lambda M + (2/m) sum_active h f d^T in `grad`.
inline double finetune_objective_and_gradient(const std::vector<double>& m, const FinetuneSet& set,
                                              double lambda, std::vector<double>& grad) {
  const std::size_t k = set.dim();
  grad.assign(k * k, 0.0);
  double reg = 0.0;
  for (double v : m) reg += v * v;
  double loss = 0.0;
  const double scale = set.size() ? 2.0 / double(set.size()) : 0.0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto f = set.f(i);
    const auto d = set.d(i);
    const double h = 1.0 + detail::bilinear_flat(f, m, d);
    if (h <= 0) continue;
    loss += h * h;
    for (std::size_t a = 0; a < k; ++a) {
      const double fa = scale * h * f[a];
      if (fa == 0.0) continue;
      double* row = grad.data() + a * k;
      for (std::size_t b = 0; b < k; ++b) row[b] += fa * d[b];
    }
  }
  for (std::size_t j = 0; j < m.size(); ++j) grad[j] += lambda * m[j];
  return 0.5 * lambda * reg + (set.size() ? loss / double(set.size()) : 0.0);
}

inline std::vector<double> finetune_gradient(const std::vector<double>& m, const FinetuneSet& set,
                                             double lambda) {
  std::vector<double> grad;
  finetune_objective_and_gradient(m, set, lambda, grad);
  return grad;
}

// Fraction of examples the bilinear score ranks strictly right: S_ft(q,t) > S_ft(q,t').
inline double pairwise_accuracy(const std::vector<double>& m, const FinetuneSet& set) {
  if (set.size() == 0) return 0.0;
  std::size_t right = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    right += detail::bilinear_flat(set.f(i), m, set.d(i)) < 0.0;
  }
  return double(right) / double(set.size());
}

inline std::vector<double> flat_identity(std::size_t k) {
  std::vector<double> m(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) m[i * k + i] = 1.0;
  return m;
}

inline std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(std::pow(10.0, -7.0 + 0.5 * i));
  return grid;
}

struct FinetuneConfig {
  std::vector<double> lambdas = default_lambda_grid();
  double train_fraction = 0.4;  // remaining examples validate
  std::size_t negatives_per_question = 1;
  LbfgsOptions solver;

  void validate(std::size_t examples) const {
    if (lambdas.empty()) throw Error("lambda grid is empty");
    for (double l : lambdas) {
      if (!(l > 0)) throw Error("lambda values must be positive");
    }
    if (!(train_fraction > 0 && train_fraction < 1)) throw Error("train_fraction must lie in (0, 1)");
    if (negatives_per_question == 0) throw Error("need at least one negative per question");
    const auto n_train = train_size(examples);
    if (n_train == 0 || n_train >= examples) throw Error("train and validation splits must both be nonempty");
  }

  std::size_t train_size(std::size_t examples) const {
    return static_cast<std::size_t>(std::llround(train_fraction * double(examples)));
  }
};

struct LambdaReport {
  double lambda = 0.0;
  double train_objective = 0.0;
  double validation_accuracy = std::numeric_limits<double>::quiet_NaN();
  std::size_t iterations = 0;
};

struct FitResult {
  SimilarityMatrix similarity;
  std::vector<LambdaReport> reports;  // one row per grid value
  std::size_t selected = 0;           // index into reports
  double identity_validation_accuracy = 0.0;
  double selected_validation_accuracy = 0.0;
  LbfgsResult final_solve;            // the refit on the whole set
};

inline LbfgsResult solve_similarity(const FinetuneSet& set, double lambda, const LbfgsOptions& opt) {
  return minimize_lbfgs(
      [&](const std::vector<double>& m, std::vector<double>& grad) {
        return finetune_objective_and_gradient(m, set, lambda, grad);
      },
      flat_identity(set.dim()), opt);
}

// Fits M on the train split for every lambda, keeps the lambda with the best
// validation pairwise accuracy (first in grid order on ties), then refits on
// the whole set. A single-value grid skips the selection fits.
inline FitResult fit_similarity(const FinetuneSet& set, const FinetuneConfig& cfg) {
  cfg.validate(set.size());
  const std::size_t n_train = cfg.train_size(set.size());
  const FinetuneSet train_split = set.slice(0, n_train);
  const FinetuneSet valid_split = set.slice(n_train, set.size());

  FitResult out;
  out.identity_validation_accuracy = pairwise_accuracy(flat_identity(set.dim()), valid_split);
  if (cfg.lambdas.size() > 1) {
    double best = -1.0;
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
      const auto solve = solve_similarity(train_split, cfg.lambdas[i], cfg.solver);
      LambdaReport row{cfg.lambdas[i], solve.value, pairwise_accuracy(solve.x, valid_split),
                       solve.iterations};
      if (row.validation_accuracy > best) {
        best = row.validation_accuracy;
        out.selected = i;
      }
      out.reports.push_back(row);
    }
    out.selected_validation_accuracy = best;
  }

  const double lambda = cfg.lambdas[out.selected];
  out.final_solve = solve_similarity(set, lambda, cfg.solver);
  if (cfg.lambdas.size() == 1) {
    out.reports.push_back({lambda, out.final_solve.value,
                           pairwise_accuracy(out.final_solve.x, valid_split),
                           out.final_solve.iterations});
    out.selected_validation_accuracy = out.reports[0].validation_accuracy;
  }

  const std::size_t k = set.dim();
  out.similarity.m = Matrix<float>(k, k);
  for (std::size_t j = 0; j < k * k; ++j) {
    out.similarity.m.data()[j] = static_cast<float>(out.final_solve.x[j]);
  }
  out.similarity.lambda = lambda;
  return out;
}

// Draws cfg.negatives_per_question fixed corruptions of every answer and
// fits M on the result. Copies of one question stay adjacent, so the
// train/validation cut separates questions rather than negatives.
template <class Rng>
FitResult fit(const EmbeddingModel& model, const KnowledgeBase& kb, const Vocabulary& vocab,
              const std::vector<QAPair>& pairs, const FinetuneConfig& cfg, Rng& rng,
              double corrupt_prob = 0.66) {
  if (cfg.negatives_per_question == 0) throw Error("need at least one negative per question");
  std::vector<QAPair> questions;
  std::vector<Triple> negatives;
  questions.reserve(pairs.size() * cfg.negatives_per_question);
  negatives.reserve(pairs.size() * cfg.negatives_per_question);
  for (const auto& p : pairs) {
    for (std::size_t j = 0; j < cfg.negatives_per_question; ++j) {
      questions.push_back(p);
      negatives.push_back(corrupt(p.answer, kb, rng, corrupt_prob));
    }
  }
  return fit_similarity(make_finetune_set(model, kb, vocab, questions, negatives), cfg);
}

// Share of ||M||_F^2 held by off-diagonal entries.
inline double offdiagonal_share(const Matrix<float>& m) {
  double diag = 0.0, off = 0.0;
  for (std::size_t a = 0; a < m.rows(); ++a) {
    for (std::size_t b = 0; b < m.cols(); ++b) {
      const double v = double(m(a, b)) * double(m(a, b));
      (a == b ? diag : off) += v;
    }
  }
  return diag + off > 0 ? off / (diag + off) : 0.0;
}

inline void write_lambda_report(std::ostream& out, const FitResult& fit) {
  out << "lambda\ttrain_objective\tvalidation_accuracy\titerations\tselected\n";
  for (std::size_t i = 0; i < fit.reports.size(); ++i) {
    const auto& r = fit.reports[i];
    out << r.lambda << '\t' << r.train_objective << '\t' << r.validation_accuracy << '\t'
        << r.iterations << '\t' << (i == fit.selected ? "*" : "") << '\n';
  }
}

}  // namespace qaemb
