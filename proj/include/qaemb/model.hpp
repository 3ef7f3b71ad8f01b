#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qaemb/datagen.hpp"
#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"

namespace qaemb {

// Dense row-major matrix.
template <class Real>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0))
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<Real>& data() noexcept { return data_; }
  const std::vector<Real>& data() const noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

// V holds one row per vocabulary word, W one row per symbol slot (two per
// entity, one per relationship; see KnowledgeBase for the layout).
template <class Real>
struct BasicEmbeddingModel {
  Matrix<Real> words;
  Matrix<Real> symbols;

  std::size_t dim() const noexcept { return words.cols(); }
  std::size_t vocab_size() const noexcept { return words.rows(); }
  std::size_t slot_count() const noexcept { return symbols.rows(); }

  friend bool operator==(const BasicEmbeddingModel&, const BasicEmbeddingModel&) = default;
};

using EmbeddingModel = BasicEmbeddingModel<float>;

// Bilinear fine-tuning matrix and the regularization weight it was fitted with.
struct SimilarityMatrix {
  Matrix<float> m;
  double lambda = 0.0;

  friend bool operator==(const SimilarityMatrix&, const SimilarityMatrix&) = default;
};

// Sorted distinct indices of the rows present in a binary bag.
struct SparseEncoding {
  std::vector<std::size_t> indices;
  std::size_t dimension = 0;

  std::size_t size() const noexcept { return indices.size(); }
  bool empty() const noexcept { return indices.empty(); }
  friend bool operator==(const SparseEncoding&, const SparseEncoding&) = default;
};

template <class Real>
double squared_norm(std::span<const Real> v) {
  double s = 0.0;
  for (Real x : v) s += double(x) * double(x);
  return s;
}

// Rescales `v` onto the unit ball when it lies outside.
template <class Real>
void project_to_unit_ball(std::span<Real> v) {
  const double n = std::sqrt(squared_norm(std::span<const Real>(v)));
  if (n > 1.0) {
    for (Real& x : v) x = static_cast<Real>(double(x) / n);
  }
}

// Entries drawn i.i.d. from N(0, (1/k)^2), then every row projected onto the
// unit ball.
template <class Real = float, class Rng>
BasicEmbeddingModel<Real> init_model(std::size_t n_v, std::size_t n_e, std::size_t k, Rng& rng) {
  if (n_v == 0 || n_e == 0 || k == 0) throw Error("model dimensions must all be positive");
  BasicEmbeddingModel<Real> model{Matrix<Real>(n_v, k), Matrix<Real>(n_e, k)};
  std::normal_distribution<double> normal(0.0, 1.0 / double(k));
  for (auto* m : {&model.words, &model.symbols}) {
    for (Real& x : m->data()) x = static_cast<Real>(normal(rng));
    for (std::size_t r = 0; r < m->rows(); ++r) project_to_unit_ball(m->row(r));
  }
  return model;
}

// Binary bag of in-vocabulary words. Out-of-vocabulary tokens are skipped and
// tallied in `oov_dropped` when given.
inline SparseEncoding encode_question(const Tokens& question, const Vocabulary& vocab,
                                      std::size_t* oov_dropped = nullptr) {
  SparseEncoding enc{{}, vocab.size()};
  enc.indices.reserve(question.size());
  for (const auto& w : question) {
    if (auto i = vocab.find(w)) {
      enc.indices.push_back(*i);
    } else if (oov_dropped) {
      ++*oov_dropped;
    }
  }
  std::sort(enc.indices.begin(), enc.indices.end());
  enc.indices.erase(std::unique(enc.indices.begin(), enc.indices.end()), enc.indices.end());
  return enc;
}

// {left-role slot of left, relationship slot, right-role slot of right}.
inline SparseEncoding encode_triple(const Triple& t, const KnowledgeBase& kb) {
  SparseEncoding enc{{kb.left_slot(t.left), kb.right_slot(t.right), kb.relationship_slot(t.rel)},
                     kb.embedding_slots()};
  std::sort(enc.indices.begin(), enc.indices.end());
  return enc;
}

// Sum of the selected rows, accumulated in double.
template <class Real>
std::vector<double> sum_rows(const Matrix<Real>& m, const SparseEncoding& enc) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t i : enc.indices) {
    const auto r = m.row(i);
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += double(r[c]);
  }
  return out;
}

// f(q) = V^T Phi(q)
template <class Real>
std::vector<double> question_embedding(const BasicEmbeddingModel<Real>& model,
                                       const SparseEncoding& q) {
  return sum_rows(model.words, q);
}

// g(t) = W^T Psi(t)
template <class Real>
std::vector<double> triple_embedding(const BasicEmbeddingModel<Real>& model,
                                     const SparseEncoding& t) {
  return sum_rows(model.symbols, t);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

template <class Real>
double score(const BasicEmbeddingModel<Real>& model, const SparseEncoding& q,
             const SparseEncoding& t) {
  return dot(question_embedding(model, q), triple_embedding(model, t));
}

template <class Real>
double score_paraphrase(const BasicEmbeddingModel<Real>& model, const SparseEncoding& q1,
                        const SparseEncoding& q2) {
  return dot(question_embedding(model, q1), question_embedding(model, q2));
}

// f^T M g for already-projected f and g.
template <class Real>
double bilinear(std::span<const double> f, const Matrix<Real>& m, std::span<const double> g) {
  if (m.rows() != f.size() || m.cols() != g.size()) {
    throw Error("similarity matrix is " + std::to_string(m.rows()) + "x" +
                std::to_string(m.cols()) + ", embeddings have dimension " +
                std::to_string(f.size()));
  }
  double s = 0.0;
  for (std::size_t a = 0; a < f.size(); ++a) {
    if (f[a] == 0.0) continue;
    double row = 0.0;
    for (std::size_t b = 0; b < g.size(); ++b) row += double(m(a, b)) * g[b];
    s += f[a] * row;
  }
  return s;
}

template <class Real>
double score_finetuned(const BasicEmbeddingModel<Real>& model, const SparseEncoding& q,
                       const SparseEncoding& t, const SimilarityMatrix& sim) {
  return bilinear(question_embedding(model, q), sim.m, triple_embedding(model, t));
}

struct Neighbor {
  std::size_t slot = 0;
  std::string label;
  double similarity = 0.0;
};

// "L:x.e" / "R:x.e" / "r.r" label for every embedding slot.
inline std::vector<std::string> slot_labels(const KnowledgeBase& kb) {
  std::vector<std::string> labels(kb.embedding_slots());
  for (std::size_t j = 0; j < labels.size(); ++j) labels[j] = kb.slot_label(j);
  return labels;
}

// Symbol slots ranked by v_word . w_slot, descending; ties keep slot order.
template <class Real>
std::vector<Neighbor> nearest_symbols(const std::string& word, const BasicEmbeddingModel<Real>& model,
                                      const Vocabulary& vocab,
                                      const std::vector<std::string>& labels, std::size_t topn) {
  const auto w = vocab.find(word);
  if (!w) throw Error("word '" + word + "' is not in the vocabulary");
  if (labels.size() != model.slot_count()) throw Error("slot label count does not match the model");
  const auto v = model.words.row(*w);
  std::vector<Neighbor> all(model.slot_count());
  for (std::size_t j = 0; j < all.size(); ++j) {
    const auto row = model.symbols.row(j);
    double s = 0.0;
    for (std::size_t c = 0; c < v.size(); ++c) s += double(v[c]) * double(row[c]);
    all[j].slot = j;
    all[j].similarity = s;
  }
  std::stable_sort(all.begin(), all.end(),
                   [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; });
  all.resize(std::min(topn, all.size()));
  for (auto& n : all) n.label = labels[n.slot];
  return all;
}

template <class Real>
std::vector<Neighbor> nearest_symbols(const std::string& word, const BasicEmbeddingModel<Real>& model,
                                      const Vocabulary& vocab, const KnowledgeBase& kb,
                                      std::size_t topn) {
  return nearest_symbols(word, model, vocab, slot_labels(kb), topn);
}

}  // namespace qaemb
