#pragma once

#include <array>
#include <initializer_list>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

// Which member of the triple the question asks for.
enum class QuestionedSlot : std::uint8_t { kLeft, kRight };

enum class RelationConstraint : std::uint8_t { kNone, kEndsWithIn, kEndsWithOn };

struct QuestionPattern {
  int id = 0;  // 1..16
  QuestionedSlot slot = QuestionedSlot::kLeft;
  RelationConstraint constraint = RelationConstraint::kNone;
  // Template tokens; "e" and "r" are the holes.
  std::array<std::string_view, 8> words{};
  std::size_t length = 0;

  std::span<const std::string_view> tokens() const { return {words.data(), length}; }
};

namespace detail {

constexpr QuestionPattern make_pattern(int id, QuestionedSlot slot, RelationConstraint c,
                                       std::initializer_list<std::string_view> words) {
  QuestionPattern p;
  p.id = id;
  p.slot = slot;
  p.constraint = c;
  for (auto w : words) p.words[p.length++] = w;
  return p;
}

}  // namespace detail

// The 16 seed question patterns, in their canonical order.
inline const std::array<QuestionPattern, 16>& question_patterns() {
  using detail::make_pattern;
  constexpr auto L = QuestionedSlot::kLeft;   // (?, r, e)
  constexpr auto R = QuestionedSlot::kRight;  // (e, r, ?)
  constexpr auto N = RelationConstraint::kNone;
  constexpr auto IN = RelationConstraint::kEndsWithIn;
  constexpr auto ON = RelationConstraint::kEndsWithOn;
  static const std::array<QuestionPattern, 16> patterns = {
      make_pattern(1, L, N, {"who", "r", "e", "?"}),
      make_pattern(2, L, N, {"what", "r", "e", "?"}),
      make_pattern(3, R, N, {"who", "does", "e", "r", "?"}),
      make_pattern(4, R, N, {"what", "does", "e", "r", "?"}),
      make_pattern(5, L, N, {"what", "is", "the", "r", "of", "e", "?"}),
      make_pattern(6, L, N, {"who", "is", "the", "r", "of", "e", "?"}),
      make_pattern(7, R, N, {"what", "is", "r", "by", "e", "?"}),
      make_pattern(8, L, N, {"who", "is", "e", "'s", "r", "?"}),
      make_pattern(9, L, N, {"what", "is", "e", "'s", "r", "?"}),
      make_pattern(10, R, N, {"who", "is", "r", "by", "e", "?"}),
      make_pattern(11, R, IN, {"when", "did", "e", "r", "?"}),
      make_pattern(12, R, ON, {"when", "did", "e", "r", "?"}),
      make_pattern(13, R, IN, {"when", "was", "e", "r", "?"}),
      make_pattern(14, R, ON, {"when", "was", "e", "r", "?"}),
      make_pattern(15, R, IN, {"where", "was", "e", "r", "?"}),
      make_pattern(16, R, IN, {"where", "did", "e", "r", "?"}),
  };
  return patterns;
}

inline std::string describe(const QuestionPattern& p) {
  std::string triple = p.slot == QuestionedSlot::kLeft ? "(?, r, e)" : "(e, r, ?)";
  if (p.constraint == RelationConstraint::kEndsWithIn) triple = "(e, r-in, ?)";
  if (p.constraint == RelationConstraint::kEndsWithOn) triple = "(e, r-on, ?)";
  std::string text;
  for (auto w : p.tokens()) {
    if (!text.empty()) text += ' ';
    text += w;
  }
  return std::to_string(p.id) + "\t" + triple + "\t" + text;
}

struct QAPair {
  Tokens question;
  Triple answer;
  int pattern_id = 0;  // 0 when read back from a file
};

struct ParaphrasePair {
  Tokens q1;
  Tokens q2;
};

inline bool pattern_applies(const QuestionPattern& p, const Triple& t, const KnowledgeBase& kb) {
  switch (p.constraint) {
    case RelationConstraint::kNone:
      return true;
    case RelationConstraint::kEndsWithIn:
      return ends_with(kb.symbol_name(t.rel), "-in.r");
    case RelationConstraint::kEndsWithOn:
      return ends_with(kb.symbol_name(t.rel), "-on.r");
  }
  return false;
}

inline std::vector<const QuestionPattern*> applicable_patterns(const Triple& t,
                                                                const KnowledgeBase& kb) {
  std::vector<const QuestionPattern*> out;
  for (const auto& p : question_patterns()) {
    if (pattern_applies(p, t, kb)) out.push_back(&p);
  }
  return out;
}

// Fills the pattern holes with rendered names. Constrained patterns drop the
// trailing "in"/"on" particle of the relation, so die-in.r reads "die".
inline QAPair generate_question(const Triple& t, const QuestionPattern& p,
                                const KnowledgeBase& kb) {
  if (!pattern_applies(p, t, kb)) {
    throw Error("pattern " + std::to_string(p.id) + " does not apply to relation " +
                kb.symbol_name(t.rel));
  }
  const SymbolId entity = p.slot == QuestionedSlot::kLeft ? t.right : t.left;
  const Tokens entity_words = tokenize(kb.render_name(entity));
  Tokens rel_words = tokenize(kb.render_name(t.rel));
  if (p.constraint != RelationConstraint::kNone && !rel_words.empty()) rel_words.pop_back();

  QAPair pair{{}, t, p.id};
  for (auto w : p.tokens()) {
    if (w == "e") {
      pair.question.insert(pair.question.end(), entity_words.begin(), entity_words.end());
    } else if (w == "r") {
      pair.question.insert(pair.question.end(), rel_words.begin(), rel_words.end());
    } else {
      pair.question.emplace_back(w);
    }
  }
  return pair;
}

// The generated dataset as a pure function of (kb, seed, index): sample i
// picks a triple uniformly, then a pattern uniformly among the applicable ones.
class QuestionStream {
 public:
  QuestionStream(const KnowledgeBase& kb, std::uint64_t seed, std::size_t count,
                 bool allow_empty = false)
      : kb_(&kb), seed_(seed), count_(count) {
    if (kb.size() == 0) throw Error("cannot generate questions from an empty KB");
    if (count == 0 && !allow_empty) throw Error("question count must be at least 1");
  }

  std::size_t size() const noexcept { return count_; }

  QAPair operator[](std::size_t i) const {
    std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                      static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick_triple(0, kb_->size() - 1);
    const Triple& t = kb_->triple(pick_triple(rng));
    const auto patterns = applicable_patterns(t, *kb_);
    std::uniform_int_distribution<std::size_t> pick_pattern(0, patterns.size() - 1);
    return generate_question(t, *patterns[pick_pattern(rng)], *kb_);
  }

  std::vector<QAPair> materialize() const {
    std::vector<QAPair> out;
    out.reserve(count_);
    for (std::size_t i = 0; i < count_; ++i) out.push_back((*this)[i]);
    return out;
  }

 private:
  const KnowledgeBase* kb_;
  std::uint64_t seed_;
  std::size_t count_;
};

inline std::size_t default_question_count(const KnowledgeBase& kb) { return 16 * kb.size(); }

inline std::vector<QAPair> generate_dataset(const KnowledgeBase& kb, std::uint64_t seed,
                                            std::size_t count) {
  return QuestionStream(kb, seed, count).materialize();
}

inline std::vector<ParaphrasePair> parse_paraphrases(std::istream& in, const std::string& source) {
  std::vector<ParaphrasePair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_tabs(strip_cr(line));
    if (fields.size() != 2) {
      throw ParseError(source, lineno,
                       "expected 2 TAB-separated fields, got " + std::to_string(fields.size()));
    }
    ParaphrasePair pair{tokenize(fields[0]), tokenize(fields[1])};
    if (pair.q1.empty() || pair.q2.empty()) throw ParseError(source, lineno, "empty question");
    out.push_back(std::move(pair));
  }
  return out;
}

inline std::vector<ParaphrasePair> load_paraphrases(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_paraphrases(in, path);
}

class Vocabulary {
 public:
  // Returns the index of `word`, inserting it when new.
  std::size_t add(const std::string& word) {
    auto [it, inserted] = index_.try_emplace(word, words_.size());
    if (inserted) words_.push_back(word);
    return it->second;
  }

  std::optional<std::size_t> find(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& word(std::size_t i) const { return words_.at(i); }
  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> words_;
};

// Dense first-appearance indexing over every token of D, then P.
template <class QuestionSource>
Vocabulary build_vocabulary(const QuestionSource& dataset, const std::vector<ParaphrasePair>& paraphrases) {
  Vocabulary vocab;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    for (const auto& w : dataset[i].question) vocab.add(w);
  }
  for (const auto& p : paraphrases) {
    for (const auto& w : p.q1) vocab.add(w);
    for (const auto& w : p.q2) vocab.add(w);
  }
  if (vocab.size() == 0) throw Error("cannot build a vocabulary from empty corpora");
  return vocab;
}

// qa.tsv: question<TAB>left<TAB>rel<TAB>right
inline void write_qa_tsv(std::ostream& out, const QAPair& pair, const KnowledgeBase& kb) {
  out << join(pair.question) << '\t' << kb.symbol_name(pair.answer.left) << '\t'
      << kb.symbol_name(pair.answer.rel) << '\t' << kb.symbol_name(pair.answer.right) << '\n';
}

inline std::vector<QAPair> parse_qa_tsv(std::istream& in, const KnowledgeBase& kb,
                                        const std::string& source) {
  std::vector<QAPair> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_tabs(strip_cr(line));
    if (fields.size() != 4) {
      throw ParseError(source, lineno,
                       "expected 4 TAB-separated fields, got " + std::to_string(fields.size()));
    }
    QAPair pair;
    pair.question = tokenize(fields[0]);
    if (pair.question.empty()) throw ParseError(source, lineno, "empty question");
    SymbolId* slots[] = {&pair.answer.left, &pair.answer.rel, &pair.answer.right};
    for (int f = 0; f < 3; ++f) {
      auto id = kb.find_symbol(fields[f + 1]);
      if (!id) throw ParseError(source, lineno, "unknown symbol '" + std::string(fields[f + 1]) + "'");
      *slots[f] = *id;
    }
    if (kb.kind(pair.answer.rel) != SymbolKind::kRelationship ||
        kb.kind(pair.answer.left) != SymbolKind::kEntity ||
        kb.kind(pair.answer.right) != SymbolKind::kEntity) {
      throw ParseError(source, lineno, "symbol kinds must read entity, relationship, entity");
    }
    out.push_back(std::move(pair));
  }
  return out;
}

inline std::vector<QAPair> load_qa_tsv(const std::string& path, const KnowledgeBase& kb) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_qa_tsv(in, kb, path);
}

}  // namespace qaemb
