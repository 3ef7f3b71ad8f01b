#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <istream>
#include <string>
#include <unordered_map>
#include <vector>

#include "qaemb/datagen.hpp"
#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/model.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

enum class Provenance { kFullKb, kFiltered, kProvided };
enum class Scorer { kPlain, kFinetuned };

struct CandidateSet {
  Tokens question;
  std::vector<std::size_t> triples;  // KB triple indices, no duplicates
  Provenance provenance = Provenance::kProvided;
};

struct ScoredTriple {
  std::size_t triple = 0;
  double score = 0.0;
  friend bool operator==(const ScoredTriple&, const ScoredTriple&) = default;
};

struct RankedAnswerList {
  Tokens question;
  std::vector<ScoredTriple> entries;  // score descending, then triple index ascending
  Scorer scorer = Scorer::kPlain;
};

inline bool ranks_before(const ScoredTriple& a, const ScoredTriple& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.triple < b.triple;
}

// Candidate triples from a caller-supplied pool; repeated indices are dropped.
inline CandidateSet provided_candidates(Tokens question, std::vector<std::size_t> triples,
                                        const KnowledgeBase& kb) {
  std::vector<std::size_t> unique;
  std::vector<bool> seen(kb.size(), false);
  for (std::size_t t : triples) {
    if (t >= kb.size()) throw Error("candidate triple index " + std::to_string(t) + " out of range");
    if (!seen[t]) {
      seen[t] = true;
      unique.push_back(t);
    }
  }
  return {std::move(question), std::move(unique), Provenance::kProvided};
}

inline CandidateSet all_candidates(Tokens question, const KnowledgeBase& kb) {
  std::vector<std::size_t> all(kb.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return {std::move(question), std::move(all), Provenance::kFullKb};
}

// Scores every candidate with S (no `sim`) or S_ft (with `sim`) and sorts.
inline RankedAnswerList rank(const CandidateSet& candidates, const EmbeddingModel& model,
                             const Vocabulary& vocab, const KnowledgeBase& kb,
                             const SimilarityMatrix* sim = nullptr) {
  RankedAnswerList out{candidates.question, {}, sim ? Scorer::kFinetuned : Scorer::kPlain};
  if (candidates.triples.empty()) return out;
  std::vector<double> f = question_embedding(model, encode_question(candidates.question, vocab));
  if (sim) {
    const std::size_t k = model.dim();
    if (sim->m.rows() != k || sim->m.cols() != k) throw Error("similarity matrix must be k x k");
    std::vector<double> u(k, 0.0);  // u = M^T f
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = 0; b < k; ++b) u[b] += f[a] * double(sim->m(a, b));
    }
    f.swap(u);
  }
  out.entries.reserve(candidates.triples.size());
  for (std::size_t t : candidates.triples) {
    const auto g = triple_embedding(model, encode_triple(kb.triple(t), kb));
    out.entries.push_back({t, dot(f, g)});
  }
  std::sort(out.entries.begin(), out.entries.end(), ranks_before);
  return out;
}

inline RankedAnswerList full_ranking(const Tokens& question, const EmbeddingModel& model,
                                     const Vocabulary& vocab, const KnowledgeBase& kb,
                                     const SimilarityMatrix* sim = nullptr) {
  return rank(all_candidates(question, kb), model, vocab, kb, sim);
}

inline constexpr std::size_t kDefaultFrequencyThreshold = 1000;

struct StringMatch {
  std::size_t begin = 0;  // token span [begin, end)
  std::size_t end = 0;
  std::string surface;    // KB lexicon form
  std::size_t frequency = 0;
};

// Every question n-gram whose text, or its singular form (one trailing "s"
// stripped), is the rendered name of a KB symbol.
inline std::vector<StringMatch> lexicon_matches(const Tokens& question, const KnowledgeBase& kb) {
  std::vector<StringMatch> out;
  const std::size_t longest = std::max<std::size_t>(kb.max_name_tokens(), 1);
  for (std::size_t b = 0; b < question.size(); ++b) {
    std::string key;
    for (std::size_t e = b + 1; e <= question.size() && e - b <= longest; ++e) {
      if (e > b + 1) key += ' ';
      key += question[e - 1];
      if (kb.contains_string(key)) out.push_back({b, e, key, kb.string_frequency(key)});
      if (key.size() > 1 && key.back() == 's') {
        std::string singular = key.substr(0, key.size() - 1);
        if (kb.contains_string(singular)) {
          out.push_back({b, e, singular, kb.string_frequency(singular)});
        }
      }
    }
  }
  return out;
}

namespace detail {

inline std::vector<const StringMatch*> maximal(const std::vector<const StringMatch*>& ms) {
  std::vector<const StringMatch*> out;
  for (const auto* m : ms) {
    bool contained = false;
    for (const auto* o : ms) {
      if (o->begin <= m->begin && m->end <= o->end && (o->end - o->begin) > (m->end - m->begin)) {
        contained = true;
        break;
      }
    }
    if (!contained) out.push_back(m);
  }
  return out;
}

}  // namespace detail

// Rare-string selection standing in for noun-phrase chunking: maximal lexicon
// matches rarer than `threshold`; failing that, rare contained matches;
// failing that, the single least frequent match. Output follows question order.
inline std::vector<std::string> extract_candidate_strings(
    const Tokens& question, const KnowledgeBase& kb,
    std::size_t threshold = kDefaultFrequencyThreshold) {
  const auto matches = lexicon_matches(question, kb);
  std::vector<const StringMatch*> all, rare;
  for (const auto& m : matches) {
    all.push_back(&m);
    if (m.frequency < threshold) rare.push_back(&m);
  }
  std::vector<const StringMatch*> chosen;
  for (const auto* m : detail::maximal(all)) {
    if (m->frequency < threshold) chosen.push_back(m);
  }
  if (chosen.empty()) chosen = detail::maximal(rare);
  if (chosen.empty() && !all.empty()) {
    const StringMatch* best = all.front();
    for (const auto* m : all) {
      if (m->frequency < best->frequency) best = m;
    }
    chosen.push_back(best);
  }
  std::stable_sort(chosen.begin(), chosen.end(),
                   [](const StringMatch* a, const StringMatch* b) { return a->begin < b->begin; });
  std::vector<std::string> out;
  for (const auto* m : chosen) {
    if (std::find(out.begin(), out.end(), m->surface) == out.end()) out.push_back(m->surface);
  }
  return out;
}

// Triples holding at least one extracted candidate string, in index order.
inline CandidateSet filter_candidates(const Tokens& question, const KnowledgeBase& kb,
                                      std::size_t threshold = kDefaultFrequencyThreshold) {
  CandidateSet out{question, {}, Provenance::kFiltered};
  for (const auto& s : extract_candidate_strings(question, kb, threshold)) {
    const auto ts = kb.triples_containing_string(s);
    out.triples.insert(out.triples.end(), ts.begin(), ts.end());
  }
  std::sort(out.triples.begin(), out.triples.end());
  out.triples.erase(std::unique(out.triples.begin(), out.triples.end()), out.triples.end());
  return out;
}

struct AnswerOptions {
  bool use_filter = true;
  std::size_t topn = 1;
  std::size_t frequency_threshold = kDefaultFrequencyThreshold;
};

inline RankedAnswerList answer(const Tokens& question, const KnowledgeBase& kb,
                               const EmbeddingModel& model, const Vocabulary& vocab,
                               const SimilarityMatrix* sim, const AnswerOptions& opt) {
  const CandidateSet candidates = opt.use_filter
                                      ? filter_candidates(question, kb, opt.frequency_threshold)
                                      : all_candidates(question, kb);
  RankedAnswerList out = rank(candidates, model, vocab, kb, sim);
  if (out.entries.size() > opt.topn) out.entries.resize(opt.topn);
  return out;
}

// One question of a labeled candidate file.
struct CandidatePool {
  std::string text;  // question as written in the file
  Tokens question;
  std::vector<Triple> triples;
  std::vector<int> labels;  // -1 when the file has no label column
};

// question<TAB>left<TAB>rel<TAB>right[<TAB>label]; lines sharing a question
// form one pool, pools keep first-appearance order.
inline std::vector<CandidatePool> parse_candidates(std::istream& in, const KnowledgeBase& kb,
                                                   const std::string& source) {
  std::vector<CandidatePool> pools;
  std::unordered_map<std::string, std::size_t> by_text;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_tabs(strip_cr(line));
    if (fields.size() != 4 && fields.size() != 5) {
      throw ParseError(source, lineno,
                       "expected 4 or 5 TAB-separated fields, got " + std::to_string(fields.size()));
    }
    Triple t;
    SymbolId* slots[] = {&t.left, &t.rel, &t.right};
    const SymbolKind kinds[] = {SymbolKind::kEntity, SymbolKind::kRelationship, SymbolKind::kEntity};
    for (int f = 0; f < 3; ++f) {
      auto id = kb.find_symbol(fields[f + 1]);
      if (!id || kb.kind(*id) != kinds[f]) {
        throw ParseError(source, lineno, "unknown or misplaced symbol '" + std::string(fields[f + 1]) + "'");
      }
      *slots[f] = *id;
    }
    int label = -1;
    if (fields.size() == 5) {
      if (fields[4] == "0") {
        label = 0;
      } else if (fields[4] == "1") {
        label = 1;
      } else {
        throw ParseError(source, lineno, "label must be 0 or 1");
      }
    }
    std::string text(fields[0]);
    auto [it, inserted] = by_text.try_emplace(text, pools.size());
    if (inserted) {
      pools.push_back({text, tokenize(text), {}, {}});
      if (pools.back().question.empty()) throw ParseError(source, lineno, "empty question");
    }
    pools[it->second].triples.push_back(t);
    pools[it->second].labels.push_back(label);
  }
  return pools;
}

inline std::vector<CandidatePool> load_candidates(const std::string& path, const KnowledgeBase& kb) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_candidates(in, kb, path);
}

// KB indices per distinct triple value; duplicates in the KB share one entry.
class TripleLookup {
 public:
  explicit TripleLookup(const KnowledgeBase& kb) {
    for (std::size_t i = 0; i < kb.size(); ++i) index_[key(kb.triple(i))].push_back(i);
  }

  const std::vector<std::size_t>& find(const Triple& t) const {
    static const std::vector<std::size_t> none;
    auto it = index_.find(key(t));
    return it == index_.end() ? none : it->second;
  }

 private:
  static std::string key(const Triple& t) {
    return std::to_string(t.left.index) + ":" + std::to_string(t.rel.index) + ":" +
           std::to_string(t.right.index);
  }
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
};

}  // namespace qaemb
