#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "qaemb/ranker.hpp"

using namespace qaemb;

namespace {

std::string data(const std::string& name) { return std::string(QAEMB_DATA_DIR) + "/" + name; }

struct Fixture {
  KnowledgeBase kb = load_triples(data("kb.tsv"));
  Vocabulary vocab;
  EmbeddingModel model;

  explicit Fixture(unsigned seed = 1) {
    for (const auto& q : generate_dataset(kb, 1, 200)) {
      for (const auto& w : q.question) vocab.add(w);
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    model = EmbeddingModel{Matrix<float>(vocab.size(), 5), Matrix<float>(kb.embedding_slots(), 5)};
    for (float& x : model.words.data()) x = u(rng);
    for (float& x : model.symbols.data()) x = u(rng);
  }

  double brute_score(const Tokens& q, std::size_t t) const {
    std::set<std::size_t> words;
    for (const auto& w : q) {
      if (auto i = vocab.find(w)) words.insert(*i);
    }
    const Triple& tr = kb.triple(t);
    const std::size_t slots[] = {kb.left_slot(tr.left), kb.relationship_slot(tr.rel), kb.right_slot(tr.right)};
    double s = 0.0;
    for (std::size_t i : words) {
      for (std::size_t j : slots) {
        for (std::size_t c = 0; c < model.dim(); ++c) s += double(model.words(i, c)) * double(model.symbols(j, c));
      }
    }
    return s;
  }
};

std::vector<std::size_t> order(const RankedAnswerList& r) {
  std::vector<std::size_t> out;
  for (const auto& e : r.entries) out.push_back(e.triple);
  return out;
}

}  // namespace

TEST(Rank, MatchesBruteForceSort) {
  const Fixture fx;
  const Tokens q = tokenize("where did churchill die ?");
  const auto ranked = full_ranking(q, fx.model, fx.vocab, fx.kb);
  ASSERT_EQ(ranked.entries.size(), fx.kb.size());
  std::vector<std::pair<double, std::size_t>> brute;
  for (std::size_t t = 0; t < fx.kb.size(); ++t) brute.push_back({-fx.brute_score(q, t), t});
  std::sort(brute.begin(), brute.end());
  for (std::size_t i = 0; i < brute.size(); ++i) {
    EXPECT_EQ(ranked.entries[i].triple, brute[i].second);
    EXPECT_NEAR(ranked.entries[i].score, -brute[i].first, 1e-9);
  }
  // Top-1 is the argmax.
  std::size_t best = 0;
  for (std::size_t t = 1; t < fx.kb.size(); ++t) {
    if (fx.brute_score(q, t) > fx.brute_score(q, best)) best = t;
  }
  EXPECT_EQ(ranked.entries.front().triple, best);
  EXPECT_EQ(ranked.scorer, Scorer::kPlain);
}

TEST(Rank, EmptyAndSingleCandidate) {
  const Fixture fx;
  const Tokens q = tokenize("who ?");
  EXPECT_TRUE(rank(provided_candidates(q, {}, fx.kb), fx.model, fx.vocab, fx.kb).entries.empty());
  EXPECT_EQ(rank(provided_candidates(q, {4}, fx.kb), fx.model, fx.vocab, fx.kb).entries.size(), 1u);
}

TEST(Rank, IdentitySimilarityKeepsOrder) {
  const Fixture fx;
  const Tokens q = tokenize("what is laser use for ?");
  SimilarityMatrix id{Matrix<float>::identity(5), 0.0};
  const auto plain = full_ranking(q, fx.model, fx.vocab, fx.kb);
  const auto ft = full_ranking(q, fx.model, fx.vocab, fx.kb, &id);
  EXPECT_EQ(order(plain), order(ft));
  EXPECT_EQ(ft.scorer, Scorer::kFinetuned);
  SimilarityMatrix bad{Matrix<float>::identity(4), 0.0};
  EXPECT_THROW(full_ranking(q, fx.model, fx.vocab, fx.kb, &bad), Error);
}

TEST(Rank, SimilarityScoresAreBilinear) {
  const Fixture fx;
  SimilarityMatrix sim{Matrix<float>(5, 5), 0.0};
  std::mt19937 rng(4);
  std::normal_distribution<float> n;
  for (float& x : sim.m.data()) x = n(rng);
  const Tokens q = tokenize("who be for hannukah ?");
  const auto ranked = full_ranking(q, fx.model, fx.vocab, fx.kb, &sim);
  const auto qe = encode_question(q, fx.vocab);
  for (const auto& e : ranked.entries) {
    EXPECT_NEAR(e.score, score_finetuned(fx.model, qe, encode_triple(fx.kb.triple(e.triple), fx.kb), sim), 1e-5);
  }
}

TEST(Rank, AddingACandidateKeepsRelativeOrder) {
  const Fixture fx;
  const Tokens q = tokenize("where did churchill die ?");
  const auto small = rank(provided_candidates(q, {0, 3, 5, 9}, fx.kb), fx.model, fx.vocab, fx.kb);
  const auto large = rank(provided_candidates(q, {0, 3, 5, 9, 12}, fx.kb), fx.model, fx.vocab, fx.kb);
  auto without = order(large);
  without.erase(std::find(without.begin(), without.end(), 12u));
  EXPECT_EQ(order(small), without);
}

TEST(Rank, ScalingVKeepsOrder) {
  Fixture fx;
  const Tokens q = tokenize("what is the use of laser ?");
  const auto before = full_ranking(q, fx.model, fx.vocab, fx.kb);
  for (float& x : fx.model.words.data()) x *= 3.0f;
  EXPECT_EQ(order(full_ranking(q, fx.model, fx.vocab, fx.kb)), order(before));
}

TEST(Rank, TiesBreakByIndex) {
  Fixture fx;
  std::fill(fx.model.symbols.data().begin(), fx.model.symbols.data().end(), 0.0f);
  const auto ranked = full_ranking(tokenize("who ?"), fx.model, fx.vocab, fx.kb);
  for (std::size_t i = 0; i < ranked.entries.size(); ++i) EXPECT_EQ(ranked.entries[i].triple, i);
}

TEST(Rank, Deterministic) {
  const Fixture fx;
  const Tokens q = tokenize("where did churchill die ?");
  EXPECT_EQ(full_ranking(q, fx.model, fx.vocab, fx.kb).entries,
            full_ranking(q, fx.model, fx.vocab, fx.kb).entries);
}

TEST(ProvidedCandidates, DropsRepeatsAndChecksRange) {
  const Fixture fx;
  const auto c = provided_candidates({"x"}, {3, 1, 3}, fx.kb);
  EXPECT_EQ(c.triples, (std::vector<std::size_t>{3, 1}));
  EXPECT_EQ(c.provenance, Provenance::kProvided);
  EXPECT_THROW(provided_candidates({"x"}, {fx.kb.size()}, fx.kb), Error);
}

TEST(CandidateStrings, ChurchillQuestion) {
  const auto kb = load_triples(data("churchill.tsv"));
  EXPECT_EQ(extract_candidate_strings(tokenize("where did churchill die ?"), kb),
            (std::vector<std::string>{"churchill"}));
  EXPECT_EQ(extract_candidate_strings(tokenize("where did winston churchill die ?"), kb),
            (std::vector<std::string>{"winston churchill"}));
  EXPECT_TRUE(extract_candidate_strings(tokenize("how tall is the tower ?"), kb).empty());
}

TEST(CandidateStrings, Singularization) {
  const auto kb = load_triples(data("kb.tsv"));
  EXPECT_EQ(extract_candidate_strings(tokenize("what are lasers used for ?"), kb),
            (std::vector<std::string>{"laser"}));
}

TEST(CandidateStrings, FrequentStringsFallBack) {
  // "churchill" occurs 7 times; with threshold 5 it is not rare, and no
  // other string matches, so the least frequent match is kept.
  const auto kb = load_triples(data("churchill.tsv"));
  EXPECT_EQ(extract_candidate_strings(tokenize("where did churchill die ?"), kb, 5),
            (std::vector<std::string>{"churchill"}));
  // "winston churchill" is frequent at threshold 2 (2 occurrences) while the
  // contained "churchill" is not rare either; "depression" (1) is.
  EXPECT_EQ(extract_candidate_strings(tokenize("did winston churchill suffer depression ?"), kb, 2),
            (std::vector<std::string>{"depression"}));
}

TEST(FilterCandidates, SoundAndSmall) {
  const auto kb = load_triples(data("kb.tsv"));
  for (const char* text : {"where did churchill die ?", "what are lasers used for ?",
                           "where does the dodo live ?", "what be for hannukah ?"}) {
    const Tokens q = tokenize(text);
    const auto strings = extract_candidate_strings(q, kb);
    const auto c = filter_candidates(q, kb);
    EXPECT_EQ(c.provenance, Provenance::kFiltered);
    EXPECT_FALSE(c.triples.empty()) << text;
    EXPECT_LT(c.triples.size(), kb.size()) << text;
    EXPECT_TRUE(std::is_sorted(c.triples.begin(), c.triples.end()));
    for (std::size_t t : c.triples) {
      const Triple& tr = kb.triple(t);
      bool holds = false;
      for (const auto& s : strings) {
        for (SymbolId id : {tr.left, tr.rel, tr.right}) holds |= kb.render_name(id) == s;
      }
      EXPECT_TRUE(holds) << text << " " << t;
    }
    // Every triple holding a string is in.
    for (std::size_t t = 0; t < kb.size(); ++t) {
      const Triple& tr = kb.triple(t);
      bool holds = false;
      for (const auto& s : strings) {
        for (SymbolId id : {tr.left, tr.rel, tr.right}) holds |= kb.render_name(id) == s;
      }
      EXPECT_EQ(holds, std::binary_search(c.triples.begin(), c.triples.end(), t));
    }
  }
  EXPECT_TRUE(filter_candidates(tokenize("how tall is it ?"), kb).triples.empty());
}

TEST(Answer, TopnAndFilter) {
  const Fixture fx;
  const Tokens q = tokenize("where did churchill die ?");
  AnswerOptions opt;
  opt.topn = 1;
  const auto one = answer(q, fx.kb, fx.model, fx.vocab, nullptr, opt);
  ASSERT_EQ(one.entries.size(), 1u);
  const auto filtered = rank(filter_candidates(q, fx.kb), fx.model, fx.vocab, fx.kb);
  EXPECT_EQ(one.entries.front(), filtered.entries.front());

  opt.topn = 100;
  const auto all_filtered = answer(q, fx.kb, fx.model, fx.vocab, nullptr, opt);
  EXPECT_EQ(all_filtered.entries, filtered.entries);
  opt.use_filter = false;
  const auto unfiltered = answer(q, fx.kb, fx.model, fx.vocab, nullptr, opt);
  EXPECT_EQ(unfiltered.entries.size(), fx.kb.size());
  // The filtered list is the full ranking restricted to the filtered set.
  const auto allowed = filter_candidates(q, fx.kb).triples;
  std::vector<std::size_t> restricted;
  for (const auto& e : unfiltered.entries) {
    if (std::binary_search(allowed.begin(), allowed.end(), e.triple)) restricted.push_back(e.triple);
  }
  EXPECT_EQ(restricted, order(filtered));

  const auto abstain = answer(tokenize("how tall is it ?"), fx.kb, fx.model, fx.vocab, nullptr, AnswerOptions{});
  EXPECT_TRUE(abstain.entries.empty());
}

TEST(Candidates, ParsePools) {
  const auto kb = load_triples(data("kb.tsv"));
  const auto pools = load_candidates(data("candidates.tsv"), kb);
  ASSERT_EQ(pools.size(), 3u);
  EXPECT_EQ(pools[0].text, "where did churchill die ?");
  EXPECT_EQ(pools[0].triples.size(), 3u);
  EXPECT_EQ(pools[0].labels, (std::vector<int>{1, 0, 0}));
  EXPECT_EQ(pools[1].triples.size(), 2u);
  EXPECT_EQ(pools[2].labels, (std::vector<int>{1, 0}));

  std::istringstream unlabeled("q ?\tdodo.e\tlive-in.r\tmakassar.e\n");
  EXPECT_EQ(parse_candidates(unlabeled, kb, "x")[0].labels, (std::vector<int>{-1}));

  std::istringstream bad_label("q ?\tdodo.e\tlive-in.r\tmakassar.e\t2\n");
  EXPECT_THROW(parse_candidates(bad_label, kb, "x"), ParseError);
  std::istringstream unknown("q ?\tdodo.e\tlive-in.r\tnowhere.e\t1\n");
  EXPECT_THROW(parse_candidates(unknown, kb, "x"), ParseError);
  std::istringstream misplaced("ok ?\tdodo.e\tlive-in.r\tmakassar.e\nq ?\tlive-in.r\tdodo.e\tmakassar.e\n");
  try {
    parse_candidates(misplaced, kb, "x");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(TripleLookup, FindsEveryCopy) {
  std::istringstream in("a.e\tr.r\tb.e\nc.e\tr.r\tb.e\na.e\tr.r\tb.e\n");
  const auto kb = parse_triples(in, "inline");
  const TripleLookup lookup(kb);
  EXPECT_EQ(lookup.find(kb.triple(0)), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(lookup.find(kb.triple(1)), (std::vector<std::size_t>{1}));
  EXPECT_TRUE(lookup.find({kb.triple(1).left, kb.triple(0).rel, kb.triple(1).left}).empty());
}
