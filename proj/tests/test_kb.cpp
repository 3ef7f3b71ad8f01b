#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qaemb/kb.hpp"
#include "qaemb/text.hpp"

using namespace qaemb;

namespace {

KnowledgeBase parse(const std::string& text) {
  std::istringstream in(text);
  return parse_triples(in, "inline");
}

std::string data(const std::string& name) { return std::string(QAEMB_DATA_DIR) + "/" + name; }

// Raw fields of a triple file, read without the library.
std::vector<std::vector<std::string>> raw_lines(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, '\t')) fields.push_back(f);
    out.push_back(fields);
  }
  return out;
}

}  // namespace

TEST(KnowledgeBase, SingleTripleCounts) {
  const auto kb = parse("churchill.e\tdie-in.r\twinter-park.e\n");
  EXPECT_EQ(kb.size(), 1u);
  EXPECT_EQ(kb.entity_count(), 2u);
  EXPECT_EQ(kb.relationship_count(), 1u);
  EXPECT_EQ(kb.embedding_slots(), 5u);
}

TEST(KnowledgeBase, DuplicateLinesStayDistinctTriples) {
  const auto kb = parse("churchill.e\tdie-in.r\twinter-park.e\nchurchill.e\tdie-in.r\twinter-park.e\n");
  EXPECT_EQ(kb.size(), 2u);
  EXPECT_EQ(kb.embedding_slots(), 5u);
  EXPECT_EQ(kb.freq(*kb.find_symbol("churchill.e")), 2u);
  const auto hits = kb.triples_containing_string("churchill");
  EXPECT_EQ(std::vector<std::size_t>(hits.begin(), hits.end()), (std::vector<std::size_t>{0, 1}));
}

TEST(KnowledgeBase, SharedEntityFrequency) {
  const auto kb = parse(
      "churchill.e\tdie-in.r\twinter-park.e\n"
      "crick.e\tprotest-to.r\tchurchill.e\n"
      "churchill.e\thave-only.r\tcompliment.e\n");
  EXPECT_EQ(kb.freq(*kb.find_symbol("churchill.e")), 3u);
  EXPECT_EQ(kb.freq(*kb.find_symbol("crick.e")), 1u);
}

TEST(KnowledgeBase, FrequenciesSumToThreePerTriple) {
  const auto kb = load_triples(data("kb.tsv"));
  std::size_t total = 0;
  for (std::uint32_t s = 0; s < kb.symbol_count(); ++s) total += kb.freq(SymbolId{s});
  EXPECT_EQ(total, 3 * kb.size());
}

TEST(KnowledgeBase, FrequencyMatchesRawCount) {
  const auto lines = raw_lines(data("kb.tsv"));
  std::map<std::string, std::size_t> counts;
  for (const auto& l : lines) {
    for (const auto& f : l) ++counts[f];
  }
  const auto kb = load_triples(data("kb.tsv"));
  ASSERT_EQ(kb.symbol_count(), counts.size());
  for (const auto& [name, n] : counts) EXPECT_EQ(kb.freq(*kb.find_symbol(name)), n) << name;
}

TEST(RenderName, Rules) {
  EXPECT_EQ(render_name("winston-churchill.e"), "winston churchill");
  EXPECT_EQ(render_name("be-prime-minister-of.r"), "be prime minister of");
  EXPECT_EQ(render_name("x.e"), "x");
}

TEST(KnowledgeBase, StringLookupMatchesScan) {
  const auto path = data("churchill.tsv");
  const auto kb = load_triples(path);
  const auto lines = raw_lines(path);
  std::vector<std::size_t> expected;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    for (const auto& f : lines[i]) {
      if (f == "churchill.e") {
        expected.push_back(i);
        break;
      }
    }
  }
  const auto got = kb.triples_containing_string("churchill");
  EXPECT_EQ(std::vector<std::size_t>(got.begin(), got.end()), expected);
  EXPECT_EQ(expected.size(), 7u);
}

TEST(KnowledgeBase, StringLookupIsExact) {
  const auto kb = load_triples(data("churchill.tsv"));
  const auto got = kb.triples_containing_string("winston churchill");
  for (std::size_t i : got) {
    const Triple& t = kb.triple(i);
    EXPECT_TRUE(kb.symbol_name(t.left) == "winston-churchill.e" ||
                kb.symbol_name(t.right) == "winston-churchill.e");
  }
  EXPECT_EQ(got.size(), 2u);
  EXPECT_TRUE(kb.triples_containing_string("winston").empty());
  EXPECT_TRUE(kb.triples_containing_string("nobody").empty());
  EXPECT_FALSE(kb.contains_string("nobody"));
  EXPECT_EQ(kb.string_frequency("nobody"), 0u);
}

TEST(KnowledgeBase, StringIndexRoundTrip) {
  const auto kb = load_triples(data("kb.tsv"));
  for (std::size_t i = 0; i < kb.size(); ++i) {
    const Triple& t = kb.triple(i);
    for (SymbolId s : {t.left, t.rel, t.right}) {
      const auto hits = kb.triples_containing_string(kb.render_name(s));
      EXPECT_TRUE(std::binary_search(hits.begin(), hits.end(), i));
    }
  }
}

TEST(KnowledgeBase, SymbolIdsFollowFirstAppearance) {
  const auto kb = parse("b.e\tr.r\ta.e\na.e\tq.r\tc.e\n");
  EXPECT_EQ(kb.find_symbol("b.e")->index, 0u);
  EXPECT_EQ(kb.find_symbol("r.r")->index, 1u);
  EXPECT_EQ(kb.find_symbol("a.e")->index, 2u);
  EXPECT_EQ(kb.find_symbol("q.r")->index, 3u);
  EXPECT_EQ(kb.find_symbol("c.e")->index, 4u);
  const auto again = parse("b.e\tr.r\ta.e\na.e\tq.r\tc.e\n");
  for (std::uint32_t s = 0; s < kb.symbol_count(); ++s) {
    EXPECT_EQ(kb.symbol_name(SymbolId{s}), again.symbol_name(SymbolId{s}));
  }
}

TEST(KnowledgeBase, SlotLayout) {
  const auto kb = parse("b.e\tr.r\ta.e\na.e\tq.r\tc.e\n");
  const auto b = *kb.find_symbol("b.e"), a = *kb.find_symbol("a.e"), c = *kb.find_symbol("c.e");
  const auto r = *kb.find_symbol("r.r"), q = *kb.find_symbol("q.r");
  EXPECT_EQ(kb.left_slot(b), 0u);
  EXPECT_EQ(kb.right_slot(b), 1u);
  EXPECT_EQ(kb.left_slot(a), 2u);
  EXPECT_EQ(kb.right_slot(a), 3u);
  EXPECT_EQ(kb.left_slot(c), 4u);
  EXPECT_EQ(kb.relationship_slot(r), 6u);
  EXPECT_EQ(kb.relationship_slot(q), 7u);
  EXPECT_EQ(kb.embedding_slots(), 8u);
  EXPECT_EQ(kb.slot_label(0), "L:b.e");
  EXPECT_EQ(kb.slot_label(3), "R:a.e");
  EXPECT_EQ(kb.slot_label(7), "q.r");
  // Every slot has exactly one owner, and owners map back to their slot.
  std::set<std::size_t> seen;
  for (std::size_t s = 0; s < kb.embedding_slots(); ++s) {
    const SymbolId id = kb.slot_symbol(s);
    if (kb.kind(id) == SymbolKind::kRelationship) {
      EXPECT_EQ(kb.relationship_slot(id), s);
    } else {
      EXPECT_TRUE(kb.left_slot(id) == s || kb.right_slot(id) == s);
    }
    seen.insert(s);
  }
  EXPECT_EQ(seen.size(), kb.embedding_slots());
}

TEST(KnowledgeBase, EntityAndRelationshipNamespacesAreDisjoint) {
  const auto kb = parse("x.e\tx.r\ty.e\n");
  EXPECT_NE(kb.find_symbol("x.e")->index, kb.find_symbol("x.r")->index);
  EXPECT_EQ(kb.kind(*kb.find_symbol("x.e")), SymbolKind::kEntity);
  EXPECT_EQ(kb.kind(*kb.find_symbol("x.r")), SymbolKind::kRelationship);
}

TEST(KnowledgeBase, MalformedLinesNameTheLine) {
  try {
    parse("a.e\tr.r\tb.e\na.e\tr.r\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  try {
    parse("a.e\tr.r\tb.e\na.e\tr.r\tb.e\na.r\tr.r\tb.e\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find(":3:"), std::string::npos);
  }
  EXPECT_THROW(parse("a.e\tr.e\tb.e\n"), ParseError);
  EXPECT_THROW(parse(".e\tr.r\tb.e\n"), ParseError);
  EXPECT_THROW(parse("a.e\tr.r\tb.e\textra\n"), ParseError);
}

TEST(KnowledgeBase, EmptyInputIsAnError) {
  EXPECT_THROW(parse(""), ParseError);
  EXPECT_THROW(load_triples(data("does-not-exist.tsv")), Error);
}

TEST(KnowledgeBase, AcceptsCarriageReturns) {
  const auto kb = parse("a.e\tr.r\tb.e\r\n");
  EXPECT_TRUE(kb.find_symbol("b.e").has_value());
}

TEST(KnowledgeBase, DistinctTriplesFlag) {
  EXPECT_FALSE(parse("a.e\tr.r\tb.e\na.e\tr.r\tb.e\n").has_distinct_triples());
  EXPECT_TRUE(parse("a.e\tr.r\tb.e\nb.e\tr.r\ta.e\n").has_distinct_triples());
}

TEST(KnowledgeBase, MaxNameTokens) {
  EXPECT_EQ(load_triples(data("churchill.tsv")).max_name_tokens(), 4u);  // be prime minister of
}

TEST(Tokenize, LowercasesAndIsolatesPunctuation) {
  EXPECT_EQ(tokenize("Who is Churchill's wife?"),
            (Tokens{"who", "is", "churchill", "'s", "wife", "?"}));
  EXPECT_EQ(tokenize("  where did  churchill die ? "), (Tokens{"where", "did", "churchill", "die", "?"}));
  EXPECT_EQ(tokenize("a,b"), (Tokens{"a", ",", "b"}));
  EXPECT_TRUE(tokenize("   ").empty());
}
