#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qaemb/error.hpp"
#include "qaemb/text.hpp"

namespace qaemb {

struct SymbolId {
  std::uint32_t index = 0;
  friend auto operator<=>(SymbolId, SymbolId) = default;
};

enum class SymbolKind : std::uint8_t { kEntity, kRelationship };

struct Triple {
  SymbolId left;
  SymbolId rel;
  SymbolId right;
  friend bool operator==(const Triple&, const Triple&) = default;
};

// "winston-churchill.e" -> "winston churchill". Drops the two-character kind
// suffix and turns every dash into a single space.
inline std::string render_name(std::string_view raw) {
  if (ends_with(raw, ".e") || ends_with(raw, ".r")) raw.remove_suffix(2);
  std::string out(raw);
  for (char& c : out) {
    if (c == '-') c = ' ';
  }
  return out;
}

// Embedding slot layout: entity with ordinal i owns slots 2i (left role) and
// 2i+1 (right role); relationship with ordinal j owns slot 2*entities + j.
// Ordinals follow first appearance within each kind.
class KnowledgeBase {
 public:
  const std::vector<Triple>& triples() const noexcept { return triples_; }
  std::size_t size() const noexcept { return triples_.size(); }
  const Triple& triple(std::size_t i) const { return triples_.at(i); }

  std::size_t symbol_count() const noexcept { return names_.size(); }
  std::size_t entity_count() const noexcept { return entity_count_; }
  std::size_t relationship_count() const noexcept { return relationship_count_; }
  std::size_t embedding_slots() const noexcept {
    return 2 * entity_count_ + relationship_count_;
  }

  const std::string& symbol_name(SymbolId id) const { return names_.at(id.index); }
  SymbolKind kind(SymbolId id) const { return kinds_.at(id.index); }
  std::size_t freq(SymbolId id) const { return freq_.at(id.index); }
  std::string render_name(SymbolId id) const { return qaemb::render_name(symbol_name(id)); }

  std::optional<SymbolId> find_symbol(std::string_view raw) const {
    auto it = by_name_.find(std::string(raw));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t left_slot(SymbolId entity) const { return 2 * ordinal_.at(entity.index); }
  std::size_t right_slot(SymbolId entity) const { return 2 * ordinal_.at(entity.index) + 1; }
  std::size_t relationship_slot(SymbolId rel) const {
    return 2 * entity_count_ + ordinal_.at(rel.index);
  }

  // Symbol owning an embedding slot.
  SymbolId slot_symbol(std::size_t slot) const { return slot_owner_.at(slot); }

  // "L:churchill.e", "R:churchill.e" or "die-in.r".
  std::string slot_label(std::size_t slot) const {
    const SymbolId s = slot_symbol(slot);
    if (kind(s) == SymbolKind::kRelationship) return symbol_name(s);
    return (slot % 2 == 0 ? "L:" : "R:") + symbol_name(s);
  }

  // Sorted, distinct indices of the triples holding a symbol whose rendered
  // name equals `surface`. Exact match only.
  std::span<const std::size_t> triples_containing_string(std::string_view surface) const {
    auto it = string_index_.find(std::string(surface));
    if (it == string_index_.end()) return {};
    return it->second.triples;
  }

  bool contains_string(std::string_view surface) const {
    return string_index_.count(std::string(surface)) > 0;
  }

  // Occurrences, across all triple positions, of symbols rendering to `surface`.
  std::size_t string_frequency(std::string_view surface) const {
    auto it = string_index_.find(std::string(surface));
    return it == string_index_.end() ? 0 : it->second.occurrences;
  }

  // Longest rendered name, in tokens. Bounds n-gram lookups.
  std::size_t max_name_tokens() const noexcept { return max_name_tokens_; }

  // False when every triple is identical, i.e. no corrupted triple can differ.
  bool has_distinct_triples() const noexcept { return has_distinct_triples_; }

 private:
  friend class KnowledgeBaseBuilder;

  struct StringEntry {
    std::vector<std::size_t> triples;
    std::size_t occurrences = 0;
  };

  std::vector<Triple> triples_;
  std::vector<std::string> names_;
  std::vector<SymbolKind> kinds_;
  std::vector<std::size_t> ordinal_;
  std::vector<std::size_t> freq_;
  std::vector<SymbolId> slot_owner_;
  std::unordered_map<std::string, SymbolId> by_name_;
  std::unordered_map<std::string, StringEntry> string_index_;
  std::size_t entity_count_ = 0;
  std::size_t relationship_count_ = 0;
  std::size_t max_name_tokens_ = 0;
  bool has_distinct_triples_ = false;
};

// Accumulates triples, then freezes them into an indexed KnowledgeBase.
class KnowledgeBaseBuilder {
 public:
  // Throws Error when the suffixes do not read entity/relationship/entity.
  void add(std::string_view left, std::string_view rel, std::string_view right) {
    check_symbol(left, ".e");
    check_symbol(rel, ".r");
    check_symbol(right, ".e");
    kb_.triples_.push_back({intern(left), intern(rel), intern(right)});
  }

  std::size_t size() const noexcept { return kb_.triples_.size(); }

  KnowledgeBase build() && {
    KnowledgeBase& kb = kb_;
    kb.freq_.assign(kb.names_.size(), 0);
    kb.slot_owner_.assign(kb.embedding_slots(), SymbolId{});
    std::vector<std::string> rendered(kb.names_.size());
    for (std::uint32_t s = 0; s < kb.names_.size(); ++s) {
      const SymbolId id{s};
      if (kb.kinds_[s] == SymbolKind::kEntity) {
        kb.slot_owner_[kb.left_slot(id)] = id;
        kb.slot_owner_[kb.right_slot(id)] = id;
      } else {
        kb.slot_owner_[kb.relationship_slot(id)] = id;
      }
      rendered[s] = render_name(kb.names_[s]);
      std::size_t tokens = 1;
      for (char c : rendered[s]) tokens += (c == ' ');
      if (tokens > kb.max_name_tokens_) kb.max_name_tokens_ = tokens;
    }

    for (std::size_t i = 0; i < kb.triples_.size(); ++i) {
      const Triple& t = kb.triples_[i];
      for (SymbolId s : {t.left, t.rel, t.right}) {
        ++kb.freq_[s.index];
        auto& entry = kb.string_index_[rendered[s.index]];
        ++entry.occurrences;
        if (entry.triples.empty() || entry.triples.back() != i) entry.triples.push_back(i);
      }
      if (!(t == kb.triples_.front())) kb.has_distinct_triples_ = true;
    }
    return std::move(kb_);
  }

 private:
  static void check_symbol(std::string_view name, std::string_view suffix) {
    if (name.size() <= suffix.size() || !ends_with(name, suffix)) {
      throw Error("symbol '" + std::string(name) + "' must be a nonempty name ending in '" +
                  std::string(suffix) + "'");
    }
  }

  SymbolId intern(std::string_view name) {
    std::string key(name);
    auto it = kb_.by_name_.find(key);
    if (it != kb_.by_name_.end()) return it->second;
    const SymbolId id{static_cast<std::uint32_t>(kb_.names_.size())};
    const bool entity = ends_with(name, ".e");
    kb_.names_.push_back(key);
    kb_.kinds_.push_back(entity ? SymbolKind::kEntity : SymbolKind::kRelationship);
    kb_.ordinal_.push_back(entity ? kb_.entity_count_++ : kb_.relationship_count_++);
    kb_.by_name_.emplace(std::move(key), id);
    return id;
  }

  KnowledgeBase kb_;
};

// Parses `left<TAB>rel<TAB>right` lines. `source` names the input in errors.
inline KnowledgeBase parse_triples(std::istream& in, const std::string& source) {
  KnowledgeBaseBuilder builder;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto fields = split_tabs(strip_cr(line));
    if (fields.size() != 3) {
      throw ParseError(source, lineno,
                       "expected 3 TAB-separated fields, got " + std::to_string(fields.size()));
    }
    try {
      builder.add(fields[0], fields[1], fields[2]);
    } catch (const ParseError&) {
      throw;
    } catch (const Error& e) {
      throw ParseError(source, lineno, e.what());
    }
  }
  if (builder.size() == 0) throw ParseError(source, 0, "no triples");
  return std::move(builder).build();
}

inline KnowledgeBase load_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse_triples(in, path);
}

}  // namespace qaemb
