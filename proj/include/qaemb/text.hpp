#pragma once

#include <cctype>
#include <string>
#include <string_view>
#include <vector>

namespace qaemb {

using Tokens = std::vector<std::string>;

namespace detail {

inline bool is_isolated_punct(char c) {
  switch (c) {
    case '?': case '!': case '.': case ',': case ';': case ':': case '"':
    case '(': case ')':
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Lowercases, isolates punctuation, splits a trailing possessive "'s" into
// its own token and splits on whitespace. "Who is Churchill's wife?" gives
// {who, is, churchill, 's, wife, ?}.
inline Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string cur;
  auto flush = [&] {
    if (cur.empty()) return;
    if (cur.size() > 2 && cur.compare(cur.size() - 2, 2, "'s") == 0) {
      out.push_back(cur.substr(0, cur.size() - 2));
      out.emplace_back("'s");
    } else {
      out.push_back(cur);
    }
    cur.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (detail::is_isolated_punct(raw)) {
      flush();
      out.emplace_back(1, raw);
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

// Splits on TAB, keeping empty fields.
inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view strip_cr(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace qaemb
