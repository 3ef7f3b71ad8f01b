#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qaemb/error.hpp"
#include "qaemb/kb.hpp"
#include "qaemb/model.hpp"

// Model directory layout:
//
//   meta         "QAEMB1\n<n_v> <n_e> <k>\n"
//   vocab.txt    one word per line, line i holds word index i
//   symbols.txt  one raw symbol per line in symbol-id order; the slot layout
//                follows from it (entity ordinal i -> slots 2i / 2i+1,
//                relationship ordinal j -> slot 2*entities + j)
//   V.bin W.bin  u64 rows, u64 cols, then rows*cols f32, all little-endian
//   M.bin        optional k x k matrix, same encoding
//   lambda       optional, shortest round-trip decimal text

namespace qaemb {

inline constexpr std::string_view kModelMagic = "QAEMB1";

struct LoadedModel {
  EmbeddingModel model;
  Vocabulary vocab;
  std::vector<std::string> symbols;
  std::optional<SimilarityMatrix> similarity;

  std::vector<std::string> slot_labels() const {
    std::size_t entities = 0;
    for (const auto& s : symbols) entities += ends_with(s, ".e");
    std::vector<std::string> labels(model.slot_count());
    std::size_t e = 0, r = 0;
    for (const auto& s : symbols) {
      if (ends_with(s, ".e")) {
        labels.at(2 * e) = "L:" + s;
        labels.at(2 * e + 1) = "R:" + s;
        ++e;
      } else {
        labels.at(2 * entities + r++) = s;
      }
    }
    return labels;
  }

  // Throws FormatError unless `kb` has the same symbol table the model was trained on.
  void check_matches(const KnowledgeBase& kb) const {
    if (kb.symbol_count() != symbols.size()) {
      throw FormatError("model has " + std::to_string(symbols.size()) + " symbols, KB has " +
                        std::to_string(kb.symbol_count()));
    }
    for (std::uint32_t i = 0; i < symbols.size(); ++i) {
      if (kb.symbol_name(SymbolId{i}) != symbols[i]) {
        throw FormatError("symbol " + std::to_string(i) + " differs: model '" + symbols[i] +
                          "', KB '" + kb.symbol_name(SymbolId{i}) + "'");
      }
    }
  }
};

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

inline std::string encode_matrix(const Matrix<float>& m) {
  std::string out;
  out.reserve(16 + 4 * m.data().size());
  put_u64(out, m.rows());
  put_u64(out, m.cols());
  for (float x : m.data()) {
    const auto bits = std::bit_cast<std::uint32_t>(x);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("missing " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

inline Matrix<float> decode_matrix(const std::filesystem::path& path, std::size_t rows,
                                   std::size_t cols) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 16) throw FormatError(path.string() + ": truncated header");
  const std::uint64_t r = get_u64(p), c = get_u64(p + 8);
  if (r != rows || c != cols) {
    throw FormatError(path.string() + ": header says " + std::to_string(r) + "x" +
                      std::to_string(c) + ", expected " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  if (bytes.size() != 16 + 4 * rows * cols) {
    throw FormatError(path.string() + ": payload is " + std::to_string(bytes.size() - 16) +
                      " bytes, expected " + std::to_string(4 * rows * cols));
  }
  Matrix<float> m(rows, cols);
  p += 16;
  for (float& x : m.data()) {
    const std::uint32_t bits = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                               (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
    x = std::bit_cast<float>(bits);
    p += 4;
  }
  return m;
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  std::vector<std::string> lines;
  std::istringstream in(bytes);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace detail

inline void save_model(const std::filesystem::path& dir, const EmbeddingModel& model,
                       const Vocabulary& vocab, const KnowledgeBase& kb,
                       const SimilarityMatrix* similarity = nullptr) {
  if (vocab.size() != model.vocab_size()) throw Error("vocabulary size does not match V");
  if (kb.embedding_slots() != model.slot_count()) throw Error("KB slot count does not match W");
  std::filesystem::create_directories(dir);

  std::string meta(kModelMagic);
  meta += "\n" + std::to_string(model.vocab_size()) + " " + std::to_string(model.slot_count()) +
          " " + std::to_string(model.dim()) + "\n";
  detail::write_file(dir / "meta", meta);

  std::string words;
  for (const auto& w : vocab.words()) words += w + "\n";
  detail::write_file(dir / "vocab.txt", words);

  std::string symbols;
  for (std::uint32_t i = 0; i < kb.symbol_count(); ++i) symbols += kb.symbol_name(SymbolId{i}) + "\n";
  detail::write_file(dir / "symbols.txt", symbols);

  detail::write_file(dir / "V.bin", detail::encode_matrix(model.words));
  detail::write_file(dir / "W.bin", detail::encode_matrix(model.symbols));

  std::filesystem::remove(dir / "M.bin");
  std::filesystem::remove(dir / "lambda");
  if (similarity) {
    if (similarity->m.rows() != model.dim() || similarity->m.cols() != model.dim()) {
      throw Error("similarity matrix must be k x k");
    }
    detail::write_file(dir / "M.bin", detail::encode_matrix(similarity->m));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, similarity->lambda);
    detail::write_file(dir / "lambda", std::string(buf, res.ptr) + "\n");
  }
}

inline LoadedModel load_model(const std::filesystem::path& dir) {
  const auto meta = detail::read_lines(dir / "meta");
  if (meta.empty() || meta[0] != kModelMagic) {
    throw FormatError((dir / "meta").string() + ": bad magic, expected " + std::string(kModelMagic));
  }
  std::size_t n_v = 0, n_e = 0, k = 0;
  {
    std::istringstream dims(meta.size() > 1 ? meta[1] : "");
    if (!(dims >> n_v >> n_e >> k) || n_v == 0 || n_e == 0 || k == 0) {
      throw FormatError((dir / "meta").string() + ": malformed dimension line");
    }
  }

  LoadedModel out;
  const auto words = detail::read_lines(dir / "vocab.txt");
  if (words.size() != n_v) {
    throw FormatError("vocab.txt has " + std::to_string(words.size()) + " words, meta says " +
                      std::to_string(n_v));
  }
  for (const auto& w : words) out.vocab.add(w);
  if (out.vocab.size() != n_v) throw FormatError("vocab.txt contains duplicate words");

  out.symbols = detail::read_lines(dir / "symbols.txt");
  std::size_t slots = 0;
  for (const auto& s : out.symbols) {
    if (ends_with(s, ".e")) {
      slots += 2;
    } else if (ends_with(s, ".r")) {
      slots += 1;
    } else {
      throw FormatError("symbols.txt: bad symbol '" + s + "'");
    }
  }
  if (slots != n_e) {
    throw FormatError("symbols.txt implies " + std::to_string(slots) + " slots, meta says " +
                      std::to_string(n_e));
  }

  out.model.words = detail::decode_matrix(dir / "V.bin", n_v, k);
  out.model.symbols = detail::decode_matrix(dir / "W.bin", n_e, k);

  const bool has_m = std::filesystem::exists(dir / "M.bin");
  const bool has_lambda = std::filesystem::exists(dir / "lambda");
  if (has_m != has_lambda) throw FormatError("M.bin and lambda must be present together");
  if (has_m) {
    SimilarityMatrix sim;
    sim.m = detail::decode_matrix(dir / "M.bin", k, k);
    const auto text = detail::read_lines(dir / "lambda");
    const std::string& value = text.empty() ? std::string() : text[0];
    auto res = std::from_chars(value.data(), value.data() + value.size(), sim.lambda);
    if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
      throw FormatError("lambda: cannot parse '" + value + "'");
    }
    out.similarity = std::move(sim);
  }
  return out;
}

}  // namespace qaemb
