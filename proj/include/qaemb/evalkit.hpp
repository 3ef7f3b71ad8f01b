#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "qaemb/error.hpp"
#include "qaemb/ranker.hpp"

namespace qaemb {

struct LabeledItem {
  std::size_t triple = 0;
  double score = 0.0;
  bool relevant = false;
};

struct LabeledRanking {
  std::string question_id;
  std::vector<LabeledItem> items;  // ranker order
};

inline LabeledRanking label_ranking(std::string question_id, const RankedAnswerList& ranked,
                                    const std::function<bool(std::size_t)>& is_relevant) {
  LabeledRanking out{std::move(question_id), {}};
  out.items.reserve(ranked.entries.size());
  for (const auto& e : ranked.entries) out.items.push_back({e.triple, e.score, is_relevant(e.triple)});
  return out;
}

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct PrPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

inline double harmonic_mean(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

// A question is answered when its list is nonempty and its top score is at
// least `threshold`; an answered question is correct when its top item is relevant.
inline Prf top1_prf(const std::vector<LabeledRanking>& rankings, double threshold) {
  std::size_t answered = 0, correct = 0;
  for (const auto& r : rankings) {
    if (r.items.empty() || !(r.items.front().score >= threshold)) continue;
    ++answered;
    correct += r.items.front().relevant;
  }
  Prf out;
  if (answered == 0) return out;
  out.precision = double(correct) / double(answered);
  out.recall = double(correct) / double(rankings.size());
  out.f1 = harmonic_mean(out.precision, out.recall);
  return out;
}

// Mean precision at the ranks of relevant items; 0 when nothing is relevant.
inline double average_precision(const LabeledRanking& r) {
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < r.items.size(); ++i) {
    if (!r.items[i].relevant) continue;
    ++hits;
    sum += double(hits) / double(i + 1);
  }
  return hits ? sum / double(hits) : 0.0;
}

inline bool has_relevant(const LabeledRanking& r) {
  for (const auto& it : r.items) {
    if (it.relevant) return true;
  }
  return false;
}

struct MapResult {
  double value = 0.0;
  std::vector<std::size_t> flagged;  // questions with no relevant item (AP taken as 0)
};

inline MapResult mean_average_precision(const std::vector<LabeledRanking>& rankings) {
  if (rankings.empty()) throw Error("MAP of an empty question set");
  MapResult out;
  double sum = 0.0;
  for (std::size_t q = 0; q < rankings.size(); ++q) {
    if (!has_relevant(rankings[q])) out.flagged.push_back(q);
    sum += average_precision(rankings[q]);
  }
  out.value = sum / double(rankings.size());
  return out;
}

// top1_prf at +inf, then at every distinct top score in descending order.
// The last point therefore equals the threshold = -inf evaluation.
inline std::vector<PrPoint> pr_curve(const std::vector<LabeledRanking>& rankings) {
  std::vector<double> tops;
  for (const auto& r : rankings) {
    if (!r.items.empty()) tops.push_back(r.items.front().score);
  }
  std::sort(tops.begin(), tops.end(), std::greater<>());
  tops.erase(std::unique(tops.begin(), tops.end()), tops.end());

  std::vector<PrPoint> out;
  const double inf = std::numeric_limits<double>::infinity();
  const auto at_inf = top1_prf(rankings, inf);
  out.push_back({inf, at_inf.precision, at_inf.recall});
  for (double t : tops) {
    const auto p = top1_prf(rankings, t);
    out.push_back({t, p.precision, p.recall});
  }
  return out;
}

// Share of questions with a nonempty list that have a relevant item in the top k.
inline std::map<std::size_t, double> topk_hits(const std::vector<LabeledRanking>& rankings,
                                               const std::vector<std::size_t>& ks) {
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) {
    if (k == 0) throw Error("top-k cutoffs must be positive");
    std::size_t asked = 0, hit = 0;
    for (const auto& r : rankings) {
      if (r.items.empty()) continue;
      ++asked;
      for (std::size_t i = 0; i < std::min(k, r.items.size()); ++i) {
        if (r.items[i].relevant) {
          ++hit;
          break;
        }
      }
    }
    out[k] = asked ? double(hit) / double(asked) : 0.0;
  }
  return out;
}

struct EvalReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double threshold = -std::numeric_limits<double>::infinity();
  double map = 0.0;
  std::size_t questions = 0;
  std::size_t flagged = 0;
  std::vector<PrPoint> pr_curve;
  std::map<std::size_t, double> topk;
};

inline EvalReport evaluate(const std::vector<LabeledRanking>& rankings,
                           double threshold = -std::numeric_limits<double>::infinity(),
                           const std::vector<std::size_t>& ks = {1, 10}) {
  EvalReport out;
  const auto prf = top1_prf(rankings, threshold);
  out.precision = prf.precision;
  out.recall = prf.recall;
  out.f1 = prf.f1;
  out.threshold = threshold;
  const auto m = mean_average_precision(rankings);
  out.map = m.value;
  out.questions = rankings.size();
  out.flagged = m.flagged.size();
  out.pr_curve = pr_curve(rankings);
  out.topk = topk_hits(rankings, ks);
  return out;
}

inline void write_report_table(std::ostream& out,
                               const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::size_t width = 6;
  for (const auto& [name, r] : rows) width = std::max(width, name.size());
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::left << std::setw(int(width)) << "Method" << "  F1    Prec  Recall  MAP\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& [name, r] : rows) {
    out << std::left << std::setw(int(width)) << name << "  " << r.f1 << "  " << r.precision << "  "
        << r.recall << "    " << r.map << '\n';
  }
  out.flags(flags);
  out.precision(precision);
}

inline void write_report_kv(std::ostream& out, const EvalReport& r) {
  const auto precision = out.precision();
  out << std::setprecision(17);
  out << "questions=" << r.questions << '\n'
      << "threshold=" << r.threshold << '\n'
      << "precision=" << r.precision << '\n'
      << "recall=" << r.recall << '\n'
      << "f1=" << r.f1 << '\n'
      << "map=" << r.map << '\n'
      << "no_relevant=" << r.flagged << '\n';
  for (const auto& [k, v] : r.topk) out << "top" << k << '=' << v << '\n';
  out.precision(precision);
}

// Two columns, recall then precision, one point per line.
inline void write_pr_curve(std::ostream& out, const std::vector<PrPoint>& curve) {
  const auto precision = out.precision();
  out << std::setprecision(17);
  for (const auto& p : curve) out << p.recall << ' ' << p.precision << '\n';
  out.precision(precision);
}

}  // namespace qaemb
