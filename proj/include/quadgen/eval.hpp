#pragma once

// Exact-match quadruple evaluation.

#include <array>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "quadgen/schema.hpp"

namespace quadgen {

struct MatchCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const MatchCounts&, const MatchCounts&) = default;
};

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

namespace detail {

// Comparison key: lowercased, whitespace-normalized spans; implicit spans map to a
// value no explicit span can take.
using QuadKey = std::tuple<std::optional<std::string>, std::string, std::optional<std::string>, std::string>;

inline std::optional<std::string> span_key(const Span& s) {
  if (!s) return std::nullopt;
  TokenSeq words;
  for (const auto& t : *s)
    for (auto& w : split_whitespace(to_lower(t))) words.push_back(std::move(w));
  return join(words);
}

inline QuadKey quad_key(const Quadruple& q) {
  return {span_key(q.aspect), q.category + "#" + q.subcategory, span_key(q.opinion), q.sentiment};
}

}  // namespace detail

/// Multiset exact matching: each gold quadruple absorbs at most one identical prediction.
inline MatchCounts match_quadruples(std::span<const Quadruple> pred, std::span<const Quadruple> gold) {
  std::map<detail::QuadKey, std::size_t> remaining;
  for (const auto& g : gold) ++remaining[detail::quad_key(g)];
  MatchCounts c;
  for (const auto& p : pred) {
    auto it = remaining.find(detail::quad_key(p));
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++c.tp;
    } else {
      ++c.fp;
    }
  }
  c.fn = gold.size() - c.tp;
  return c;
}

/// 0/0 is taken as 0 in every ratio.
inline Prf prf1(const MatchCounts& c) {
  auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
  Prf r;
  r.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  r.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
  return r;
}

struct SubsetReport {
  std::array<MatchCounts, 4> counts{};
  std::array<std::size_t, 4> gold_sizes{};

  /// Metrics for a subset, or nullopt when it has no gold quadruples.
  std::optional<Prf> metrics(ImplicitSubset s) const {
    const auto i = static_cast<std::size_t>(s);
    if (gold_sizes[i] == 0) return std::nullopt;
    return prf1(counts[i]);
  }
};

/// Splits counts by implicitness. A matched prediction shares its gold's pattern;
/// an unmatched one is charged to the subset of its own pattern.
inline SubsetReport evaluate_by_subset(std::span<const std::vector<Quadruple>> preds,
                                       std::span<const std::vector<Quadruple>> golds) {
  SubsetReport r;
  for (std::size_t i = 0; i < std::max(preds.size(), golds.size()); ++i) {
    static const std::vector<Quadruple> kEmpty;
    const auto& p = i < preds.size() ? preds[i] : kEmpty;
    const auto& g = i < golds.size() ? golds[i] : kEmpty;
    for (auto s : kAllSubsets) {
      std::vector<Quadruple> ps, gs;
      for (const auto& q : p)
        if (subset_of(q) == s) ps.push_back(q);
      for (const auto& q : g)
        if (subset_of(q) == s) gs.push_back(q);
      const auto idx = static_cast<std::size_t>(s);
      r.counts[idx] += match_quadruples(ps, gs);
      r.gold_sizes[idx] += gs.size();
    }
  }
  return r;
}

struct EvalReport {
  MatchCounts overall;
  SubsetReport subsets;
};

inline EvalReport evaluate(std::span<const std::vector<Quadruple>> preds,
                           std::span<const std::vector<Quadruple>> golds) {
  EvalReport r;
  for (std::size_t i = 0; i < std::max(preds.size(), golds.size()); ++i) {
    static const std::vector<Quadruple> kEmpty;
    r.overall += match_quadruples(i < preds.size() ? preds[i] : kEmpty, i < golds.size() ? golds[i] : kEmpty);
  }
  r.subsets = evaluate_by_subset(preds, golds);
  return r;
}

inline void write_eval_table(std::ostream& os, const EvalReport& r) {
  auto cell = [](double v) {
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << v;
    return s.str();
  };
  const auto all = prf1(r.overall);
  os << "subset     P      R      F1\n";
  os << "all        " << cell(all.precision) << "  " << cell(all.recall) << "  " << cell(all.f1) << "\n";
  for (auto s : kAllSubsets) {
    std::string name(subset_name(s));
    os << name << std::string(11 - name.size(), ' ');
    if (auto m = r.subsets.metrics(s))
      os << cell(m->precision) << "  " << cell(m->recall) << "  " << cell(m->f1) << "\n";
    else
      os << "N/A    N/A    N/A\n";
  }
}

inline void write_eval_csv(std::ostream& os, const EvalReport& r) {
  os << "subset,tp,fp,fn,precision,recall,f1\n";
  auto row = [&](std::string_view name, const MatchCounts& c, std::optional<Prf> m) {
    os << name << ',' << c.tp << ',' << c.fp << ',' << c.fn << ',';
    if (m)
      os << m->precision << ',' << m->recall << ',' << m->f1 << '\n';
    else
      os << "NA,NA,NA\n";
  };
  row("all", r.overall, prf1(r.overall));
  for (auto s : kAllSubsets) row(subset_name(s), r.subsets.counts[static_cast<std::size_t>(s)], r.subsets.metrics(s));
}

}  // namespace quadgen
