#pragma once

// Domain types for aspect-category-opinion-sentiment quadruples, the category
// schema, ingestion of ACOS-format TSV files, and dataset statistics.

#include <array>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/tokens.hpp"

namespace quadgen {

/// How a schema symbol maps onto decoder tokens.
enum class SymbolMode {
  Single,           ///< every symbol is one token
  SplitUnderscore,  ///< "OPERATION_PERFORMANCE" -> ["OPERATION", "PERFORMANCE"]
};

inline const std::set<std::string>& default_polarities() {
  static const std::set<std::string> kDefault = {"NEGATIVE", "NEUTRAL", "POSITIVE"};
  return kDefault;
}

/// Closed label sets: categories (C1), per-category subcategories (C2), polarities (S).
/// Immutable once built; all sets are kept in lexicographic order.
class CategorySchema {
 public:
  using Entry = std::pair<std::string, std::vector<std::string>>;

  /// Validates and builds a schema. Duplicate names, empty subcategory lists, and
  /// polarities outside `configured_polarities` raise SchemaError naming the entry.
  static CategorySchema create(const std::vector<Entry>& categories,
                               const std::vector<std::string>& sentiments,
                               const std::set<std::string>& configured_polarities = default_polarities(),
                               SymbolMode mode = SymbolMode::Single) {
    CategorySchema s;
    s.mode_ = mode;
    if (categories.empty()) throw SchemaError("schema has no categories");
    for (const auto& [c1, c2s] : categories) {
      check_symbol(c1, "category");
      if (s.sub_.count(c1)) throw SchemaError("duplicate category '" + c1 + "'");
      if (c2s.empty()) throw SchemaError("category '" + c1 + "' has an empty subcategory list");
      std::set<std::string> seen;
      for (const auto& c2 : c2s) {
        check_symbol(c2, "subcategory of " + c1);
        if (!seen.insert(c2).second)
          throw SchemaError("duplicate subcategory '" + c2 + "' under '" + c1 + "'");
      }
      s.sub_.emplace(c1, std::vector<std::string>(seen.begin(), seen.end()));
      s.categories_.push_back(c1);
    }
    std::sort(s.categories_.begin(), s.categories_.end());

    std::set<std::string> seen;
    for (const auto& pol : sentiments) {
      check_symbol(pol, "sentiment");
      if (!configured_polarities.count(pol)) throw SchemaError("unknown sentiment '" + pol + "'");
      if (!seen.insert(pol).second) throw SchemaError("duplicate sentiment '" + pol + "'");
    }
    for (const auto& pol : configured_polarities)
      if (!seen.count(pol)) throw SchemaError("missing configured sentiment '" + pol + "'");
    s.sentiments_.assign(seen.begin(), seen.end());

    s.check_symbol_tokens();
    if (mode == SymbolMode::SplitUnderscore) s.check_prefix_free();
    return s;
  }

  const std::vector<std::string>& categories() const noexcept { return categories_; }
  const std::vector<std::string>& sentiments() const noexcept { return sentiments_; }
  std::size_t category_count() const noexcept { return categories_.size(); }
  SymbolMode symbol_mode() const noexcept { return mode_; }

  const std::vector<std::string>& subcategories(std::string_view c1) const {
    auto it = sub_.find(std::string(c1));
    if (it == sub_.end()) throw SchemaError("unknown category '" + std::string(c1) + "'");
    return it->second;
  }

  bool has_category(std::string_view c1) const { return sub_.count(std::string(c1)) != 0; }
  bool has_subcategory(std::string_view c1, std::string_view c2) const {
    auto it = sub_.find(std::string(c1));
    return it != sub_.end() && std::binary_search(it->second.begin(), it->second.end(), c2);
  }
  bool has_sentiment(std::string_view s) const {
    return std::binary_search(sentiments_.begin(), sentiments_.end(), s);
  }

  std::optional<std::size_t> category_index(std::string_view c1) const {
    auto it = std::lower_bound(categories_.begin(), categories_.end(), c1);
    if (it == categories_.end() || *it != c1) return std::nullopt;
    return static_cast<std::size_t>(it - categories_.begin());
  }

  /// Decoder tokens spelling a schema symbol under the configured SymbolMode.
  TokenSeq symbol_tokens(std::string_view name) const {
    if (mode_ == SymbolMode::Single) return {std::string(name)};
    TokenSeq out;
    std::size_t start = 0;
    while (start <= name.size()) {
      auto end = name.find('_', start);
      if (end == std::string_view::npos) end = name.size();
      if (end > start) out.emplace_back(name.substr(start, end - start));
      start = end + 1;
    }
    return out;
  }

  /// Every token used by any schema symbol.
  std::set<std::string> symbol_token_set() const {
    std::set<std::string> out;
    auto add = [&](const std::string& n) {
      for (auto& t : symbol_tokens(n)) out.insert(std::move(t));
    };
    for (const auto& c1 : categories_) {
      add(c1);
      for (const auto& c2 : sub_.at(c1)) add(c2);
    }
    for (const auto& s : sentiments_) add(s);
    return out;
  }

  /// Serializes to the plain-text config format; output is byte-stable.
  std::string to_text() const {
    std::ostringstream out;
    out << "sentiment";
    for (const auto& s : sentiments_) out << ' ' << s;
    out << '\n';
    for (const auto& c1 : categories_) {
      out << "category " << c1;
      for (const auto& c2 : sub_.at(c1)) out << ' ' << c2;
      out << '\n';
    }
    return out.str();
  }

  friend bool operator==(const CategorySchema& a, const CategorySchema& b) {
    return a.mode_ == b.mode_ && a.sub_ == b.sub_ && a.sentiments_ == b.sentiments_;
  }

 private:
  CategorySchema() = default;

  static void check_symbol(const std::string& name, const std::string& role) {
    if (name.empty()) throw SchemaError("empty " + role + " name");
    if (is_reserved_token(name)) throw SchemaError(role + " '" + name + "' is a reserved token");
    if (has_lower(name)) throw SchemaError(role + " '" + name + "' must not contain lowercase letters");
    for (unsigned char c : name)
      if (std::isspace(c)) throw SchemaError(role + " '" + name + "' contains whitespace");
  }

  // Every decoder token of a symbol needs an uppercase letter, otherwise it could
  // also be read as a span token and field boundaries would become ambiguous.
  void check_symbol_tokens() const {
    auto check = [this](const std::string& name) {
      for (const auto& t : symbol_tokens(name))
        if (!has_upper(t) || is_reserved_token(t))
          throw SchemaError("symbol '" + name + "' yields token '" + t + "' without an uppercase letter");
      if (symbol_tokens(name).empty()) throw SchemaError("symbol '" + name + "' yields no tokens");
    };
    for (const auto& c1 : categories_) {
      check(c1);
      for (const auto& c2 : sub_.at(c1)) check(c2);
    }
    for (const auto& p : sentiments_) check(p);
  }

  void check_prefix_free() const {
    auto check = [this](const std::vector<std::string>& names, const std::string& where) {
      for (const auto& a : names)
        for (const auto& b : names) {
          if (a == b) continue;
          auto ta = symbol_tokens(a), tb = symbol_tokens(b);
          if (ta.size() <= tb.size() && std::equal(ta.begin(), ta.end(), tb.begin()))
            throw SchemaError("symbol '" + a + "' is a token prefix of '" + b + "' in " + where);
        }
    };
    check(categories_, "categories");
    for (const auto& c1 : categories_) check(sub_.at(c1), "subcategories of " + c1);
    check(sentiments_, "sentiments");
  }

  SymbolMode mode_ = SymbolMode::Single;
  std::vector<std::string> categories_;
  std::map<std::string, std::vector<std::string>> sub_;
  std::vector<std::string> sentiments_;
};

/// Parses the schema config format:
///
///   # comment
///   sentiment NEGATIVE NEUTRAL POSITIVE
///   category HARDWARE PORTABILITY QUALITY USABILITY
///
/// A category may span several `category` lines; their subcategories are merged.
inline CategorySchema load_schema(std::istream& in,
                                  const std::set<std::string>& configured_polarities = default_polarities(),
                                  SymbolMode mode = SymbolMode::Single) {
  std::vector<CategorySchema::Entry> entries;
  std::map<std::string, std::size_t> where;
  std::vector<std::string> sentiments;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos && line.find_first_not_of(" \t") == hash)
      continue;
    auto fields = split_whitespace(line);
    if (fields.empty()) continue;
    const auto& kind = fields.front();
    if (kind == "sentiment") {
      sentiments.insert(sentiments.end(), fields.begin() + 1, fields.end());
    } else if (kind == "category") {
      if (fields.size() < 2)
        throw SchemaError("line " + std::to_string(lineno) + ": category line without a name");
      auto [it, fresh] = where.emplace(fields[1], entries.size());
      if (fresh) entries.push_back({fields[1], {}});
      auto& subs = entries[it->second].second;
      subs.insert(subs.end(), fields.begin() + 2, fields.end());
    } else {
      throw SchemaError("line " + std::to_string(lineno) + ": unknown directive '" + kind + "'");
    }
  }
  return CategorySchema::create(entries, sentiments, configured_polarities, mode);
}

inline CategorySchema load_schema_file(const std::string& path,
                                       const std::set<std::string>& configured_polarities = default_polarities(),
                                       SymbolMode mode = SymbolMode::Single) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open schema file '" + path + "'");
  return load_schema(in, configured_polarities, mode);
}

/// A text span; std::nullopt marks an implicit element.
using Span = std::optional<TokenSeq>;

inline std::string span_text(const Span& s) {
  return s ? join(*s) : std::string(tok::kImplicit);
}

struct Quadruple {
  Span aspect;
  std::string category;
  std::string subcategory;
  Span opinion;
  std::string sentiment;

  friend bool operator==(const Quadruple&, const Quadruple&) = default;
  friend auto operator<=>(const Quadruple&, const Quadruple&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const Quadruple& q) {
  return os << "<" << span_text(q.aspect) << ", " << q.category << "#" << q.subcategory << ", "
            << span_text(q.opinion) << ", " << q.sentiment << ">";
}

/// Throws SchemaError when the labels are outside the schema or a span is empty.
inline void validate(const Quadruple& q, const CategorySchema& schema) {
  if (!schema.has_category(q.category)) throw SchemaError("unknown category '" + q.category + "'");
  if (!schema.has_subcategory(q.category, q.subcategory))
    throw SchemaError("unknown subcategory '" + q.category + "#" + q.subcategory + "'");
  if (!schema.has_sentiment(q.sentiment)) throw SchemaError("unknown sentiment '" + q.sentiment + "'");
  auto nonempty = [](const Span& s) {
    return !s || std::any_of(s->begin(), s->end(), [](const std::string& t) {
      return t.find_first_not_of(" \t") != std::string::npos;
    });
  };
  if (!nonempty(q.aspect)) throw SchemaError("empty explicit aspect span");
  if (!nonempty(q.opinion)) throw SchemaError("empty explicit opinion span");
}

struct Sample {
  TokenSeq text;
  std::vector<Quadruple> gold;
};

/// Explicit (E) / implicit (I) status of aspect (A) and opinion (O).
enum class ImplicitSubset { EAEO = 0, IAEO = 1, EAIO = 2, IAIO = 3 };

inline constexpr std::array<ImplicitSubset, 4> kAllSubsets = {
    ImplicitSubset::EAEO, ImplicitSubset::IAEO, ImplicitSubset::EAIO, ImplicitSubset::IAIO};

inline ImplicitSubset subset_of(const Quadruple& q) {
  const bool ia = !q.aspect, io = !q.opinion;
  if (ia && io) return ImplicitSubset::IAIO;
  if (ia) return ImplicitSubset::IAEO;
  if (io) return ImplicitSubset::EAIO;
  return ImplicitSubset::EAEO;
}

inline std::string_view subset_name(ImplicitSubset s) {
  switch (s) {
    case ImplicitSubset::EAEO: return "EA&EO";
    case ImplicitSubset::IAEO: return "IA&EO";
    case ImplicitSubset::EAIO: return "EA&IO";
    case ImplicitSubset::IAIO: return "IA&IO";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ACOS TSV ingestion
//
// One sample per line: the tokenized sentence, then one tab-separated field per
// quadruple holding "a_start,a_end C1#C2 polarity o_start,o_end". Spans are
// token offsets with exclusive end; "-1,-1" marks an implicit element.

using PolarityMap = std::map<int, std::string>;

inline const PolarityMap& default_polarity_map() {
  static const PolarityMap kMap = {{0, "NEGATIVE"}, {1, "NEUTRAL"}, {2, "POSITIVE"}};
  return kMap;
}

struct IngestIssue {
  std::size_t line;
  std::string message;
};

struct IngestResult {
  std::vector<Sample> samples;
  std::vector<IngestIssue> issues;
  std::size_t lines_read = 0;
};

namespace detail {

inline int parse_int(std::string_view s, const std::string& what) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw DataError("unparsable " + what + " '" + std::string(s) + "'");
  return v;
}

inline Span resolve_span(std::string_view field, const TokenSeq& text, const std::string& what) {
  auto comma = field.find(',');
  if (comma == std::string_view::npos) throw DataError("unparsable " + what + " span '" + std::string(field) + "'");
  int b = parse_int(field.substr(0, comma), what + " span start");
  int e = parse_int(field.substr(comma + 1), what + " span end");
  if (b == -1 && e == -1) return std::nullopt;
  if (b < 0 || e <= b || static_cast<std::size_t>(e) > text.size())
    throw DataError(what + " span " + std::string(field) + " out of range for " + std::to_string(text.size()) +
                    " tokens");
  return TokenSeq(text.begin() + b, text.begin() + e);
}

inline Quadruple parse_acos_quad(std::string_view field, const TokenSeq& text, const PolarityMap& polarity,
                                 const CategorySchema* schema) {
  auto parts = split_whitespace(field);
  if (parts.size() != 4) throw DataError("quadruple field needs 4 parts, got " + std::to_string(parts.size()));
  Quadruple q;
  q.aspect = resolve_span(parts[0], text, "aspect");
  auto hash = parts[1].find('#');
  if (hash == std::string::npos || hash == 0 || hash + 1 == parts[1].size())
    throw DataError("category '" + parts[1] + "' is not of the form C1#C2");
  q.category = parts[1].substr(0, hash);
  q.subcategory = parts[1].substr(hash + 1);
  int pol = parse_int(parts[2], "sentiment index");
  auto it = polarity.find(pol);
  if (it == polarity.end()) throw DataError("unmapped sentiment index " + parts[2]);
  q.sentiment = it->second;
  q.opinion = resolve_span(parts[3], text, "opinion");
  if (schema) {
    try {
      validate(q, *schema);
    } catch (const SchemaError& e) {
      throw DataError(e.what());
    }
  }
  return q;
}

}  // namespace detail

/// Reads ACOS lines from `in`. Malformed lines are skipped and reported with their
/// line number; ingestion continues. Review text is lowercased.
inline IngestResult ingest_acos(std::istream& in, const PolarityMap& polarity = default_polarity_map(),
                                const CategorySchema* schema = nullptr) {
  IngestResult result;
  std::string line;
  while (std::getline(in, line)) {
    ++result.lines_read;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      auto tab = rest.find('\t');
      fields.push_back(rest.substr(0, tab));
      if (tab == std::string_view::npos) break;
      rest.remove_prefix(tab + 1);
    }
    try {
      Sample s;
      s.text = split_whitespace(to_lower(fields[0]));
      if (s.text.empty()) throw DataError("empty sentence");
      for (std::size_t i = 1; i < fields.size(); ++i) {
        if (fields[i].find_first_not_of(" ") == std::string_view::npos) continue;
        s.gold.push_back(detail::parse_acos_quad(fields[i], s.text, polarity, schema));
      }
      result.samples.push_back(std::move(s));
    } catch (const Error& e) {
      result.issues.push_back({result.lines_read, e.what()});
    }
  }
  return result;
}

inline IngestResult ingest_acos_file(const std::string& path, const PolarityMap& polarity = default_polarity_map(),
                                     const CategorySchema* schema = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file '" + path + "'");
  return ingest_acos(in, polarity, schema);
}

/// Union of the observed C1#C2 labels; polarities are the configured set.
inline CategorySchema derive_schema(std::span<const Sample> samples,
                                    const std::set<std::string>& polarities = default_polarities(),
                                    SymbolMode mode = SymbolMode::Single) {
  std::map<std::string, std::set<std::string>> seen;
  for (const auto& s : samples)
    for (const auto& q : s.gold) seen[q.category].insert(q.subcategory);
  std::vector<CategorySchema::Entry> entries;
  for (auto& [c1, c2s] : seen) entries.push_back({c1, {c2s.begin(), c2s.end()}});
  return CategorySchema::create(entries, {polarities.begin(), polarities.end()}, polarities, mode);
}

// ---------------------------------------------------------------------------
// Statistics

struct SplitStats {
  std::string name;
  std::size_t samples = 0;
  std::size_t quadruples = 0;
};

struct DatasetStats {
  std::vector<SplitStats> splits;
  std::array<std::size_t, 4> subsets{};  // indexed by ImplicitSubset

  std::size_t sample_count() const {
    std::size_t n = 0;
    for (const auto& s : splits) n += s.samples;
    return n;
  }
  std::size_t quadruple_count() const {
    std::size_t n = 0;
    for (const auto& s : splits) n += s.quadruples;
    return n;
  }
  std::size_t subset(ImplicitSubset s) const { return subsets[static_cast<std::size_t>(s)]; }
};

using NamedSplit = std::pair<std::string, std::span<const Sample>>;

inline DatasetStats dataset_stats(std::span<const NamedSplit> splits) {
  DatasetStats st;
  for (const auto& [name, samples] : splits) {
    SplitStats sp{name, samples.size(), 0};
    for (const auto& s : samples) {
      sp.quadruples += s.gold.size();
      for (const auto& q : s.gold) ++st.subsets[static_cast<std::size_t>(subset_of(q))];
    }
    st.splits.push_back(sp);
  }
  return st;
}

/// Text table in the layout of the usual "samples / quadruples" and "implicit elements" tables.
inline void write_stats_table(std::ostream& os, const std::string& dataset, const DatasetStats& st) {
  os << dataset << "\n";
  os << "  split      samples  quadruples\n";
  auto row = [&](const std::string& n, std::size_t a, std::size_t b) {
    os << "  " << n << std::string(n.size() < 9 ? 9 - n.size() : 1, ' ') << std::string(1, ' ');
    auto sa = std::to_string(a), sb = std::to_string(b);
    os << std::string(sa.size() < 7 ? 7 - sa.size() : 0, ' ') << sa << "  "
       << std::string(sb.size() < 10 ? 10 - sb.size() : 0, ' ') << sb << "\n";
  };
  for (const auto& s : st.splits) row(s.name, s.samples, s.quadruples);
  row("total", st.sample_count(), st.quadruple_count());
  os << "  implicit elements\n";
  std::size_t total = 0;
  for (auto s : kAllSubsets) {
    os << "    " << subset_name(s) << "  " << st.subset(s) << "\n";
    total += st.subset(s);
  }
  os << "    total  " << total << "\n";
}

}  // namespace quadgen
