#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <boost/regex.hpp>

#include <map>
#include <random>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "quadgen/decode.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/tokens.hpp"

namespace qtest {

using namespace quadgen;

inline std::string data_path(const std::string& rel) { return std::string(QUADGEN_DATA_DIR) + "/" + rel; }

inline CategorySchema mini_schema() { return load_schema_file(data_path("mini/schema.txt")); }

inline std::vector<Sample> mini_samples() {
  auto schema = mini_schema();
  auto r = ingest_acos_file(data_path("mini/train.tsv"), default_polarity_map(), &schema);
  if (!r.issues.empty()) throw std::runtime_error("mini corpus has ingestion issues");
  return r.samples;
}

// ---------------------------------------------------------------------------
// Random schemas and quadruples

inline std::string random_symbol(std::mt19937_64& rng, bool allow_underscore) {
  std::uniform_int_distribution<int> letter(0, 5), len(1, 2), parts(1, 2);
  auto piece = [&] {
    std::string s;
    for (int i = len(rng); i > 0; --i) s += static_cast<char>('A' + letter(rng));
    return s;
  };
  std::string s = piece();
  if (allow_underscore)
    for (int i = parts(rng); i > 1; --i) s += "_" + piece();
  return s;
}

/// Small random schema: 1-3 categories, 1-3 subcategories each, 1-3 sentiments.
/// Retries until the schema validates (split mode rejects token-prefix collisions).
inline CategorySchema random_schema(std::mt19937_64& rng, SymbolMode mode = SymbolMode::Single) {
  const bool split = mode == SymbolMode::SplitUnderscore;
  std::uniform_int_distribution<int> count(1, 3);
  for (;;) {
    std::vector<CategorySchema::Entry> entries;
    std::set<std::string> names;
    const int k = count(rng);
    for (int i = 0; i < k; ++i) {
      std::string c1 = "C" + random_symbol(rng, split);
      if (!names.insert(c1).second) continue;
      std::set<std::string> subs;
      const int m = count(rng);
      for (int j = 0; j < m; ++j) subs.insert("S" + random_symbol(rng, split));
      entries.push_back({c1, {subs.begin(), subs.end()}});
    }
    std::set<std::string> pols;
    const int p = count(rng);
    for (int i = 0; i < p; ++i) pols.insert("P" + random_symbol(rng, split));
    try {
      return CategorySchema::create(entries, {pols.begin(), pols.end()}, pols, mode);
    } catch (const SchemaError&) {
    }
  }
}

inline Span random_span(std::mt19937_64& rng, const std::vector<std::string>& words, int max_len = 3) {
  std::uniform_int_distribution<int> len(0, max_len);
  std::uniform_int_distribution<std::size_t> pick(0, words.size() - 1);
  const int n = len(rng);
  if (n == 0) return std::nullopt;
  TokenSeq t;
  for (int i = 0; i < n; ++i) t.push_back(words[pick(rng)]);
  return t;
}

inline std::vector<Quadruple> random_quads(std::mt19937_64& rng, const CategorySchema& schema,
                                           const std::vector<std::string>& words, int max_quads = 4) {
  std::uniform_int_distribution<int> nq(0, max_quads);
  std::vector<Quadruple> out;
  for (int i = nq(rng); i > 0; --i) {
    const auto& cats = schema.categories();
    const auto& c1 = cats[std::uniform_int_distribution<std::size_t>(0, cats.size() - 1)(rng)];
    const auto& subs = schema.subcategories(c1);
    const auto& c2 = subs[std::uniform_int_distribution<std::size_t>(0, subs.size() - 1)(rng)];
    const auto& pols = schema.sentiments();
    const auto& s = pols[std::uniform_int_distribution<std::size_t>(0, pols.size() - 1)(rng)];
    out.push_back({random_span(rng, words), c1, c2, random_span(rng, words), s});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grammar oracle
//
// The output language written directly as a regular expression over one
// character per vocabulary token:
//
//   bos "[" ( "⟨" F C1C2 F S "⟩" )* "]" eos        F = "null" | span+
//
// (with "|" after each field and after C2 in separator mode). A token t is a
// legal continuation of prefix p iff p+t can still be extended to a full match,
// which boost::regex answers via match_partial.

class GrammarRegexOracle {
 public:
  GrammarRegexOracle(const CategorySchema& schema, const TokenSeq& vocab, bool separators,
                     const std::set<std::string>* copy_source = nullptr)
      : vocab_(vocab) {
    static const std::string kAlphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    if (vocab.size() > kAlphabet.size()) throw std::runtime_error("oracle vocabulary too large");
    for (std::size_t i = 0; i < vocab.size(); ++i) code_[vocab[i]] = kAlphabet[i];

    auto seq = [&](const std::string& name) {
      std::string s;
      for (const auto& t : schema.symbol_tokens(name)) s += code_.at(t);
      return s;
    };
    std::string span_class;
    for (const auto& t : vocab) {
      bool lowercase_word = !t.empty();
      for (unsigned char c : t)
        if (std::isupper(c)) lowercase_word = false;
      for (auto r : tok::kReserved)
        if (t == r) lowercase_word = false;
      if (lowercase_word && (!copy_source || copy_source->count(t))) span_class += code_.at(t);
    }
    const std::string field =
        "(?:" + std::string(1, c(tok::kImplicit)) + (span_class.empty() ? "" : "|[" + span_class + "]+") + ")";
    std::string cats, pols;
    for (const auto& c1 : schema.categories())
      for (const auto& c2 : schema.subcategories(c1)) cats += (cats.empty() ? "" : "|") + seq(c1) + seq(c2);
    for (const auto& p : schema.sentiments()) pols += (pols.empty() ? "" : "|") + seq(p);
    const std::string sep = separators ? std::string(1, c(tok::kSeparator)) : "";
    const std::string quad = std::string(1, c(tok::kOpenQuad)) + field + sep + "(?:" + cats + ")" + sep + field + sep +
                             "(?:" + pols + ")" + std::string(1, c(tok::kCloseQuad));
    pattern_ = std::string(1, c(tok::kBos)) + c(tok::kOpenList) + "(?:" + quad + ")*" + c(tok::kCloseList) +
               c(tok::kEos);
    re_ = boost::regex(pattern_);
  }

  /// True when `seq` is a prefix of (or equal to) some sentence of the language.
  bool viable(const TokenSeq& seq) const {
    std::string s;
    for (const auto& t : seq) {
      auto it = code_.find(t);
      if (it == code_.end()) return false;
      s += it->second;
    }
    boost::smatch m;
    return boost::regex_match(s, m, re_, boost::match_default | boost::match_partial);
  }

  bool complete(const TokenSeq& seq) const {
    std::string s;
    for (const auto& t : seq) {
      auto it = code_.find(t);
      if (it == code_.end()) return false;
      s += it->second;
    }
    return boost::regex_match(s, re_);
  }

  std::set<std::string> continuations(const TokenSeq& history) const {
    std::set<std::string> out;
    TokenSeq probe = history;
    probe.emplace_back();
    for (const auto& t : vocab_) {
      probe.back() = t;
      if (viable(probe)) out.insert(t);
    }
    return out;
  }

  const std::string& pattern() const { return pattern_; }

 private:
  char c(std::string_view t) const { return code_.at(std::string(t)); }

  TokenSeq vocab_;
  std::map<std::string, char> code_;
  std::string pattern_;
  boost::regex re_;
};

/// Test vocabulary: reserved tokens, schema symbols, two span words and one
/// uppercase non-symbol token that must never be allowed.
inline TokenSeq oracle_vocab(const CategorySchema& schema) {
  std::set<std::string> v(tok::kReserved.begin(), tok::kReserved.end());
  for (const auto& t : schema.symbol_token_set()) v.insert(t);
  v.insert({"alpha", "beta", "ZZZ"});
  return {v.begin(), v.end()};
}

/// Visits one concrete state for every distinct abstract grammar configuration
/// (phase, trie cursor, field progress) reachable from the start, depth first.
template <class F>
void explore_states(const QuadGrammar& g, F&& visit, std::span<const std::string> source = {},
                    std::size_t max_depth = 40) {
  using Key = std::tuple<int, int, std::size_t, std::size_t, std::size_t, bool>;
  std::set<Key> seen;
  auto key = [](const DecodingState& s) {
    int which = -1;
    std::size_t sub = 0, node = 0;
    if (s.cursor) {
      which = static_cast<int>(s.cursor->which);
      sub = s.cursor->subtrie;
      node = s.cursor->node;
    }
    return Key{static_cast<int>(s.phase), which, sub, node, std::min<std::size_t>(s.field_length, 2),
               s.field_implicit};
  };
  std::vector<DecodingState> stack{g.initial_state(source)};
  while (!stack.empty()) {
    auto s = std::move(stack.back());
    stack.pop_back();
    if (!seen.insert(key(s)).second) continue;
    visit(s);
    if (s.done() || s.history.size() > max_depth) continue;
    for (const auto& t : g.allowed_tokens(s)) stack.push_back(g.advance(s, t));
  }
}

}  // namespace qtest
