#pragma once

// Quadruple list <-> linearized target sequence.
//
//   [ ⟨ aspect C1 C2 opinion S ⟩ ⟨ ... ⟩ ]
//
// Fields are adjacent. Spans are lowercase and schema symbols carry no lowercase
// letters, so the first category token closes the aspect and the first sentiment
// token closes the opinion. Implicit spans are the single token "null".
// With separators enabled the body becomes "aspect | C1 C2 | opinion | S".

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/tokens.hpp"

namespace quadgen {

struct LinearizeOptions {
  bool separators = false;
};

namespace detail {

inline void append_span(TokenSeq& out, const Span& span, const char* field) {
  if (!span) {
    out.emplace_back(tok::kImplicit);
    return;
  }
  if (span->empty()) throw SchemaError(std::string("empty explicit ") + field);
  for (const auto& t : *span) {
    if (!is_span_token(t))
      throw SchemaError(std::string(field) + " token '" + t + "' is reserved or not lowercase");
    out.push_back(t);
  }
}

inline void append_symbol(TokenSeq& out, const CategorySchema& schema, const std::string& name) {
  for (auto& t : schema.symbol_tokens(name)) out.push_back(std::move(t));
}

}  // namespace detail

/// Throws SchemaError for quadruples outside the schema or spans holding reserved
/// or uppercase tokens.
inline TokenSeq linearize(std::span<const Quadruple> quads, const CategorySchema& schema,
                          LinearizeOptions opt = {}) {
  TokenSeq out;
  out.emplace_back(tok::kOpenList);
  for (const auto& q : quads) {
    validate(q, schema);
    out.emplace_back(tok::kOpenQuad);
    detail::append_span(out, q.aspect, "aspect");
    if (opt.separators) out.emplace_back(tok::kSeparator);
    detail::append_symbol(out, schema, q.category);
    detail::append_symbol(out, schema, q.subcategory);
    if (opt.separators) out.emplace_back(tok::kSeparator);
    detail::append_span(out, q.opinion, "opinion");
    if (opt.separators) out.emplace_back(tok::kSeparator);
    detail::append_symbol(out, schema, q.sentiment);
    out.emplace_back(tok::kCloseQuad);
  }
  out.emplace_back(tok::kCloseList);
  return out;
}

struct PartialParse {
  std::vector<Quadruple> quads;    ///< quadruples completed before the error
  std::optional<ParseError> error;
};

namespace detail {

class QuadParser {
 public:
  QuadParser(std::span<const std::string> seq, const CategorySchema& schema, LinearizeOptions opt)
      : seq_(seq), schema_(schema), opt_(opt) {}

  PartialParse run() {
    PartialParse out;
    try {
      if (pos_ < seq_.size() && seq_[pos_] == tok::kBos) ++pos_;
      expect(tok::kOpenList, "expected '['");
      while (true) {
        if (at_end()) fail("unterminated list, expected '⟨' or ']'");
        if (seq_[pos_] == tok::kCloseList) {
          ++pos_;
          break;
        }
        if (seq_[pos_] != tok::kOpenQuad) fail("expected '⟨' or ']', got '" + seq_[pos_] + "'");
        ++pos_;
        out.quads.push_back(quad());
      }
      if (!at_end() && seq_[pos_] == tok::kEos) ++pos_;
      if (!at_end()) fail("trailing token '" + seq_[pos_] + "' after ']'");
    } catch (const ParseError& e) {
      out.error = e;
    }
    return out;
  }

 private:
  bool at_end() const { return pos_ >= seq_.size(); }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(pos_, what); }

  void expect(std::string_view t, const char* what) {
    if (at_end() || seq_[pos_] != t) fail(what);
    ++pos_;
  }

  // Matches one of `names` at the cursor (symbol sets are prefix-free).
  std::optional<std::string> match_symbol(const std::vector<std::string>& names) const {
    for (const auto& n : names) {
      auto toks = schema_.symbol_tokens(n);
      if (pos_ + toks.size() <= seq_.size() &&
          std::equal(toks.begin(), toks.end(), seq_.begin() + static_cast<std::ptrdiff_t>(pos_)))
        return n;
    }
    return std::nullopt;
  }

  bool starts_symbol(const std::vector<std::string>& names) const {
    for (const auto& n : names)
      if (schema_.symbol_tokens(n).front() == seq_[pos_]) return true;
    return false;
  }

  Span field(const std::vector<std::string>& terminators, const char* name) {
    TokenSeq tokens;
    while (true) {
      if (at_end()) fail(std::string("unterminated ") + name);
      const auto& t = seq_[pos_];
      if (opt_.separators ? t == tok::kSeparator : starts_symbol(terminators)) break;
      if (t == tok::kImplicit && tokens.empty()) {
        tokens.push_back(t);
        ++pos_;
        continue;
      }
      if (!is_span_token(t) || (!tokens.empty() && tokens.front() == tok::kImplicit))
        fail(std::string("token '") + t + "' cannot appear in " + name);
      tokens.push_back(t);
      ++pos_;
    }
    if (tokens.empty()) fail(std::string("empty ") + name);
    if (opt_.separators) ++pos_;
    if (tokens.size() == 1 && tokens.front() == tok::kImplicit) return std::nullopt;
    return tokens;
  }

  std::string symbol(const std::vector<std::string>& names, const char* what) {
    if (at_end()) fail(std::string("missing ") + what);
    auto m = match_symbol(names);
    if (!m) fail(std::string("unknown ") + what + " '" + seq_[pos_] + "'");
    pos_ += schema_.symbol_tokens(*m).size();
    return *m;
  }

  Quadruple quad() {
    Quadruple q;
    q.aspect = field(schema_.categories(), "aspect");
    q.category = symbol(schema_.categories(), "category");
    q.subcategory = symbol(schema_.subcategories(q.category), "subcategory");
    if (opt_.separators) expect(tok::kSeparator, "expected '|'");
    q.opinion = field(schema_.sentiments(), "opinion");
    q.sentiment = symbol(schema_.sentiments(), "sentiment");
    expect(tok::kCloseQuad, "expected '⟩'");
    return q;
  }

  std::span<const std::string> seq_;
  const CategorySchema& schema_;
  LinearizeOptions opt_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Parses as far as possible; `error` holds the earliest failure, if any.
/// An optional leading "⟨bos⟩" and trailing "⟨eos⟩" are accepted.
inline PartialParse parse_partial(std::span<const std::string> seq, const CategorySchema& schema,
                                  LinearizeOptions opt = {}) {
  return detail::QuadParser(seq, schema, opt).run();
}

/// Inverse of linearize. Throws ParseError carrying the earliest offending token index.
inline std::vector<Quadruple> parse(std::span<const std::string> seq, const CategorySchema& schema,
                                    LinearizeOptions opt = {}) {
  auto r = parse_partial(seq, schema, opt);
  if (r.error) throw *r.error;
  return std::move(r.quads);
}

/// True when `seq` parses and every quadruple satisfies the schema.
inline bool is_valid_sequence(std::span<const std::string> seq, const CategorySchema& schema,
                              LinearizeOptions opt = {}) {
  auto r = parse_partial(seq, schema, opt);
  return !r.error.has_value();
}

}  // namespace quadgen
