#pragma once

// Grammar-constrained decoding over linearized quadruple sequences.
//
// The grammar (from ⟨bos⟩):
//
//   "[" { "⟨" field C1 C2 field S "⟩" } "]" "⟨eos⟩"
//
// C1, C2 and S are walked through the category / subcategory / sentiment tries.
// A field is one or more span tokens, or the single token "null". In the
// aspect field a C1 first-token ends the field; in the opinion field an S
// first-token does. A C1 token can therefore never be the first field token.
// In separator mode "|" ends each field and also follows C2.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/tokens.hpp"
#include "quadgen/trie.hpp"

namespace quadgen {

enum class Phase {
  Start,              // expects "["
  AfterOpenBracket,   // "⟨" or "]"
  AspectField,
  CategoryWalk,
  SubcategoryWalk,
  ExpectSeparator,    // separator mode only, between C2 and the opinion
  OpinionField,
  SentimentWalk,
  ExpectQuadClose,    // "⟩"
  AfterQuadClose,     // "⟨" or "]"
  AfterCloseBracket,  // "⟨eos⟩"
  Done,
};

inline std::string_view phase_name(Phase p);

struct TrieCursor {
  enum class Which { Category, Subcategory, Sentiment };
  Which which = Which::Category;
  std::size_t subtrie = 0;  // index into CategoryTrie::subcategories when Which::Subcategory
  Trie::NodeId node = Trie::kRoot;

  friend bool operator==(const TrieCursor&, const TrieCursor&) = default;
};

/// Position in the grammar plus everything emitted so far. Plain value; one per session.
struct DecodingState {
  Phase phase = Phase::Start;
  std::optional<TrieCursor> cursor;  // set exactly in the three walk phases
  std::size_t field_length = 0;
  bool field_implicit = false;
  TokenSeq history;                  // begins with ⟨bos⟩
  std::size_t steps = 0;
  std::shared_ptr<const std::set<std::string>> copy_source;  // span vocabulary when copy-restricted

  bool done() const noexcept { return phase == Phase::Done; }
};

struct GrammarOptions {
  bool separators = false;
  /// Restrict aspect/opinion tokens to the source sentence plus "null".
  bool copy_restricted = false;
};

/// The candidate-vocabulary state machine, bound to one schema and one scorer
/// vocabulary. Immutable after construction and shareable across sessions.
class QuadGrammar {
 public:
  using TokenId = std::size_t;

  QuadGrammar(const CategorySchema& schema, TokenSeq vocabulary, GrammarOptions opt = {})
      : schema_(schema),
        opt_(opt),
        vocab_(std::move(vocabulary)),
        categories_(build_category_trie(schema)),
        sentiments_(build_sentiment_trie(schema)) {
    for (TokenId i = 0; i < vocab_.size(); ++i)
      if (!index_.emplace(vocab_[i], i).second)
        throw DecodeError("scorer vocabulary has duplicate token '" + vocab_[i] + "'");
    auto require = [&](std::string_view t) {
      if (!index_.count(std::string(t)))
        throw DecodeError("scorer vocabulary is missing required token '" + std::string(t) + "'");
    };
    for (auto t : {tok::kOpenList, tok::kCloseList, tok::kOpenQuad, tok::kCloseQuad, tok::kImplicit, tok::kBos,
                   tok::kEos})
      require(t);
    if (opt_.separators) require(tok::kSeparator);
    for (const auto& t : schema_.symbol_token_set()) require(t);

    for (TokenId i = 0; i < vocab_.size(); ++i)
      if (is_span_token(vocab_[i])) span_ids_.push_back(i);
    for (const auto& [label, _] : categories_.categories.child_map(Trie::kRoot))
      category_first_.push_back(index_.at(label));
    for (const auto& [label, _] : sentiments_.child_map(Trie::kRoot)) sentiment_first_.push_back(index_.at(label));
  }

  const CategorySchema& schema() const noexcept { return schema_; }
  const TokenSeq& vocabulary() const noexcept { return vocab_; }
  const GrammarOptions& options() const noexcept { return opt_; }
  const CategoryTrie& category_trie() const noexcept { return categories_; }
  const Trie& sentiment_trie() const noexcept { return sentiments_; }

  std::optional<TokenId> id_of(std::string_view t) const {
    auto it = index_.find(std::string(t));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Fresh state with history ["⟨bos⟩"]. `source` feeds copy restriction.
  DecodingState initial_state(std::span<const std::string> source = {}) const {
    DecodingState s;
    s.history.emplace_back(tok::kBos);
    if (opt_.copy_restricted) s.copy_source = std::make_shared<const std::set<std::string>>(source.begin(), source.end());
    return s;
  }

  /// Candidate vocabulary V' as token ids (ascending id order). Empty only when Done.
  std::vector<TokenId> allowed_ids(const DecodingState& s) const {
    std::vector<TokenId> out;
    auto push = [&](std::string_view t) { out.push_back(index_.at(std::string(t))); };
    auto push_children = [&](const Trie& t, Trie::NodeId n) {
      for (const auto& [label, _] : t.child_map(n)) out.push_back(index_.at(label));
    };
    switch (s.phase) {
      case Phase::Start: push(tok::kOpenList); break;
      case Phase::AfterOpenBracket:
      case Phase::AfterQuadClose:
        push(tok::kOpenQuad);
        push(tok::kCloseList);
        break;
      case Phase::AspectField:
      case Phase::OpinionField: field_candidates(s, out); break;
      case Phase::CategoryWalk:
      case Phase::SubcategoryWalk:
      case Phase::SentimentWalk: push_children(trie_of(*s.cursor), s.cursor->node); break;
      case Phase::ExpectSeparator: push(tok::kSeparator); break;
      case Phase::ExpectQuadClose: push(tok::kCloseQuad); break;
      case Phase::AfterCloseBracket: push(tok::kEos); break;
      case Phase::Done: break;
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  std::set<std::string> allowed_tokens(const DecodingState& s) const {
    std::set<std::string> out;
    for (auto id : allowed_ids(s)) out.insert(vocab_[id]);
    return out;
  }

  bool allows(const DecodingState& s, std::string_view t) const {
    auto id = id_of(t);
    if (!id) return false;
    auto ids = allowed_ids(s);
    return std::binary_search(ids.begin(), ids.end(), *id);
  }

  /// Next state after emitting `token`. Throws DecodeError if `token` is not in V'.
  DecodingState advance(DecodingState s, std::string_view token) const {
    if (s.done()) throw DecodeError("advance past ⟨eos⟩");
    if (!allows(s, token))
      throw DecodeError("token '" + std::string(token) + "' not allowed in phase " + std::string(phase_name(s.phase)));
    s.history.emplace_back(token);
    ++s.steps;
    const std::string t(token);
    switch (s.phase) {
      case Phase::Start: s.phase = Phase::AfterOpenBracket; break;
      case Phase::AfterOpenBracket:
      case Phase::AfterQuadClose:
        if (t == tok::kOpenQuad)
          enter_field(s, Phase::AspectField);
        else
          s.phase = Phase::AfterCloseBracket;
        break;
      case Phase::AspectField:
        if (opt_.separators ? t == tok::kSeparator : is_category_start(t)) {
          s.phase = Phase::CategoryWalk;
          s.cursor = TrieCursor{TrieCursor::Which::Category, 0, Trie::kRoot};
          if (!opt_.separators) walk(s, t);
        } else {
          extend_field(s, t);
        }
        break;
      case Phase::OpinionField:
        if (opt_.separators ? t == tok::kSeparator : is_sentiment_start(t)) {
          s.phase = Phase::SentimentWalk;
          s.cursor = TrieCursor{TrieCursor::Which::Sentiment, 0, Trie::kRoot};
          if (!opt_.separators) walk(s, t);
        } else {
          extend_field(s, t);
        }
        break;
      case Phase::CategoryWalk:
      case Phase::SubcategoryWalk:
      case Phase::SentimentWalk: walk(s, t); break;
      case Phase::ExpectSeparator: enter_field(s, Phase::OpinionField); break;
      case Phase::ExpectQuadClose: s.phase = Phase::AfterQuadClose; break;
      case Phase::AfterCloseBracket: s.phase = Phase::Done; break;
      case Phase::Done: break;
    }
    return s;
  }

 private:
  const Trie& trie_of(const TrieCursor& c) const {
    switch (c.which) {
      case TrieCursor::Which::Category: return categories_.categories;
      case TrieCursor::Which::Subcategory: return categories_.subcategories.at(c.subtrie);
      case TrieCursor::Which::Sentiment: return sentiments_;
    }
    return sentiments_;
  }

  bool is_category_start(const std::string& t) const {
    return categories_.categories.step(Trie::kRoot, t).has_value();
  }
  bool is_sentiment_start(const std::string& t) const { return sentiments_.step(Trie::kRoot, t).has_value(); }

  static void enter_field(DecodingState& s, Phase p) {
    s.phase = p;
    s.cursor.reset();
    s.field_length = 0;
    s.field_implicit = false;
  }

  static void extend_field(DecodingState& s, const std::string& t) {
    if (s.field_length == 0) s.field_implicit = (t == tok::kImplicit);
    ++s.field_length;
  }

  // Advances the active cursor; on a terminal (always a leaf: symbol sets are
  // prefix-free) moves to the next phase.
  void walk(DecodingState& s, const std::string& t) const {
    auto& c = *s.cursor;
    const Trie& trie = trie_of(c);
    c.node = *trie.step(c.node, t);
    if (!trie.terminal(c.node)) return;
    switch (c.which) {
      case TrieCursor::Which::Category:
        s.phase = Phase::SubcategoryWalk;
        c = TrieCursor{TrieCursor::Which::Subcategory, *trie.payload(c.node), Trie::kRoot};
        break;
      case TrieCursor::Which::Subcategory:
        if (opt_.separators) {
          s.phase = Phase::ExpectSeparator;
          s.cursor.reset();
        } else {
          enter_field(s, Phase::OpinionField);
        }
        break;
      case TrieCursor::Which::Sentiment:
        s.phase = Phase::ExpectQuadClose;
        s.cursor.reset();
        break;
    }
  }

  void field_candidates(const DecodingState& s, std::vector<TokenId>& out) const {
    const auto implicit_id = index_.at(std::string(tok::kImplicit));
    if (s.field_length == 0) {
      if (s.copy_source) {
        for (const auto& t : *s.copy_source)
          if (auto id = id_of(t); id && is_span_token(t)) out.push_back(*id);
      } else {
        out.insert(out.end(), span_ids_.begin(), span_ids_.end());
      }
      out.push_back(implicit_id);
      return;
    }
    if (!s.field_implicit) {
      if (s.copy_source) {
        for (const auto& t : *s.copy_source)
          if (auto id = id_of(t); id && is_span_token(t)) out.push_back(*id);
      } else {
        out.insert(out.end(), span_ids_.begin(), span_ids_.end());
      }
    }
    if (opt_.separators) {
      out.push_back(index_.at(std::string(tok::kSeparator)));
    } else {
      const auto& exits = s.phase == Phase::AspectField ? category_first_ : sentiment_first_;
      out.insert(out.end(), exits.begin(), exits.end());
    }
  }

  CategorySchema schema_;
  GrammarOptions opt_;
  TokenSeq vocab_;
  std::unordered_map<std::string, TokenId> index_;
  CategoryTrie categories_;
  Trie sentiments_;
  std::vector<TokenId> span_ids_;
  std::vector<TokenId> category_first_;
  std::vector<TokenId> sentiment_first_;
};

inline std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::Start: return "Start";
    case Phase::AfterOpenBracket: return "AfterOpenBracket";
    case Phase::AspectField: return "AspectField";
    case Phase::CategoryWalk: return "CategoryWalk";
    case Phase::SubcategoryWalk: return "SubcategoryWalk";
    case Phase::ExpectSeparator: return "ExpectSeparator";
    case Phase::OpinionField: return "OpinionField";
    case Phase::SentimentWalk: return "SentimentWalk";
    case Phase::ExpectQuadClose: return "ExpectQuadClose";
    case Phase::AfterQuadClose: return "AfterQuadClose";
    case Phase::AfterCloseBracket: return "AfterCloseBracket";
    case Phase::Done: return "Done";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Scorers and search

/// Autoregressive token scorer. Per-sentence context (encoder memory) is bound
/// when the scorer is constructed; `history` starts with ⟨bos⟩.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual const TokenSeq& vocabulary() const = 0;
  /// One finite score per vocabulary entry.
  virtual std::vector<double> next_scores(std::span<const std::string> history) = 0;
  /// Whether one instance may serve concurrent sessions.
  virtual bool shareable() const { return false; }
};

struct DecodeResult {
  TokenSeq tokens;  ///< "[" ... "]" without ⟨bos⟩ / ⟨eos⟩ (unconstrained output may be anything)
  bool truncated = false;
};

namespace detail {

inline std::vector<double> checked_scores(Scorer& scorer, std::span<const std::string> history, std::size_t n) {
  auto scores = scorer.next_scores(history);
  if (scores.size() != n) throw DecodeError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                                            std::to_string(n) + " tokens");
  for (double v : scores)
    if (!std::isfinite(v)) throw DecodeError("scorer returned a non-finite score");
  return scores;
}

inline void check_same_vocab(const QuadGrammar& g, const Scorer& scorer) {
  if (g.vocabulary() != scorer.vocabulary()) throw DecodeError("grammar and scorer vocabularies differ");
}

// Highest score wins; exact ties go to the lexicographically smallest token.
template <class Ids>
std::size_t pick_best(const Ids& ids, const std::vector<double>& scores, const TokenSeq& vocab) {
  std::size_t best = *ids.begin();
  for (auto id : ids)
    if (scores[id] > scores[best] || (scores[id] == scores[best] && vocab[id] < vocab[best])) best = id;
  return best;
}

// Rolls an unfinished history back to its last quadruple boundary and closes the
// list, keeping the generated length (without ⟨bos⟩) within max_len.
inline TokenSeq force_close(const TokenSeq& history, std::size_t max_len) {
  std::vector<std::size_t> cuts;  // history lengths right after "[" or "⟩"
  for (std::size_t i = 0; i < history.size(); ++i)
    if (history[i] == tok::kOpenList || history[i] == tok::kCloseQuad) cuts.push_back(i + 1);
  std::size_t keep = 1;
  for (auto it = cuts.rbegin(); it != cuts.rend(); ++it)
    if (*it + 1 <= max_len) {  // (*it - 1) kept tokens + "]" + "⟨eos⟩"
      keep = *it;
      break;
    }
  TokenSeq out(history.begin() + 1, history.begin() + static_cast<std::ptrdiff_t>(keep));
  if (out.empty()) out.emplace_back(tok::kOpenList);
  out.emplace_back(tok::kCloseList);
  return out;
}

inline DecodeResult finish(const DecodingState& s, std::size_t max_len) {
  if (s.done()) return {TokenSeq(s.history.begin() + 1, s.history.end() - 1), false};
  return {force_close(s.history, max_len), true};
}

}  // namespace detail

/// Greedy search restricted to V' at every step. The result always parses. If
/// max_len (counting ⟨eos⟩) is hit first, the unfinished quadruple is dropped and
/// the list closed; `truncated` is set.
inline DecodeResult constrained_greedy_decode(const QuadGrammar& grammar, Scorer& scorer, std::size_t max_len,
                                              std::span<const std::string> source = {}) {
  if (max_len < 4) throw DecodeError("max_len must be at least 4");
  detail::check_same_vocab(grammar, scorer);
  const auto& vocab = grammar.vocabulary();
  auto state = grammar.initial_state(source);
  while (!state.done() && state.steps < max_len) {
    auto scores = detail::checked_scores(scorer, state.history, vocab.size());
    auto best = detail::pick_best(grammar.allowed_ids(state), scores, vocab);
    state = grammar.advance(std::move(state), vocab[best]);
  }
  return detail::finish(state, max_len);
}

/// Plain greedy search over the whole vocabulary; stops at ⟨eos⟩ or max_len.
inline DecodeResult unconstrained_greedy_decode(Scorer& scorer, std::size_t max_len) {
  const auto& vocab = scorer.vocabulary();
  TokenSeq history{std::string(tok::kBos)};
  std::vector<std::size_t> all(vocab.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  bool finished = false;
  while (history.size() - 1 < max_len && !all.empty()) {
    auto scores = detail::checked_scores(scorer, history, vocab.size());
    const auto& t = vocab[detail::pick_best(all, scores, vocab)];
    history.push_back(t);
    if (t == tok::kEos) {
      finished = true;
      break;
    }
  }
  DecodeResult r;
  r.tokens.assign(history.begin() + 1, finished ? history.end() - 1 : history.end());
  r.truncated = !finished;
  return r;
}

/// Beam search over V'. Hypothesis score is the sum of log-softmax over V'.
/// Width 1 reproduces constrained_greedy_decode.
inline DecodeResult constrained_beam_decode(const QuadGrammar& grammar, Scorer& scorer, std::size_t beam_width,
                                            std::size_t max_len, std::span<const std::string> source = {}) {
  if (beam_width < 1) throw DecodeError("beam width must be at least 1");
  if (max_len < 4) throw DecodeError("max_len must be at least 4");
  detail::check_same_vocab(grammar, scorer);
  const auto& vocab = grammar.vocabulary();

  struct Hyp {
    DecodingState state;
    double score = 0.0;
  };
  struct Candidate {
    std::size_t hyp;
    std::optional<std::size_t> token;  // nullopt: finished hypothesis carried over
    double score;
  };

  std::vector<Hyp> beam{{grammar.initial_state(source), 0.0}};
  for (std::size_t step = 0; step < max_len; ++step) {
    if (std::all_of(beam.begin(), beam.end(), [](const Hyp& h) { return h.state.done(); })) break;
    std::vector<Candidate> cands;
    for (std::size_t h = 0; h < beam.size(); ++h) {
      if (beam[h].state.done()) {
        cands.push_back({h, std::nullopt, beam[h].score});
        continue;
      }
      auto scores = detail::checked_scores(scorer, beam[h].state.history, vocab.size());
      auto ids = grammar.allowed_ids(beam[h].state);
      double mx = -std::numeric_limits<double>::infinity();
      for (auto id : ids) mx = std::max(mx, scores[id]);
      double sum = 0.0;
      for (auto id : ids) sum += std::exp(scores[id] - mx);
      const double lse = mx + std::log(sum);
      for (auto id : ids) cands.push_back({h, id, beam[h].score + (scores[id] - lse)});
    }
    auto less_seq = [&](const Candidate& a, const Candidate& b) {
      const auto& ha = beam[a.hyp].state.history;
      const auto& hb = beam[b.hyp].state.history;
      // Compare ha(+token) with hb(+token) lexicographically.
      TokenSeq sa(ha), sb(hb);
      if (a.token) sa.push_back(vocab[*a.token]);
      if (b.token) sb.push_back(vocab[*b.token]);
      return sa < sb;
    };
    const std::size_t keep = std::min(beam_width, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return less_seq(a, b);
                      });
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const auto& c = cands[i];
      if (!c.token) {
        next.push_back(beam[c.hyp]);
      } else {
        next.push_back({grammar.advance(beam[c.hyp].state, vocab[*c.token]), c.score});
      }
    }
    beam = std::move(next);
  }
  return detail::finish(beam.front().state, max_len);
}

}  // namespace quadgen
