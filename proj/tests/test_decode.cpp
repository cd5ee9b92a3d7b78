#include <gtest/gtest.h>

#include <random>

#include "quadgen/decode.hpp"
#include "quadgen/linearize.hpp"
#include "quadgen/scorers.hpp"
#include "support.hpp"

using namespace quadgen;

namespace {

CategorySchema laptop_schema() {
  return CategorySchema::create({{"HARDWARE", {"USABILITY", "PORTABILITY", "QUALITY"}}, {"BATTERY", {"GENERAL"}}},
                                {"POSITIVE", "NEGATIVE", "NEUTRAL"});
}

const TokenSeq kWords = {"battery", "screen", "great", "weak", ","};

TokenSeq vocab_for(const CategorySchema& s) { return make_target_vocabulary(s, kWords); }

DecodingState walk(const QuadGrammar& g, const char* text) {
  auto s = g.initial_state();
  for (const auto& t : split_whitespace(text)) s = g.advance(s, t);
  return s;
}

std::set<std::string> span_set(const CategorySchema& s) {
  std::set<std::string> out;
  for (const auto& t : vocab_for(s))
    if (is_span_token(t)) out.insert(t);
  return out;
}

// Every reachable abstract state of `g` agrees with the regex oracle.
void check_against_oracle(const CategorySchema& schema, bool separators, bool copy) {
  auto vocab = qtest::oracle_vocab(schema);
  const TokenSeq source = {"alpha", "gamma"};
  std::set<std::string> copy_set(source.begin(), source.end());
  QuadGrammar g(schema, vocab, {.separators = separators, .copy_restricted = copy});
  qtest::GrammarRegexOracle oracle(schema, vocab, separators, copy ? &copy_set : nullptr);
  std::size_t states = 0;
  qtest::explore_states(
      g,
      [&](const DecodingState& s) {
        ++states;
        ASSERT_EQ(g.allowed_tokens(s), oracle.continuations(s.history))
            << "pattern " << oracle.pattern() << " history " << join(s.history);
        if (s.done()) {
          EXPECT_TRUE(oracle.complete(s.history));
        }
      },
      source);
  EXPECT_GT(states, 10u);
}

}  // namespace

TEST(Grammar, AfterOpenBracket) {
  QuadGrammar g(laptop_schema(), vocab_for(laptop_schema()));
  EXPECT_EQ(g.allowed_tokens(g.initial_state()), (std::set<std::string>{"["}));
  EXPECT_EQ(g.allowed_tokens(walk(g, "[")), (std::set<std::string>{"⟨", "]"}));
}

TEST(Grammar, SubcategoryWalkAfterHardware) {
  QuadGrammar g(laptop_schema(), vocab_for(laptop_schema()));
  auto s = walk(g, "[ ⟨ battery HARDWARE");
  EXPECT_EQ(s.phase, Phase::SubcategoryWalk);
  ASSERT_TRUE(s.cursor);
  EXPECT_EQ(s.cursor->which, TrieCursor::Which::Subcategory);
  EXPECT_EQ(g.allowed_tokens(s), (std::set<std::string>{"PORTABILITY", "QUALITY", "USABILITY"}));
}

TEST(Grammar, FieldsOfferAllSpanTokensPlusExits) {
  auto schema = laptop_schema();
  QuadGrammar g(schema, vocab_for(schema));
  auto expect = span_set(schema);
  expect.insert("null");
  EXPECT_EQ(g.allowed_tokens(walk(g, "[ ⟨")), expect);
  auto after_word = span_set(schema);
  after_word.insert({"BATTERY", "HARDWARE"});
  EXPECT_EQ(g.allowed_tokens(walk(g, "[ ⟨ screen")), after_word);
  EXPECT_EQ(g.allowed_tokens(walk(g, "[ ⟨ null")), (std::set<std::string>{"BATTERY", "HARDWARE"}));
  auto opinion = span_set(schema);
  opinion.insert({"NEGATIVE", "NEUTRAL", "POSITIVE"});
  EXPECT_EQ(g.allowed_tokens(walk(g, "[ ⟨ null HARDWARE QUALITY weak")), opinion);
}

TEST(Grammar, SentimentThenQuadCloseThenEos) {
  QuadGrammar g(laptop_schema(), vocab_for(laptop_schema()));
  auto s = walk(g, "[ ⟨ null BATTERY GENERAL weak POSITIVE");
  EXPECT_EQ(s.phase, Phase::ExpectQuadClose);
  EXPECT_EQ(g.allowed_tokens(s), (std::set<std::string>{"⟩"}));
  auto e = walk(g, "[ ]");
  EXPECT_EQ(e.phase, Phase::AfterCloseBracket);
  EXPECT_EQ(g.allowed_tokens(e), (std::set<std::string>{"⟨eos⟩"}));
  auto d = g.advance(e, "⟨eos⟩");
  EXPECT_TRUE(d.done());
  EXPECT_TRUE(g.allowed_tokens(d).empty());
  EXPECT_THROW(g.advance(d, "["), DecodeError);
}

TEST(Grammar, DisallowedTokenThrows) {
  QuadGrammar g(laptop_schema(), vocab_for(laptop_schema()));
  EXPECT_THROW(g.advance(g.initial_state(), "⟨"), DecodeError);
  EXPECT_THROW(walk(g, "[ ⟨ battery HARDWARE GENERAL"), DecodeError);
  EXPECT_THROW(walk(g, "[ ⟨ null battery"), DecodeError);
  EXPECT_THROW(walk(g, "[ ⟨ battery nope"), DecodeError);
}

TEST(Grammar, MissingRequiredTokenIsConfigError) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  vocab.erase(std::find(vocab.begin(), vocab.end(), "⟨eos⟩"));
  EXPECT_THROW(QuadGrammar(schema, vocab), DecodeError);
  auto no_cat = vocab_for(schema);
  no_cat.erase(std::find(no_cat.begin(), no_cat.end(), "HARDWARE"));
  EXPECT_THROW(QuadGrammar(schema, no_cat), DecodeError);
  auto no_sep = make_target_vocabulary(schema, kWords, false);
  EXPECT_NO_THROW(QuadGrammar(schema, no_sep));
  EXPECT_THROW(QuadGrammar(schema, no_sep, {.separators = true}), DecodeError);
}

TEST(Grammar, CopyRestrictionLimitsSpanTokens) {
  auto schema = laptop_schema();
  QuadGrammar g(schema, vocab_for(schema), {.copy_restricted = true});
  const TokenSeq src = {"the", "screen", "is", "great"};
  auto s = g.advance(g.advance(g.initial_state(src), "["), "⟨");
  EXPECT_EQ(g.allowed_tokens(s), (std::set<std::string>{"great", "null", "screen"}));
}

TEST(Grammar, MatchesRegexOracleOnRandomSchemas) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const auto mode = trial % 2 ? SymbolMode::SplitUnderscore : SymbolMode::Single;
    auto schema = qtest::random_schema(rng, mode);
    const bool sep = trial % 3 == 1;
    const bool copy = trial % 4 == 3;
    SCOPED_TRACE(schema.to_text());
    check_against_oracle(schema, sep, copy);
    if (HasFatalFailure()) return;
  }
}

TEST(Grammar, OracleSanity) {
  // The oracle itself must accept linearize output and reject a wrong category order.
  auto schema = laptop_schema();
  auto vocab = qtest::oracle_vocab(schema);
  qtest::GrammarRegexOracle oracle(schema, vocab, false);
  TokenSeq ok = {"⟨bos⟩", "[", "⟨", "alpha", "HARDWARE", "QUALITY", "null", "POSITIVE", "⟩", "]", "⟨eos⟩"};
  EXPECT_TRUE(oracle.complete(ok));
  TokenSeq bad = ok;
  std::swap(bad[4], bad[5]);
  EXPECT_FALSE(oracle.viable(bad));
  EXPECT_FALSE(oracle.viable({"⟨bos⟩", "[", "⟨", "ZZZ"}));
}

// ---------------------------------------------------------------------------
// Search

TEST(Decode, RandomScorerAlwaysProducesValidOutput) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab);
  std::size_t valid_unconstrained = 0;
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    UniformRandomScorer a(vocab, seed), b(vocab, seed);
    auto r = constrained_greedy_decode(g, a, 64);
    EXPECT_TRUE(is_valid_sequence(r.tokens, schema)) << join(r.tokens);
    EXPECT_LE(r.tokens.size() + 1, 64u);
    auto u = unconstrained_greedy_decode(b, 64);
    if (!u.truncated && is_valid_sequence(u.tokens, schema)) ++valid_unconstrained;
  }
  EXPECT_LT(valid_unconstrained, 300u);
}

TEST(Decode, OracleScorerReproducesGold) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab);
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    auto gold = linearize(qtest::random_quads(rng, schema, kWords), schema);
    OracleScorer a(vocab, gold), b(vocab, gold), c(vocab, gold);
    EXPECT_EQ(constrained_greedy_decode(g, a, 256).tokens, gold);
    EXPECT_EQ(unconstrained_greedy_decode(b, 256).tokens, gold);
    EXPECT_EQ(constrained_beam_decode(g, c, 3, 256).tokens, gold);
  }
}

TEST(Decode, AdversarialScorerOnlyFoolsUnconstrained) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  vocab.push_back("SCREEN");
  QuadGrammar g(schema, vocab);
  std::vector<Quadruple> q{{TokenSeq{"battery"}, "BATTERY", "GENERAL", TokenSeq{"weak"}, "NEGATIVE"}};
  auto gold = linearize(q, schema);
  AdversarialScorer a(vocab, gold, schema, "SCREEN"), b(vocab, gold, schema, "SCREEN");
  auto c = constrained_greedy_decode(g, a, 64);
  auto u = unconstrained_greedy_decode(b, 64);
  EXPECT_TRUE(is_valid_sequence(c.tokens, schema));
  EXPECT_EQ(std::count(c.tokens.begin(), c.tokens.end(), "SCREEN"), 0);
  EXPECT_GT(std::count(u.tokens.begin(), u.tokens.end(), "SCREEN"), 0);
  EXPECT_FALSE(is_valid_sequence(u.tokens, schema));
}

TEST(Decode, BeamWidthOneEqualsGreedy) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    UniformRandomScorer a(vocab, seed), b(vocab, seed);
    EXPECT_EQ(constrained_greedy_decode(g, a, 48).tokens, constrained_beam_decode(g, b, 1, 48).tokens) << seed;
  }
}

TEST(Decode, BeamWidthFourAlwaysParses) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab, {.separators = true});
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    UniformRandomScorer a(vocab, seed);
    auto r = constrained_beam_decode(g, a, 4, 40);
    EXPECT_TRUE(is_valid_sequence(r.tokens, schema, {.separators = true})) << join(r.tokens);
  }
}

TEST(Decode, MaskThenArgmaxEqualsRestrictedArgmax) {
  // Equivalent formulation: set scores outside V' to -inf and take the global argmax.
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    UniformRandomScorer a(vocab, seed), b(vocab, seed);
    auto expect = constrained_greedy_decode(g, a, 48).tokens;
    auto s = g.initial_state();
    while (!s.done() && s.steps < 48) {
      auto scores = b.next_scores(s.history);
      auto allowed = g.allowed_tokens(s);
      std::size_t best = 0;
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < vocab.size(); ++i) {
        const double v = allowed.count(vocab[i]) ? scores[i] : -std::numeric_limits<double>::infinity();
        if (v > top) top = v, best = i;
      }
      s = g.advance(s, vocab[best]);
    }
    if (s.done()) {
      EXPECT_EQ(TokenSeq(s.history.begin() + 1, s.history.end() - 1), expect);
    }
  }
}

TEST(Decode, TruncationClosesAtQuadBoundary) {
  auto schema = laptop_schema();
  auto vocab = vocab_for(schema);
  QuadGrammar g(schema, vocab);
  std::vector<Quadruple> q(6, {TokenSeq{"battery", "screen"}, "HARDWARE", "QUALITY", TokenSeq{"weak"}, "NEGATIVE"});
  auto gold = linearize(q, schema);
  for (std::size_t max_len = 4; max_len < gold.size() + 3; ++max_len) {
    OracleScorer a(vocab, gold);
    auto r = constrained_greedy_decode(g, a, max_len);
    EXPECT_LE(r.tokens.size() + 1, max_len);
    auto parsed = parse(r.tokens, schema);
    EXPECT_EQ(r.truncated, parsed.size() < q.size());
    for (const auto& p : parsed) EXPECT_EQ(p, q[0]);
  }
  OracleScorer a(vocab, gold);
  EXPECT_THROW(constrained_greedy_decode(g, a, 3), DecodeError);
}

TEST(Decode, TiesGoToSmallestToken) {
  struct Flat : Scorer {
    TokenSeq v;
    const TokenSeq& vocabulary() const override { return v; }
    std::vector<double> next_scores(std::span<const std::string>) override { return std::vector<double>(v.size()); }
  };
  auto schema = laptop_schema();
  Flat f;
  f.v = vocab_for(schema);
  QuadGrammar g(schema, f.v);
  auto r = constrained_greedy_decode(g, f, 10);
  // "]" < "⟨" bytewise, so the list closes immediately
  EXPECT_EQ(r.tokens, (TokenSeq{"[", "]"}));
}

TEST(Decode, ScorerContractViolations) {
  struct Bad : Scorer {
    TokenSeq v;
    std::size_t n;
    double value;
    const TokenSeq& vocabulary() const override { return v; }
    std::vector<double> next_scores(std::span<const std::string>) override { return std::vector<double>(n, value); }
  };
  auto schema = laptop_schema();
  Bad b;
  b.v = vocab_for(schema);
  b.n = b.v.size() - 1;
  b.value = 0.0;
  QuadGrammar g(schema, b.v);
  EXPECT_THROW(constrained_greedy_decode(g, b, 10), DecodeError);
  b.n = b.v.size();
  b.value = std::nan("");
  EXPECT_THROW(constrained_greedy_decode(g, b, 10), DecodeError);
  UniformRandomScorer other(make_target_vocabulary(schema, {}), 1);
  EXPECT_THROW(constrained_greedy_decode(g, other, 10), DecodeError);
}
