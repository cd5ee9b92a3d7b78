#pragma once

// Reference Scorer implementations used by the CLI and the test harnesses.

#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quadgen/decode.hpp"
#include "quadgen/schema.hpp"
#include "quadgen/tokens.hpp"

namespace quadgen {

/// Reserved tokens, schema symbol tokens and the given words, deduplicated and sorted.
inline TokenSeq make_target_vocabulary(const CategorySchema& schema, std::span<const std::string> words,
                                       bool with_separator = true) {
  std::set<std::string> all(words.begin(), words.end());
  for (auto t : tok::kReserved)
    if (with_separator || t != tok::kSeparator) all.emplace(t);
  for (const auto& t : schema.symbol_token_set()) all.insert(t);
  return {all.begin(), all.end()};
}

/// Independent uniform(0,1) score per token per step.
class UniformRandomScorer final : public Scorer {
 public:
  UniformRandomScorer(TokenSeq vocab, std::uint64_t seed) : vocab_(std::move(vocab)), rng_(seed) {}

  const TokenSeq& vocabulary() const override { return vocab_; }

  std::vector<double> next_scores(std::span<const std::string>) override {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> s(vocab_.size());
    for (auto& v : s) v = u(rng_);
    return s;
  }

 private:
  TokenSeq vocab_;
  std::mt19937_64 rng_;
};

/// Teacher-forcing oracle: scores 0 for the gold token at the current position
/// (⟨eos⟩ after the end of `gold`) and -50 elsewhere.
class OracleScorer : public Scorer {
 public:
  OracleScorer(TokenSeq vocab, TokenSeq gold) : vocab_(std::move(vocab)), gold_(std::move(gold)) {
    gold_.emplace_back(tok::kEos);
    for (std::size_t i = 0; i < vocab_.size(); ++i) index_.emplace(vocab_[i], i);
    for (const auto& t : gold_)
      if (!index_.count(t)) throw DecodeError("oracle gold token '" + t + "' not in vocabulary");
  }

  const TokenSeq& vocabulary() const override { return vocab_; }
  bool shareable() const override { return true; }

  std::vector<double> next_scores(std::span<const std::string> history) override {
    // log-probability style: the gold token is certain, so beams cannot prefer short paths
    std::vector<double> s(vocab_.size(), kOff);
    s[index_.at(gold_at(history.size() - 1))] = 0.0;
    return s;
  }

 protected:
  static constexpr double kOff = -50.0;

  const std::string& gold_at(std::size_t pos) const { return pos < gold_.size() ? gold_[pos] : gold_.back(); }
  std::size_t id(const std::string& t) const { return index_.at(t); }
  bool in_vocab(const std::string& t) const { return index_.count(t) != 0; }

 private:
  TokenSeq vocab_;
  TokenSeq gold_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Oracle that, wherever the gold token is a category symbol, scores `bogus`
/// (a symbol outside the schema) above it.
class AdversarialScorer final : public OracleScorer {
 public:
  AdversarialScorer(TokenSeq vocab, TokenSeq gold, const CategorySchema& schema, std::string bogus)
      : OracleScorer(std::move(vocab), std::move(gold)), bogus_(std::move(bogus)) {
    for (const auto& c1 : schema.categories())
      for (auto& t : schema.symbol_tokens(c1)) category_tokens_.insert(std::move(t));
    if (!in_vocab(bogus_)) throw DecodeError("adversarial token '" + bogus_ + "' not in vocabulary");
  }

  std::vector<double> next_scores(std::span<const std::string> history) override {
    auto s = OracleScorer::next_scores(history);
    if (category_tokens_.count(gold_at(history.size() - 1))) s[id(bogus_)] = 1.0;
    return s;
  }

 private:
  std::string bogus_;
  std::set<std::string> category_tokens_;
};

}  // namespace quadgen
