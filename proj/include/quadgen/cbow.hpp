#pragma once

// Category bag-of-words: a vocabulary of category/aspect-bearing words and the
// per-sentence count vector fed to the latent category VAE.

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "quadgen/error.hpp"
#include "quadgen/schema.hpp"

namespace quadgen {

inline const std::set<std::string>& default_stopwords() {
  static const std::set<std::string> kWords = {
      "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any", "are", "as",
      "at", "be", "because", "been", "before", "being", "below", "between", "both", "but", "by", "can", "could",
      "did", "do", "does", "doing", "down", "during", "each", "even", "ever", "every", "few", "for", "from",
      "further", "get", "got", "had", "has", "have", "having", "he", "her", "here", "hers", "herself", "him",
      "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me", "more", "most",
      "much", "my", "myself", "no", "nor", "not", "now", "of", "off", "on", "once", "only", "or", "other", "our",
      "ours", "ourselves", "out", "over", "own", "quite", "rather", "really", "same", "she", "should", "so",
      "some", "such", "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
      "they", "this", "those", "through", "to", "too", "under", "until", "up", "us", "very", "was", "we", "were",
      "what", "when", "where", "which", "while", "who", "whom", "why", "will", "with", "would", "you", "your",
      "yours", "yourself", "yourselves", "'s", "n't", "'m", "'re", "'ve", "'ll", "'d", "...", "--"};
  return kWords;
}

inline const std::set<std::string>& default_sentiment_words() {
  static const std::set<std::string> kWords = {
      "amazing", "awesome", "awful", "bad", "beautiful", "best", "better", "bland", "boring", "broken",
      "cheap", "delicious", "disappointed", "disappointing", "excellent", "expensive", "fantastic", "fast",
      "fine", "friendly", "good", "great", "happy", "hate", "horrible", "incredible", "lousy", "love", "loved",
      "mediocre", "nice", "okay", "ok", "overpriced", "perfect", "pleasant", "poor", "rude", "sad", "slow",
      "solid", "terrible", "tasty", "ugly", "unhappy", "wonderful", "worse", "worst", "wrong"};
  return kWords;
}

struct CbowExclusions {
  std::set<std::string> stopwords = default_stopwords();
  std::set<std::string> sentiment_words = default_sentiment_words();
  bool drop_single_char = true;
  bool drop_digits = true;

  /// True for words that never enter the vocabulary.
  bool excludes(const std::string& w) const {
    if (stopwords.count(w) || sentiment_words.count(w)) return true;
    if (drop_single_char && w.size() <= 1) return true;
    if (drop_digits && std::all_of(w.begin(), w.end(), [](unsigned char c) { return std::isdigit(c) != 0; }))
      return true;
    return false;
  }
};

/// Ordered word list; index i is the i-th coordinate of a CbowFeature.
class CbowVocab {
 public:
  CbowVocab() = default;
  explicit CbowVocab(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.empty()) throw DataError("CBoW vocabulary is empty");
    for (std::size_t i = 0; i < words_.size(); ++i)
      if (!index_.emplace(words_[i], i).second) throw DataError("duplicate CBoW word '" + words_[i] + "'");
  }

  std::size_t size() const noexcept { return words_.size(); }
  const std::vector<std::string>& words() const noexcept { return words_; }
  std::optional<std::size_t> index_of(const std::string& w) const {
    auto it = index_.find(w);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// Exclusion lists the vocabulary was built with (empty when loaded from a file).
  CbowExclusions provenance;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Training-corpus words minus the exclusions, kept when seen at least `min_freq`
/// times, in lexicographic order.
inline CbowVocab build_cbow_vocab(std::span<const Sample> train, const CbowExclusions& excl = {},
                                  std::size_t min_freq = 1) {
  if (train.empty()) throw DataError("cannot build a CBoW vocabulary from an empty corpus");
  std::map<std::string, std::size_t> freq;
  for (const auto& s : train)
    for (const auto& w : s.text)
      if (!excl.excludes(w)) ++freq[w];
  std::vector<std::string> words;
  for (const auto& [w, n] : freq)
    if (n >= min_freq) words.push_back(w);
  if (words.empty()) throw DataError("CBoW vocabulary is empty after filtering (min_freq " +
                                     std::to_string(min_freq) + ")");
  CbowVocab v(std::move(words));
  v.provenance = excl;
  return v;
}

using CbowFeature = Eigen::VectorXd;

/// Raw occurrence counts of vocabulary words in `text`; other words are ignored.
inline CbowFeature featurize(std::span<const std::string> text, const CbowVocab& vocab) {
  CbowFeature x = CbowFeature::Zero(static_cast<Eigen::Index>(vocab.size()));
  for (const auto& w : text)
    if (auto i = vocab.index_of(w)) x[static_cast<Eigen::Index>(*i)] += 1.0;
  return x;
}

inline void save_cbow_vocab(const CbowVocab& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  for (const auto& w : v.words()) out << w << '\n';
}

inline CbowVocab load_cbow_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary file '" + path + "'");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) words.push_back(line);
  return CbowVocab(std::move(words));
}

/// One word per line; blank lines and lines starting with '#' are skipped.
inline std::set<std::string> load_word_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open word list '" + path + "'");
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    auto t = split_whitespace(line);
    if (!t.empty() && t.front()[0] != '#') out.insert(to_lower(t.front()));
  }
  return out;
}

}  // namespace quadgen
