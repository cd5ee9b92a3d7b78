#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "quadgen/cbow.hpp"
#include "support.hpp"

using namespace quadgen;

namespace {

Sample sample(const char* text) { return {split_whitespace(text), {}}; }

}  // namespace

TEST(Cbow, ExclusionListsApplied) {
  CbowExclusions ex;
  ex.stopwords = {"the", "is"};
  ex.sentiment_words = {"great"};
  std::vector<Sample> corpus{sample("the battery is great")};
  auto v = build_cbow_vocab(corpus, ex);
  EXPECT_EQ(v.words(), (std::vector<std::string>{"battery"}));
}

TEST(Cbow, MiniCorpusVocabMatchesIndependentScan) {
  auto samples = qtest::mini_samples();
  CbowExclusions ex;
  std::set<std::string> expect;
  for (const auto& s : samples)
    for (const auto& w : s.text) {
      bool digits = !w.empty();
      for (unsigned char c : w) digits = digits && std::isdigit(c);
      if (!ex.stopwords.count(w) && !ex.sentiment_words.count(w) && w.size() > 1 && !digits) expect.insert(w);
    }
  auto v = build_cbow_vocab(samples);
  EXPECT_EQ(v.size(), expect.size());
  EXPECT_EQ(v.words(), (std::vector<std::string>(expect.begin(), expect.end())));
}

TEST(Cbow, MinFreqFiltersAndEmptyVocabThrows) {
  std::vector<Sample> corpus{sample("battery battery screen")};
  CbowExclusions none{{}, {}, false, false};
  EXPECT_EQ(build_cbow_vocab(corpus, none, 2).words(), (std::vector<std::string>{"battery"}));
  EXPECT_THROW(build_cbow_vocab(corpus, none, std::numeric_limits<std::size_t>::max()), DataError);
  EXPECT_THROW(build_cbow_vocab(std::vector<Sample>{}), DataError);
}

TEST(Cbow, FeaturizeCounts) {
  CbowVocab v({"battery", "dies"});
  auto x = featurize(split_whitespace("battery battery dies"), v);
  EXPECT_EQ(x, (Eigen::VectorXd(2) << 2, 1).finished());
  EXPECT_TRUE(featurize(split_whitespace("nothing here"), v).isZero());
}

TEST(Cbow, FeaturizeAgreesWithNaiveCounterAndIsABag) {
  const std::vector<std::string> pool = {"a1", "b2", "c3", "d4", "e5", "zz", "yy"};
  CbowVocab v({"a1", "b2", "c3", "d4", "e5"});
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1), len(0, 15);
  for (int trial = 0; trial < 100; ++trial) {
    TokenSeq text;
    for (auto n = len(rng); n > 0; --n) text.push_back(pool[pick(rng)]);
    auto x = featurize(text, v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      double naive = 0;
      for (const auto& w : text)
        if (w == v.words()[i]) naive += 1;
      EXPECT_EQ(x[static_cast<Eigen::Index>(i)], naive);
    }
    EXPECT_LE(x.sum(), static_cast<double>(text.size()));
    auto shuffled = text;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    EXPECT_EQ(featurize(shuffled, v), x);
  }
}

TEST(Cbow, ExcludedWordsNeverCounted) {
  auto samples = qtest::mini_samples();
  auto v = build_cbow_vocab(samples);
  for (const auto& w : v.words()) {
    EXPECT_FALSE(default_stopwords().count(w)) << w;
    EXPECT_FALSE(default_sentiment_words().count(w)) << w;
  }
  EXPECT_TRUE(featurize(split_whitespace("the delicious was very nice"), v).isZero());
}

TEST(Cbow, DuplicateWordsRejected) { EXPECT_THROW(CbowVocab({"a", "a"}), DataError); }

TEST(Cbow, SaveLoadRoundTrip) {
  auto dir = std::filesystem::temp_directory_path() / "quadgen_cbow_test";
  std::filesystem::create_directories(dir);
  auto v = build_cbow_vocab(qtest::mini_samples());
  save_cbow_vocab(v, (dir / "v.txt").string());
  EXPECT_EQ(load_cbow_vocab((dir / "v.txt").string()).words(), v.words());
  EXPECT_THROW(load_cbow_vocab((dir / "missing.txt").string()), DataError);
  std::filesystem::remove_all(dir);
}
