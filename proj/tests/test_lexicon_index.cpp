#include <gtest/gtest.h>

#include <filesystem>
#include <string>
#include <vector>

#include "vdict/dataset.hpp"
#include "vdict/levenshtein.hpp"
#include "vdict/lexicon.hpp"
#include "vdict/metric_index.hpp"
#include "test_util.hpp"

namespace vdict {
namespace {

using testing::expect_error;
using testing::temp_path;

std::string random_word(Rng& rng, std::size_t min_len, std::size_t max_len) {
  std::string w(min_len + rng.below(max_len - min_len + 1), 'a');
  for (char& c : w) c = kAlphabet[rng.below(kAlphabet.size())];
  return w;
}

Lexicon toy_lexicon() { return Lexicon({"tireless", "tiredness", "redness", "kindness", "sadness"}); }

TEST(NormalizeWord, LowercasesAndKeepsValidInput) {
  EXPECT_EQ(normalize_word("Your"), "your");
  EXPECT_EQ(normalize_word("abc1"), "abc1");
}

TEST(NormalizeWord, RejectsBadInput) {
  expect_error(ErrorCode::kInvalidCharacter, [] { normalize_word("a-b"); });
  expect_error(ErrorCode::kEmptyWord, [] { normalize_word(""); });
  expect_error(ErrorCode::kTooLong, [] { normalize_word(std::string(26, 'a')); });
  EXPECT_EQ(normalize_word(std::string(25, 'a')).size(), 25u);
}

TEST(Levenshtein, KnownValues) {
  EXPECT_EQ(levenshtein("tireless", "tireless"), 0);
  EXPECT_EQ(levenshtein("", "abc"), 3);
  EXPECT_EQ(levenshtein("tirelness", "tireless"), 1);
  EXPECT_EQ(levenshtein("tirelness", "tiredness"), 1);
  EXPECT_EQ(levenshtein("your", "pour"), 1);
  EXPECT_EQ(levenshtein("kitten", "sitting"), 3);
}

TEST(Levenshtein, MetricAxiomsOnRandomTriples) {
  Rng rng(101);
  for (int i = 0; i < 2000; ++i) {
    const std::string a = random_word(rng, 0, 8), b = random_word(rng, 0, 8), c = random_word(rng, 0, 8);
    EXPECT_EQ(levenshtein(a, b), levenshtein(b, a));
    EXPECT_EQ(levenshtein(a, b) == 0, a == b);
    EXPECT_LE(levenshtein(a, c), levenshtein(a, b) + levenshtein(b, c));
  }
}

TEST(Lexicon, ParsesSkippingCommentsAndCollapsingDuplicates) {
  const Lexicon lex = Lexicon::parse("# header\nHello\n\nworld\r\nhello\n  pad  \n");
  EXPECT_EQ(lex.words(), (std::vector<std::string>{"hello", "world", "pad"}));
  EXPECT_TRUE(lex.contains("world"));
  EXPECT_FALSE(lex.contains("Hello"));
}

TEST(Lexicon, FailsLoud) {
  expect_error(ErrorCode::kEmptyLexicon, [] { Lexicon::parse("# only a comment\n"); });
  expect_error(ErrorCode::kInvalidCharacter, [] { Lexicon::parse("good\nba d\n"); });
  expect_error(ErrorCode::kIoError, [] { Lexicon::load("/nonexistent/dir/lexicon.txt"); });
}

TEST(Lexicon, SaveLoadRoundTrip) {
  const auto path = temp_path("lex.txt");
  const Lexicon lex = generate_random_lexicon(50, 9);
  lex.save(path.string());
  const Lexicon back = Lexicon::load(path.string());
  EXPECT_EQ(back.words(), lex.words());
  EXPECT_EQ(back.digest(), lex.digest());
  std::filesystem::remove(path);
}

TEST(MetricIndex, ToyExamples) {
  const MetricIndex index(toy_lexicon());
  EXPECT_EQ(index.word_count(), 5u);

  const auto top2 = index.top_n("tirelness", 2);
  ASSERT_EQ(top2.size(), 2u);
  EXPECT_EQ(top2[0].word, "tiredness");
  EXPECT_EQ(top2[0].distance, 1);
  EXPECT_EQ(top2[1].word, "tireless");
  EXPECT_EQ(top2[1].distance, 1);

  const auto exact = index.top_n("redness", 1);
  ASSERT_EQ(exact.size(), 1u);
  EXPECT_EQ(exact[0].word, "redness");
  EXPECT_EQ(exact[0].distance, 0);

  EXPECT_EQ(index.top_n("tirelness", 300).size(), 5u);
}

TEST(MetricIndex, EmptyQueryRanksByLength) {
  const MetricIndex index(toy_lexicon());
  const auto all = index.top_n("", 5);
  EXPECT_EQ(all.front().word, "redness");
  EXPECT_EQ(all.front().distance, 7);
}

TEST(MetricIndex, MatchesBruteForceOnRandomLexicons) {
  Rng rng(77);
  for (std::size_t size : {10u, 100u, 1000u, 3000u}) {
    const Lexicon lex = generate_random_lexicon(size, size);
    const MetricIndex index(lex);
    for (int q = 0; q < 60; ++q) {
      const std::string query = random_word(rng, 0, 12);
      const std::size_t n = 1 + rng.below(40);
      const auto got = index.top_n(query, n);
      const auto want = brute_force_top_n(lex.words(), query, n);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].word, want[i].word) << "query " << query << " rank " << i;
        EXPECT_EQ(got[i].distance, want[i].distance);
      }
    }
  }
}

TEST(MetricIndex, ResultsForNArePrefixOfResultsForNPlusOne) {
  const Lexicon lex = generate_random_lexicon(500, 4);
  const MetricIndex index(lex);
  Rng rng(5);
  for (int q = 0; q < 20; ++q) {
    const std::string query = random_word(rng, 1, 10);
    auto prev = index.top_n(query, 1);
    for (std::size_t n = 2; n <= 30; ++n) {
      const auto next = index.top_n(query, n);
      ASSERT_EQ(next.size(), prev.size() + 1);
      for (std::size_t i = 0; i < prev.size(); ++i) EXPECT_EQ(next[i].word, prev[i].word);
      prev = next;
    }
  }
}

TEST(MetricIndex, BuildIsDeterministic) {
  const Lexicon lex = generate_random_lexicon(300, 8);
  EXPECT_EQ(MetricIndex(lex).serialize(), MetricIndex(lex).serialize());
}

TEST(MetricIndex, CacheRoundTripAndRejection) {
  const auto path = temp_path("index.vdix");
  const Lexicon lex = generate_random_lexicon(200, 2);
  const MetricIndex built(lex);
  built.save(path.string());

  const MetricIndex loaded = MetricIndex::load(path.string(), lex.digest());
  EXPECT_EQ(loaded.serialize(), built.serialize());
  EXPECT_EQ(loaded.top_n("abc", 7).front().word, built.top_n("abc", 7).front().word);

  const Lexicon other = generate_random_lexicon(200, 3);
  expect_error(ErrorCode::kVersionMismatch, [&] { MetricIndex::load(path.string(), other.digest()); });

  // A stale cache is rebuilt and rewritten for the new lexicon.
  const MetricIndex rebuilt = MetricIndex::load_or_build(path.string(), other);
  EXPECT_EQ(rebuilt.source_digest(), other.digest());
  EXPECT_EQ(MetricIndex::load(path.string(), other.digest()).serialize(), rebuilt.serialize());

  auto bytes = rebuilt.serialize();
  bytes.resize(bytes.size() / 2);
  ByteWriter::write_file(path.string(), bytes);
  expect_error(ErrorCode::kCorruptFile, [&] { MetricIndex::load(path.string(), other.digest()); });
  std::filesystem::remove(path);
}

TEST(MetricIndex, EmptyLexiconRejected) {
  expect_error(ErrorCode::kEmptyLexicon, [] { MetricIndex{Lexicon()}; });
}

}  // namespace
}  // namespace vdict
