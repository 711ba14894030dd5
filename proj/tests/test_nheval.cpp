#include <doctest.h>

#include <random>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/metrics.hpp"
#include "halluprobe/nheval.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace halluprobe;
using namespace halluprobe::nheval;

namespace {

TranslationSet set_of(std::vector<std::string> translations) {
  TranslationSet set;
  for (auto& t : translations) {
    TranslationEntry entry;
    entry.source = "src";
    entry.translation = std::move(t);
    set.entries.push_back(std::move(entry));
  }
  return set;
}

// An oscillatory output in the shape the noisy models produce: one 4-gram
// ("has turned to the") repeating three times.
const std::string kOscillatory =
    "the town , for instance , has turned to the east coast , but has turned to the same "
    "place as the town , and has turned to the old ways .";

}  // namespace

TEST_SUITE("nheval") {

TEST_CASE("irs_repeats: planted matches and misses") {
  auto translations = set_of({"alpha beta", "gamma delta", "epsilon zeta"});
  std::vector<std::string> all_planted{"alpha beta", "gamma delta", "epsilon zeta", "extra"};
  CHECK(irs_repeats(translations, all_planted) == doctest::Approx(100.0));

  std::vector<std::string> disjoint{"nothing", "matches"};
  CHECK(irs_repeats(translations, disjoint) == doctest::Approx(0.0));

  std::vector<std::string> one{"gamma delta"};
  CHECK(irs_repeats(translations, one) == doctest::Approx(100.0 / 3.0));

  // whitespace-normalized exact match, no casefolding
  std::vector<std::string> spaced{"alpha  beta"};
  CHECK(irs_repeats(translations, spaced) == doctest::Approx(100.0 / 3.0));
  std::vector<std::string> cased{"Alpha beta"};
  CHECK(irs_repeats(translations, cased) == doctest::Approx(0.0));
}

TEST_CASE("irs_repeats: invariant under permutations") {
  std::mt19937_64 rng(3);
  std::vector<std::string> targets;
  std::vector<std::string> translations;
  for (int i = 0; i < 30; ++i) {
    targets.push_back(test_support::random_sentence(rng, 6, 12));
    translations.push_back(i % 3 == 0 ? targets.back()
                                      : test_support::random_sentence(rng, 6, 12));
  }
  const double value = irs_repeats(set_of(translations), targets);
  std::shuffle(targets.begin(), targets.end(), rng);
  std::shuffle(translations.begin(), translations.end(), rng);
  CHECK(irs_repeats(set_of(translations), targets) == doctest::Approx(value));
}

TEST_CASE("unique_bigram_fraction: frozen and boundary cases") {
  CHECK(unique_bigram_fraction(set_of({"a b a b a"})) == doctest::Approx(0.5));
  CHECK(unique_bigram_fraction(set_of({"all tokens fully distinct here"})) ==
        doctest::Approx(1.0));
  CHECK(unique_bigram_fraction(set_of({"word"})) == doctest::Approx(1.0));
  CHECK(unique_bigram_fraction(set_of({""})) == doctest::Approx(1.0));
  CHECK(unique_bigram_fraction(set_of({"a b a b a", "c d e"})) == doctest::Approx(0.75));
  CHECK_THROWS_AS(unique_bigram_fraction(TranslationSet{}), ConfigError);
}

TEST_CASE("unique_bigram_fraction: strictly decreases when a repeat appears") {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    // build a sentence with all-distinct tokens, then append a repeated bigram
    std::vector<std::string> tokens;
    for (int j = 0; j < 6; ++j) tokens.push_back("tok" + std::to_string(j));
    std::string clean;
    for (std::size_t j = 0; j < tokens.size(); ++j) {
      if (j) clean.push_back(' ');
      clean += tokens[j];
    }
    const std::string repeated = clean + " tok0 tok1";  // re-introduces bigram (tok0, tok1)
    CHECK(unique_bigram_fraction(set_of({repeated})) <
          unique_bigram_fraction(set_of({clean})));
  }
}

TEST_CASE("top_ngram_counts: oscillatory output dominates") {
  auto counts = top_ngram_counts(set_of({kOscillatory}), 4, 5);
  REQUIRE_FALSE(counts.empty());
  CHECK(counts[0].first == "has turned to the");
  CHECK(counts[0].second == 3);
  for (std::size_t i = 1; i < counts.size(); ++i) CHECK(counts[i].second < 3);
}

TEST_CASE("top_ngram_counts: tiny sentence and lexicographic ties") {
  auto counts = top_ngram_counts(set_of({"a b c"}), 2, 5);
  REQUIRE(counts.size() == 2);
  CHECK(counts[0] == std::pair<std::string, std::int64_t>{"a b", 1});
  CHECK(counts[1] == std::pair<std::string, std::int64_t>{"b c", 1});
}

TEST_CASE("top_ngram_counts: pooled counts equal merged per-sentence counts") {
  std::mt19937_64 rng(7);
  std::vector<std::string> sentences;
  for (int i = 0; i < 20; ++i) sentences.push_back(test_support::random_sentence(rng, 10, 5));

  auto pooled = top_ngram_counts(set_of(sentences), 2, 1000);

  std::map<oracle::Tokens, long> merged;
  for (const auto& s : sentences) {
    for (const auto& [gram, count] : oracle::count_ngrams(oracle::split_words(s), 2)) {
      merged[gram] += count;
    }
  }
  REQUIRE(pooled.size() == merged.size());
  for (const auto& [gram, count] : pooled) {
    oracle::Tokens key = oracle::split_words(gram);
    CHECK(merged.at(key) == count);
  }
}

TEST_CASE("oscillation_flag: examples") {
  CHECK(oscillation_flag(kOscillatory, 4, 2));
  CHECK_FALSE(oscillation_flag("a b c d e", 4, 2));
  CHECK_FALSE(oscillation_flag("a b c d e", 2, 2));
  CHECK(oscillation_flag("x y x y x y", 2, 3));  // "x y" occurs three times
  CHECK_FALSE(oscillation_flag("", 4, 2));
}

TEST_CASE("oscillation_flag: monotone in min_count and order") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 500; ++i) {
    const std::string sentence = test_support::random_sentence(rng, 14, 4);
    for (int n = 1; n <= 4; ++n) {
      for (int c = 2; c <= 4; ++c) {
        if (oscillation_flag(sentence, n, c)) {
          CHECK(oscillation_flag(sentence, n, c - 1));
        }
        if (oscillation_flag(sentence, n + 1, c)) {
          // an (n+1)-gram repeated c times forces an n-gram repeated >= c times
          CHECK(oscillation_flag(sentence, n, c));
        }
      }
    }
  }
}

TEST_CASE("annotations: subtype consistency is enforced on ingest") {
  test_support::TempDir dir("annotations");
  write_lines(dir / "good.tsv", {"# nh oh dh", "1\t1\t0", "0\t0\t0", "1\t0\t1"});
  auto annotations = load_annotations(dir / "good.tsv");
  REQUIRE(annotations.size() == 3);
  CHECK(annotations[0].oh);
  CHECK(annotations[2].dh);

  write_lines(dir / "bad.tsv", {"0\t1\t0"});
  CHECK_THROWS_AS(load_annotations(dir / "bad.tsv"), InvariantError);
  write_lines(dir / "mangled.tsv", {"1\t2\t0"});
  CHECK_THROWS_AS(load_annotations(dir / "mangled.tsv"), ConfigError);
}

TEST_CASE("summarize: memorized pattern scores IRS-BLEU 100") {
  PatternInputs rr;
  rr.pattern = "rr";
  TranslationSet irs;
  for (int i = 0; i < 5; ++i) {
    TranslationEntry entry;
    entry.source = "irs src " + std::to_string(i);
    entry.translation = "memorized target " + std::to_string(i);
    entry.reference = entry.translation;  // model reproduces the repeated pair
    irs.entries.push_back(entry);
  }
  rr.irs = irs;
  rr.training_targets = std::vector<std::string>{};
  for (const auto& e : irs.entries) rr.training_targets->push_back(e.translation);

  auto rows = summarize(std::vector<PatternInputs>{rr});
  REQUIRE(rows.size() == 1);
  REQUIRE(rows[0].irs_bleu.has_value());
  CHECK(*rows[0].irs_bleu == doctest::Approx(100.0));
  REQUIRE(rows[0].irs_repeats_pct.has_value());
  CHECK(*rows[0].irs_repeats_pct == doctest::Approx(100.0));
}

TEST_CASE("summarize: clean pattern reports zeros") {
  PatternInputs none;
  none.pattern = "none";
  TranslationSet irs;
  for (int i = 0; i < 4; ++i) {
    TranslationEntry entry;
    entry.source = "src " + std::to_string(i);
    entry.translation = "fluent distinct output " + std::to_string(i);
    entry.reference = "reference " + std::to_string(i);
    irs.entries.push_back(entry);
  }
  none.irs = irs;
  none.training_targets = std::vector<std::string>{"unrelated target"};
  none.irs_annotations = std::vector<AnnotationRecord>(4);  // all zeros

  auto rows = summarize(std::vector<PatternInputs>{none});
  CHECK(*rows[0].irs_nh_pct == doctest::Approx(0.0));
  CHECK(*rows[0].irs_oh_pct == doctest::Approx(0.0));
  CHECK(*rows[0].irs_repeats_pct == doctest::Approx(0.0));
  CHECK_FALSE(rows[0].nh_is_proxy);
}

TEST_CASE("summarize: missing annotations fall back to flagged proxies") {
  PatternInputs ru;
  ru.pattern = "ru";
  TranslationSet irs;
  TranslationEntry oscillating;
  oscillating.source = "src";
  oscillating.translation = kOscillatory;
  irs.entries.push_back(oscillating);
  TranslationEntry plain;
  plain.source = "src2";
  plain.translation = "completely ordinary words";
  irs.entries.push_back(plain);
  ru.irs = irs;

  auto rows = summarize(std::vector<PatternInputs>{ru});
  CHECK(rows[0].nh_is_proxy);
  CHECK(rows[0].oh_is_proxy);
  CHECK(*rows[0].irs_oh_pct == doctest::Approx(50.0));
  CHECK(*rows[0].irs_nh_pct == doctest::Approx(50.0));
  // no references, no training targets: those cells stay empty
  CHECK_FALSE(rows[0].irs_bleu.has_value());
  CHECK_FALSE(rows[0].irs_repeats_pct.has_value());
  REQUIRE(rows[0].irs_unique_bigrams.has_value());
  CHECK(*rows[0].irs_unique_bigrams < 1.0);
}

TEST_CASE("summarize: annotation count mismatch is an error") {
  PatternInputs bad;
  bad.pattern = "uu";
  bad.irs = set_of({"one", "two"});
  bad.irs_annotations = std::vector<AnnotationRecord>(3);
  CHECK_THROWS_AS(summarize(std::vector<PatternInputs>{bad}), InvariantError);
}

TEST_CASE("translation set files parse with optional references") {
  test_support::TempDir dir("transet");
  write_lines(dir / "set.tsv",
              {"quelle eins\toutput one\tref one", "quelle zwei\toutput two"});
  auto set = load_translation_set(dir / "set.tsv", SetTag::irs);
  REQUIRE(set.entries.size() == 2);
  CHECK(set.entries[0].reference.has_value());
  CHECK_FALSE(set.entries[1].reference.has_value());
  CHECK(set.tag == SetTag::irs);

  write_lines(dir / "bad.tsv", {"only one column"});
  CHECK_THROWS_AS(load_translation_set(dir / "bad.tsv"), ConfigError);
}

}  // TEST_SUITE
