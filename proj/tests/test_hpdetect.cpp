#include <doctest.h>

#include <random>

#include "halluprobe/attnstats.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/hpdetect.hpp"
#include "halluprobe/metrics.hpp"
#include "test_support.hpp"

using namespace halluprobe;
using namespace halluprobe::hpdetect;

namespace {

std::vector<std::string> repeated_corpus() {
  // frequencies: "a" x3, "b" x2, everything else once
  return {"a a b c", "a b d", "e f"};
}

backend::ManifestBackend make_backend(
    std::vector<std::pair<std::string, std::string>> pairs) {
  std::unordered_map<std::string, std::string> table(pairs.begin(), pairs.end());
  return backend::ManifestBackend(std::move(table));
}

}  // namespace

TEST_SUITE("hpdetect") {

TEST_CASE("build_token_set: forced tiny pool") {
  std::vector<std::string> corpus{"a a b"};
  auto set = build_token_set(corpus, 2, 2, 0);
  std::vector<std::string> sorted = set.tokens;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::string>{"a", "b"});
  CHECK(set.source_pool == std::vector<std::string>{"a", "b"});
}

TEST_CASE("build_token_set: frequency ranking with lexicographic ties") {
  auto set = build_token_set(repeated_corpus(), 3, 3, 1);
  // a(3) > b(2) > c/d/e/f(1, lexicographic) => pool = a, b, c
  CHECK(set.source_pool == std::vector<std::string>{"a", "b", "c"});
}

TEST_CASE("build_token_set: deterministic per seed, no duplicates") {
  std::mt19937_64 rng(5);
  std::vector<std::string> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(test_support::random_sentence(rng, 10, 40));
  auto a = build_token_set(corpus, 20, 10, 99);
  auto b = build_token_set(corpus, 20, 10, 99);
  CHECK(a.tokens == b.tokens);
  auto unique = a.tokens;
  std::sort(unique.begin(), unique.end());
  CHECK(std::adjacent_find(unique.begin(), unique.end()) == unique.end());
  for (const auto& token : a.tokens) {
    CHECK(std::find(a.source_pool.begin(), a.source_pool.end(), token) !=
          a.source_pool.end());
  }
}

TEST_CASE("build_token_set: vocabulary smaller than top_k is an error") {
  std::vector<std::string> corpus{"only four distinct words"};
  CHECK_THROWS_AS(build_token_set(corpus, 10, 3, 0), ConfigError);
  CHECK_THROWS_AS(build_token_set(corpus, 3, 4, 0), ConfigError);
}

TEST_CASE("perturb: first-position insertion") {
  CHECK(perturb("das haus", "aber") == "aber das haus");
  CHECK(perturb("", "und") == "und");
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const std::string x = test_support::random_sentence(rng);
    const std::string t = test_support::random_word(rng);
    const auto tokens = metrics::tokenize(perturb(x, t), metrics::Granularity::word).tokens;
    REQUIRE_FALSE(tokens.empty());
    CHECK(tokens.front() == t);
    CHECK(tokens.size() ==
          metrics::tokenize(x, metrics::Granularity::word).tokens.size() + 1);
  }
}

TEST_CASE("detect_hp: identity-copy backend never hallucinates") {
  // backend echoes the source; references equal sources, so every base
  // translation passes the gate and every perturbed output still contains
  // the full base sentence
  std::vector<Sample> samples;
  std::vector<std::pair<std::string, std::string>> table;
  std::mt19937_64 rng(13);
  PerturbationTokenSet tokens;
  tokens.tokens = {"foo", "bar"};
  for (int i = 0; i < 20; ++i) {
    const std::string text = test_support::random_sentence(rng, 8, 30);
    samples.push_back({i, text, text});
    table.emplace_back(text, text);
    for (const auto& token : tokens.tokens) {
      table.emplace_back(perturb(text, token), perturb(text, token));
    }
  }
  auto backend = make_backend(table);
  auto result = detect_hp(samples, backend, tokens);
  CHECK(result.unique_hp == 0);
  CHECK(result.total_hp == 0);
  CHECK(result.gated_in == 20);
  // oracle: the mock's perturbed outputs always stay above the threshold
  for (const auto& sample : samples) {
    for (const auto& token : tokens.tokens) {
      CHECK(metrics::adjusted_bleu(perturb(sample.source, token), sample.source) >= 0.01);
    }
  }
}

TEST_CASE("detect_hp: constant backend fails the adequacy gate") {
  std::vector<Sample> samples;
  std::vector<std::pair<std::string, std::string>> table;
  PerturbationTokenSet tokens;
  tokens.tokens = {"x"};
  for (int i = 0; i < 5; ++i) {
    const std::string source = "source number " + std::to_string(i);
    samples.push_back({i, source, "the real reference " + std::to_string(i)});
    table.emplace_back(source, "constant output");
    table.emplace_back(perturb(source, "x"), "constant output");
  }
  auto backend = make_backend(table);
  auto result = detect_hp(samples, backend, tokens);
  CHECK(result.gated_in == 0);
  CHECK(result.unique_hp == 0);
}

TEST_CASE("detect_hp: planted hallucinations are counted exactly") {
  // sample 0: two tokens hallucinate; sample 1: one token; sample 2: none;
  // sample 3: gated out
  PerturbationTokenSet tokens;
  tokens.tokens = {"t1", "t2"};
  std::vector<Sample> samples{
      {0, "src zero", "ref zero"},
      {1, "src one", "ref one"},
      {2, "src two", "ref two"},
      {3, "src three", "ref three"},
  };
  std::vector<std::pair<std::string, std::string>> table{
      {"src zero", "ref zero"},
      {"t1 src zero", "qq ww ee"},      // hallucination
      {"t2 src zero", "rr tt yy"},      // hallucination
      {"src one", "ref one"},
      {"t1 src one", "zz xx cc"},       // hallucination
      {"t2 src one", "ref one"},        // stable
      {"src two", "ref two"},
      {"t1 src two", "ref two"},
      {"t2 src two", "ref two"},
      {"src three", "way off base"},    // fails the 0.09 gate
      {"t1 src three", "anything"},
      {"t2 src three", "anything"},
  };
  auto backend = make_backend(table);
  auto result = detect_hp(samples, backend, tokens);
  CHECK(result.unique_hp == 2);
  CHECK(result.total_hp == 3);
  CHECK(result.gated_in == 3);
  for (const auto& rec : result.records) {
    CHECK(rec.base_score > 0.09);
    CHECK(rec.delta_score < 0.01);
    // records are re-checkable from the stored hypotheses
    CHECK(metrics::adjusted_bleu(rec.perturbed_hyp, rec.base_hyp) ==
          doctest::Approx(rec.delta_score));
  }
}

TEST_CASE("detect_hp: backend failures are excluded and reported") {
  PerturbationTokenSet tokens;
  tokens.tokens = {"t1"};
  std::vector<Sample> samples{{0, "ok src", "ok src"}, {1, "missing src", "missing src"}};
  // manifest knows sample 0 and its perturbation, nothing about sample 1
  auto backend = make_backend({{"ok src", "ok src"}, {"t1 ok src", "ok src"}});
  auto result = detect_hp(samples, backend, tokens);
  CHECK(result.translated == 1);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].sample_id == 1);
  CHECK_FALSE(result.failures[0].token.has_value());
  CHECK(result.failures[0].message.find("missing src") != std::string::npos);
}

TEST_CASE("detect_hp: refuses non-deterministic backends") {
  class Nondet : public backend::TranslationBackend {
   public:
    Nondet() : TranslationBackend("nondet", false) {}

   protected:
    std::string fetch(const std::string& source) override { return source; }
  } nondet;
  PerturbationTokenSet tokens;
  tokens.tokens = {"x"};
  std::vector<Sample> samples{{0, "a", "a"}};
  CHECK_THROWS_AS(detect_hp(samples, nondet, tokens), ConfigError);
}

TEST_CASE("detect_hp: threshold monotonicity on randomized runs") {
  std::mt19937_64 rng(17);
  PerturbationTokenSet tokens;
  tokens.tokens = {"p", "q", "r"};

  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Sample> samples;
    std::vector<std::pair<std::string, std::string>> table;
    for (int i = 0; i < 12; ++i) {
      const std::string source = "s" + std::to_string(trial) + " " +
                                 test_support::random_sentence(rng, 6, 10);
      const std::string reference = test_support::random_sentence(rng, 6, 10);
      samples.push_back({i, source, reference});
      // outputs drift between copying the reference and rambling
      auto out = [&](int salt) {
        return (rng() + salt) % 3 == 0 ? reference
                                       : test_support::random_sentence(rng, 6, 10);
      };
      table.emplace_back(source, out(0));
      for (const auto& token : tokens.tokens) {
        table.emplace_back(perturb(source, token), out(1));
      }
    }
    auto backend = make_backend(table);

    DetectParams defaults;
    auto base = detect_hp(samples, backend, tokens, defaults);

    DetectParams wider = defaults;
    wider.delta_threshold = 0.2;  // raising the inner threshold can only grow H
    auto widened = detect_hp(samples, backend, tokens, wider);
    CHECK(widened.total_hp >= base.total_hp);
    CHECK(widened.unique_hp >= base.unique_hp);

    DetectParams stricter = defaults;
    stricter.base_threshold = 0.5;  // raising the gate can only shrink the sample set
    auto gated = detect_hp(samples, backend, tokens, stricter);
    CHECK(gated.gated_in <= base.gated_in);

    CHECK(base.unique_hp <= base.total_hp);
    CHECK(base.total_hp <=
          static_cast<int>(samples.size() * tokens.tokens.size()));

    // deterministic backend + fixed T: bit-reproducible
    auto again = detect_hp(samples, backend, tokens, defaults);
    CHECK(again.total_hp == base.total_hp);
    CHECK(again.unique_hp == base.unique_hp);
  }
}

TEST_CASE("attach_attention joins by sample id") {
  std::vector<HPRecord> records;
  records.push_back({7, "tok", "base out", "pert out", 0.5, 0.0});
  records.push_back({9, "tok", "base out", "pert out", 0.5, 0.0});

  attnstats::AttentionStore empty;
  auto none = attach_attention(records, empty);
  REQUIRE(none.size() == 2);
  CHECK_FALSE(none[0].base_attn.has_value());
  CHECK_FALSE(none[1].perturbed_attn.has_value());

  attnstats::AttentionStore store;
  attnstats::AttentionMatrix m;
  m.sample_id = 7;
  m.variant = "base";
  m.t_len = 1;
  m.s_len = 2;
  m.values = {0.5, 0.5};
  store.insert(m);
  m.variant = "perturbed";
  store.insert(m);

  auto mixed = attach_attention(records, store);
  CHECK(mixed[0].base_attn.has_value());
  CHECK(mixed[0].perturbed_attn.has_value());
  CHECK_FALSE(mixed[1].base_attn.has_value());
  std::size_t with_attn = 0, without = 0;
  for (const auto& a : mixed) (a.base_attn ? with_attn : without) += 1;
  CHECK(with_attn + without == records.size());
}

}  // TEST_SUITE
