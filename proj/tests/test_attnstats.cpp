#include <doctest.h>

#include <cmath>
#include <random>

#include "halluprobe/attnstats.hpp"
#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "test_support.hpp"

using namespace halluprobe;
using namespace halluprobe::attnstats;

namespace {

AttentionMatrix matrix_of(std::size_t t_len, std::size_t s_len, std::vector<double> values,
                          std::int64_t id = 0, std::string variant = "base") {
  AttentionMatrix m;
  m.sample_id = id;
  m.variant = std::move(variant);
  m.t_len = t_len;
  m.s_len = s_len;
  m.values = std::move(values);
  return m;
}

AttentionMatrix uniform_matrix(std::size_t t_len, std::size_t s_len) {
  return matrix_of(t_len, s_len,
                   std::vector<double>(t_len * s_len, 1.0 / static_cast<double>(s_len)));
}

AttentionMatrix one_hot_matrix(std::size_t t_len, std::size_t s_len, std::size_t column) {
  std::vector<double> values(t_len * s_len, 0.0);
  for (std::size_t i = 0; i < t_len; ++i) values[i * s_len + column] = 1.0;
  return matrix_of(t_len, s_len, std::move(values));
}

// random row-stochastic matrix
AttentionMatrix random_matrix(std::mt19937_64& rng, std::size_t t_len, std::size_t s_len) {
  std::vector<double> values(t_len * s_len);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  for (std::size_t i = 0; i < t_len; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < s_len; ++j) {
      values[i * s_len + j] = unit(rng);
      sum += values[i * s_len + j];
    }
    for (std::size_t j = 0; j < s_len; ++j) values[i * s_len + j] /= sum;
  }
  return matrix_of(t_len, s_len, std::move(values));
}

}  // namespace

TEST_SUITE("attnstats") {

TEST_CASE("row_entropy: one-hot and uniform extremes") {
  CHECK(row_entropy(one_hot_matrix(5, 4, 2)) == doctest::Approx(0.0));
  CHECK(row_entropy(uniform_matrix(3, 4)) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
  // bounds: 0 <= H <= ln(s_len)
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    auto m = random_matrix(rng, 4, 7);
    const double h = row_entropy(m);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(7.0) + 1e-12);
  }
}

TEST_CASE("row_entropy: invariant under target-row permutation") {
  std::mt19937_64 rng(5);
  auto m = random_matrix(rng, 6, 5);
  auto permuted = m;
  // rotate rows by two
  std::rotate(permuted.values.begin(), permuted.values.begin() + 2 * 5, permuted.values.end());
  CHECK(row_entropy(permuted) == doctest::Approx(row_entropy(m)).epsilon(1e-12));
}

TEST_CASE("diagonal_entropy: closed forms") {
  // square matrix with a constant diagonal: band distribution is uniform
  auto m = matrix_of(3, 3,
                     {0.5, 0.25, 0.25,
                      0.25, 0.5, 0.25,
                      0.25, 0.25, 0.5});
  CHECK(diagonal_entropy(m) == doctest::Approx(std::log(3.0)).epsilon(1e-12));

  // all diagonal mass at row 0
  auto top = matrix_of(2, 2, {1.0, 0.0, 1.0, 0.0});
  // band columns: row 0 -> col 0 (mass 1), row 1 -> col 1 (mass 0)
  CHECK(diagonal_entropy(top) == doctest::Approx(0.0));

  // zero diagonal mass is defined as zero and flagged
  auto off = matrix_of(2, 2, {0.0, 1.0, 1.0, 0.0});
  CHECK(diagonal_entropy(off) == doctest::Approx(0.0));
  CHECK(summarize(off).zero_diagonal_mass);
  CHECK_FALSE(summarize(top).zero_diagonal_mass);
}

TEST_CASE("hand-computed 3x3 case matches all statistics") {
  auto m = matrix_of(3, 3,
                     {0.7, 0.2, 0.1,
                      0.1, 0.8, 0.1,
                      0.25, 0.25, 0.5});
  // frozen from an explicit evaluation of the formulas
  CHECK(row_entropy(m) == doctest::Approx(0.82685706101114409).epsilon(1e-12));
  CHECK(diagonal_entropy(m) == doctest::Approx(1.0805276266041719).epsilon(1e-12));
  CHECK(last_token_attention(m) == doctest::Approx(0.23333333333333331).epsilon(1e-12));
  CHECK(diagonal_mass(m) == doctest::Approx(0.66666666666666663).epsilon(1e-12));
}

TEST_CASE("last_token_attention: closed forms and column sensitivity") {
  CHECK(last_token_attention(one_hot_matrix(4, 6, 5)) == doctest::Approx(1.0));
  CHECK(last_token_attention(uniform_matrix(4, 4)) == doctest::Approx(0.25));
  // swapping source columns must change the statistic
  auto m = matrix_of(1, 3, {0.6, 0.3, 0.1});
  auto swapped = matrix_of(1, 3, {0.1, 0.3, 0.6});
  CHECK(last_token_attention(m) != last_token_attention(swapped));
}

TEST_CASE("rectangular band columns stay in range") {
  std::mt19937_64 rng(7);
  for (auto [t_len, s_len] : std::vector<std::pair<std::size_t, std::size_t>>{
           {3, 6}, {6, 3}, {1, 9}, {9, 1}, {5, 5}}) {
    auto m = random_matrix(rng, t_len, s_len);
    const double h = diagonal_entropy(m);
    CHECK(h >= 0.0);
    CHECK(h <= std::log(static_cast<double>(t_len)) + 1e-12);
    CHECK(diagonal_mass(m) >= 0.0);
    CHECK(diagonal_mass(m) <= 1.0);
  }
}

TEST_CASE("validate: rejects non-stochastic rows and negatives") {
  auto bad_sum = matrix_of(2, 2, {0.9, 0.2, 0.5, 0.5});
  CHECK_THROWS_AS(validate(bad_sum), InvariantError);
  auto negative = matrix_of(1, 2, {1.5, -0.5});
  CHECK_THROWS_AS(validate(negative), InvariantError);
  validate(uniform_matrix(3, 5));               // fine
  validate(matrix_of(1, 2, {0.50004, 0.5}));    // inside the 1e-4 tolerance
}

TEST_CASE("aggregate: singleton, duplication and oracle equality") {
  std::mt19937_64 rng(11);
  auto a = random_matrix(rng, 4, 5);
  auto b = random_matrix(rng, 6, 3);
  auto c = random_matrix(rng, 2, 8);

  auto single = aggregate(std::vector<AttentionMatrix>{a});
  CHECK(single.row_entropy == doctest::Approx(row_entropy(a)));
  CHECK(single.count == 1);

  auto doubled = aggregate(std::vector<AttentionMatrix>{a, a});
  CHECK(doubled.row_entropy == doctest::Approx(single.row_entropy));
  CHECK(doubled.last_token_attention == doctest::Approx(single.last_token_attention));

  auto mixed = aggregate(std::vector<AttentionMatrix>{a, b, c});
  // oracle: flat loop over the set
  double expect_row = (row_entropy(a) + row_entropy(b) + row_entropy(c)) / 3.0;
  double expect_diag = (diagonal_entropy(a) + diagonal_entropy(b) + diagonal_entropy(c)) / 3.0;
  double expect_last =
      (last_token_attention(a) + last_token_attention(b) + last_token_attention(c)) / 3.0;
  CHECK(mixed.row_entropy == doctest::Approx(expect_row).epsilon(1e-12));
  CHECK(mixed.diagonal_entropy == doctest::Approx(expect_diag).epsilon(1e-12));
  CHECK(mixed.last_token_attention == doctest::Approx(expect_last).epsilon(1e-12));

  CHECK_THROWS_AS(aggregate(std::vector<AttentionMatrix>{}), ConfigError);
}

TEST_CASE("attention files: write, load, average heads") {
  test_support::TempDir dir("attn");
  // two heads whose average is the uniform matrix
  std::vector<std::vector<double>> heads{{0.8, 0.2, 0.2, 0.8}, {0.2, 0.8, 0.8, 0.2}};
  save_attention_file(dir / "42_base.attn", 42, "base", 2, 2, heads);
  auto loaded = load_attention_file(dir / "42_base.attn");
  CHECK(loaded.sample_id == 42);
  CHECK(loaded.variant == "base");
  CHECK(loaded.t_len == 2);
  CHECK(loaded.s_len == 2);
  for (double v : loaded.values) CHECK(v == doctest::Approx(0.5));

  // header is the documented v1 line
  const auto text = read_file(dir / "42_base.attn");
  CHECK(text.rfind("ATTN v1 42 base 2 2 2\n", 0) == 0);

  // a truncated file and a bad magic line are rejected
  write_file(dir / "short.attn", "ATTN v1 1 base 1 2 2\n0.5 0.5\n");
  CHECK_THROWS_AS(load_attention_file(dir / "short.attn"), ConfigError);
  write_file(dir / "magic.attn", "NOPE v1 1 base 1 1 1\n1.0\n");
  CHECK_THROWS_AS(load_attention_file(dir / "magic.attn"), ConfigError);

  // non-stochastic head content trips the invariant
  write_file(dir / "broken.attn", "ATTN v1 1 base 1 1 2\n0.9 0.9\n");
  CHECK_THROWS_AS(load_attention_file(dir / "broken.attn"), InvariantError);
}

TEST_CASE("attention store: directory load and set collection") {
  test_support::TempDir dir("attn_store");
  std::vector<std::vector<double>> uniform{{0.25, 0.25, 0.25, 0.25}};
  std::vector<std::vector<double>> hot{{1.0, 0.0, 0.0, 0.0}};
  save_attention_file(dir / "0_base.attn", 0, "base", 1, 4, uniform);
  save_attention_file(dir / "1_base.attn", 1, "base", 1, 4, hot);
  save_attention_file(dir / "1_perturbed.attn", 1, "perturbed", 1, 4, uniform);

  auto store = AttentionStore::load_dir(dir.path());
  CHECK(store.size() == 3);
  REQUIRE(store.find(1, "base") != nullptr);
  CHECK(store.find(1, "base")->values[0] == doctest::Approx(1.0));
  CHECK(store.find(2, "base") == nullptr);

  std::vector<std::int64_t> ids{1, 0, 2};
  auto collected = store.collect(ids, "base");
  REQUIRE(collected.size() == 2);  // id 2 is missing
  CHECK(collected[0].sample_id == 0);
  CHECK(collected[1].sample_id == 1);

  auto stats = aggregate(collected);
  CHECK(stats.row_entropy == doctest::Approx(std::log(4.0) / 2.0).epsilon(1e-12));
  CHECK(stats.last_token_attention == doctest::Approx(0.125));
}

}  // TEST_SUITE
