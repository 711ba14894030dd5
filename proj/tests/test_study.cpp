#include <doctest.h>

#include <random>
#include <unordered_set>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/memorization.hpp"
#include "halluprobe/metrics.hpp"
#include "halluprobe/study.hpp"
#include "test_support.hpp"

using namespace halluprobe;
using nlohmann::json;

namespace {

// Synthetic world for the hp study: a small bilingual dictionary, a corpus
// translated through it, and a hypothesis manifest where included samples
// are translated correctly and excluded ones get degraded.
struct SyntheticHpWorld {
  std::filesystem::path root;
  json config;

  explicit SyntheticHpWorld(const std::filesystem::path& dir, int n = 60, int t = 4) {
    root = dir;
    std::filesystem::create_directories(root);
    std::mt19937_64 rng(4242);

    std::vector<std::string> src_vocab, tgt_vocab;
    for (int i = 0; i < 30; ++i) {
      src_vocab.push_back("s" + std::to_string(i));
      tgt_vocab.push_back("t" + std::to_string(i));
    }

    std::vector<std::string> sources, refs;
    std::unordered_map<std::string, std::string> dict;
    for (int i = 0; i < 30; ++i) dict[src_vocab[i]] = tgt_vocab[i];
    auto translate = [&](const std::string& sentence) {
      std::string out;
      for (const auto& tok : metrics::tokenize(sentence, metrics::Granularity::word).tokens) {
        if (!out.empty()) out.push_back(' ');
        auto it = dict.find(tok);
        out += it == dict.end() ? tok : it->second;
      }
      return out;
    };

    for (int i = 0; i < n; ++i) {
      std::string sentence;
      const int words = 4 + static_cast<int>(rng() % 5);
      for (int w = 0; w < words; ++w) {
        if (w) sentence.push_back(' ');
        sentence += src_vocab[rng() % src_vocab.size()];
      }
      sources.push_back(sentence);
      refs.push_back(translate(sentence));
    }
    write_lines(root / "sources.txt", sources);
    write_lines(root / "refs.txt", refs);

    // manifest: hypotheses equal the reference when the model saw the
    // sample, otherwise every second word is wrong
    memorization::RunManifest manifest;
    manifest.n = n;
    manifest.t = t;
    manifest.m = n / 2;
    manifest.membership = memorization::plan_subsets(n, t, n / 2, 7);
    manifest.index.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) manifest.index[static_cast<std::size_t>(i)] = i;
    for (int k = 0; k < t; ++k) {
      std::vector<std::string> hyps;
      for (int i = 0; i < n; ++i) {
        if (manifest.membership.includes(k, i)) {
          hyps.push_back(refs[static_cast<std::size_t>(i)]);
        } else {
          auto tokens =
              metrics::tokenize(refs[static_cast<std::size_t>(i)], metrics::Granularity::word)
                  .tokens;
          for (std::size_t w = 0; w < tokens.size(); w += 2) tokens[w] = "wrong";
          std::string degraded;
          for (std::size_t w = 0; w < tokens.size(); ++w) {
            if (w) degraded.push_back(' ');
            degraded += tokens[w];
          }
          hyps.push_back(degraded);
        }
      }
      manifest.hyps.push_back(std::move(hyps));
    }
    memorization::save_run_manifest(root / "manifest", manifest);

    // dictionary backend manifest covering base and perturbed sources
    std::vector<std::string> table;
    auto add = [&](const std::string& s) { table.push_back(s + "\t" + translate(s)); };
    std::unordered_set<std::string> tokens_seen;
    for (const auto& s : sources) {
      add(s);
      for (const auto& tok : metrics::tokenize(s, metrics::Granularity::word).tokens)
        tokens_seen.insert(tok);
    }
    for (const auto& tok : tokens_seen) {
      for (const auto& s : sources) add(tok + " " + s);
    }
    std::sort(table.begin(), table.end());
    table.erase(std::unique(table.begin(), table.end()), table.end());
    write_lines(root / "backend.tsv", table);

    config = {
        {"study", "hp"},
        {"manifest", (root / "manifest").string()},
        {"refs", (root / "refs.txt").string()},
        {"corpus_sources", (root / "sources.txt").string()},
        {"backend", "manifest:" + (root / "backend.tsv").string()},
        {"metrics", json::array({"chrf", "accuracy"})},
        {"set_size", 5},
        {"top_k_tokens", 10},
        {"num_tokens", 3},
        {"min_exclusions", 1},
        {"seeds", {{"token_set", 11}, {"set_selection", 13}}},
    };
  }
};

}  // namespace

TEST_SUITE("study") {

TEST_CASE("hp study: end-to-end on a synthetic world") {
  test_support::TempDir dir("hp_study");
  SyntheticHpWorld world(dir / "inputs");

  auto report = study::run_hp_study(world.config, dir / "out");
  CHECK(report["failed_stages"].empty());
  REQUIRE(report.contains("per_metric"));
  for (const auto& metric : {"chrf", "accuracy"}) {
    REQUIRE(report["per_metric"].contains(metric));
    const auto& section = report["per_metric"][metric];
    CHECK(section["sets"]["memorized"].size() == 5);
    CHECK(section["sets"]["random"].size() == 5);
    const int unique = section["hp"]["memorized"]["unique_hp"].get<int>();
    const int total = section["hp"]["memorized"]["total_hp"].get<int>();
    CHECK(unique <= total);
    CHECK(total <= 5 * 3);
  }
  CHECK(std::filesystem::exists(dir / "out" / "mem_values.chrf.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "memorized.accuracy.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "report.json"));
  CHECK(report["config"] == world.config);  // embedded verbatim
}

TEST_CASE("hp study: reruns are byte-identical") {
  test_support::TempDir dir("hp_rerun");
  SyntheticHpWorld world(dir / "inputs");
  study::run_hp_study(world.config, dir / "out");
  const std::string first = read_file(dir / "out" / "report.json");
  study::run_hp_study(world.config, dir / "out");
  CHECK(read_file(dir / "out" / "report.json") == first);
}

TEST_CASE("hp study: sweeps produce curve data") {
  test_support::TempDir dir("hp_sweeps");
  SyntheticHpWorld world(dir / "inputs");
  world.config["metrics"] = json::array({"chrf"});
  world.config["floor_sweep"] = json::array({0.0, 0.1, 0.2});
  world.config["exclusion_sweep"] = json::array({1, 2});

  auto report = study::run_hp_study(world.config, dir / "out");
  CHECK(report["failed_stages"].empty());
  REQUIRE(report.contains("floor_sweep"));
  CHECK(report["floor_sweep"]["points"].size() == 3);
  REQUIRE(report.contains("exclusion_sweep"));
  CHECK(report["exclusion_sweep"]["points"].size() == 2);
  CHECK(std::filesystem::exists(dir / "out" / "floor_sweep.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "exclusion_sweep.tsv"));
}

TEST_CASE("hp study: missing seed is a recorded config failure") {
  test_support::TempDir dir("hp_noseed");
  SyntheticHpWorld world(dir / "inputs");
  world.config.erase("seeds");
  auto report = study::run_hp_study(world.config, dir / "out");
  REQUIRE_FALSE(report["failed_stages"].empty());
  CHECK(report["failed_stages"][0]["category"] == "config");
  CHECK(study::report_exit_code(report) == exit_code::config_error);
  CHECK(std::filesystem::exists(dir / "out" / "report.json"));  // never silent
}

TEST_CASE("nh study: forging verifies the overlap contract") {
  test_support::TempDir dir("nh_forge");
  const auto inputs = dir / "inputs";
  std::filesystem::create_directories(inputs);

  ParallelCorpus irs;
  for (int i = 0; i < 4; ++i) {
    irs.sources.push_back("irs quelle " + std::to_string(i));
    irs.targets.push_back("irs target " + std::to_string(i));
  }
  save_parallel_corpus(inputs / "irs", irs);

  ParallelCorpus donor;
  for (int i = 0; i < 400; ++i) {
    donor.sources.push_back("donor quelle " + std::to_string(i));
    donor.targets.push_back("donor target " + std::to_string(i));
  }
  save_parallel_corpus(inputs / "donor", donor);

  ParallelCorpus clean;
  for (int i = 0; i < 50; ++i) {
    clean.sources.push_back("clean quelle " + std::to_string(i));
    clean.targets.push_back("clean target " + std::to_string(i));
  }
  save_parallel_corpus(inputs / "clean", clean);

  json config = {
      {"study", "nh"},
      {"irs", (inputs / "irs").string()},
      {"donor", (inputs / "donor").string()},
      {"clean", (inputs / "clean").string()},
      {"unit_count", 4},
      {"repeats", 10},
      {"emit_training", true},
      {"seeds", {{"uu", 1}, {"ru", 2}, {"ur", 3}, {"shuffle", 4}}},
  };
  auto report = study::run_nh_study(config, dir / "out");
  CHECK(report["failed_stages"].empty());
  CHECK(report["overlap_contract"] == "verified");
  CHECK(report["forged"]["uu"] == 40);
  CHECK(report["forged"]["rr"] == 40);
  CHECK(report["forged"]["ru"] == 40);
  CHECK(report["forged"]["ur"] == 40);
  CHECK(std::filesystem::exists(dir / "out" / "noise" / "ru" / "src.txt"));
  CHECK(std::filesystem::exists(dir / "out" / "train" / "uu" / "provenance.txt"));
  const double fraction = report["forged"]["uu_noise_fraction"].get<double>();
  CHECK(fraction == doctest::Approx(40.0 / 90.0));
}

TEST_CASE("nh study: planted UR-style translations raise IRS-Repeats") {
  test_support::TempDir dir("nh_eval");
  const auto inputs = dir / "inputs";
  std::filesystem::create_directories(inputs);

  // translations of the IRS under a UR-ish model: half the outputs copy a
  // training target
  std::vector<std::string> train_targets{"copied training target one",
                                         "copied training target two"};
  write_lines(inputs / "train_targets.txt", train_targets);
  write_lines(inputs / "ur_irs.tsv",
              {"q1\tcopied training target one\tref one",
               "q2\tcopied training target two\tref two",
               "q3\tan honest translation\tref three",
               "q4\tanother honest line\tref four"});

  json config = {
      {"study", "nh"},
      {"patterns",
       {{"ur",
         {{"irs", (inputs / "ur_irs.tsv").string()},
          {"train_targets", (inputs / "train_targets.txt").string()}}}}},
  };
  auto report = study::run_nh_study(config, dir / "out");
  CHECK(report["failed_stages"].empty());
  REQUIRE(report["summary"].size() == 1);
  const auto& row = report["summary"][0];
  CHECK(row["pattern"] == "ur");
  CHECK(row["irs_repeats_pct"].get<double>() == doctest::Approx(50.0));
  CHECK(row["nh_is_proxy"] == true);
  CHECK(std::filesystem::exists(dir / "out" / "summary.tsv"));
  CHECK(std::filesystem::exists(dir / "out" / "top_ngrams.tsv"));
}

TEST_CASE("amplification study: planted growth is flagged, mismatch refused") {
  test_support::TempDir dir("amp");
  const auto inputs = dir / "inputs";
  std::filesystem::create_directories(inputs);

  auto write_run = [&](const std::string& name, int repeated) {
    std::vector<std::string> lines;
    for (int i = 0; i < 200; ++i) {
      const bool planted = i < repeated;
      const std::string translation =
          planted ? "the one repeated translation" : "output " + std::to_string(i);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.6f", planted ? 0.001 * i : 0.5 + 0.001 * i);
      lines.push_back("source " + std::to_string(i) + "\t" + translation + "\t" + buf);
    }
    write_lines(inputs / (name + ".tsv"), lines);
  };
  write_run("parallel", 4);
  write_run("kd", 12);

  json config = {
      {"study", "amplification"},
      {"epsilon", 10.0},
      {"ngram", 4},
      {"threshold", 2},
      {"baseline", {{"label", "parallel"}, {"pairs", (inputs / "parallel.tsv").string()}}},
      {"derived",
       json::array({{{"label", "kd"}, {"pairs", (inputs / "kd.tsv").string()}}})},
  };
  auto report = study::run_amplification_study(config, dir / "out");
  CHECK(report["failed_stages"].empty());
  REQUIRE(report["amplification"].size() == 2);
  CHECK(report["amplification"][0]["anh"] == 4);
  CHECK(report["amplification"][1]["anh"] == 12);
  CHECK(report["amplification"][1]["amplified"] == true);
  CHECK(report["amplification"][1]["ratio"].get<double>() == doctest::Approx(3.0));
  CHECK(std::filesystem::exists(dir / "out" / "runs" / "kd.json"));

  // identical runs: ratio 1.0, nothing flagged
  json same_config = config;
  same_config["derived"] = json::array(
      {{{"label", "twin"}, {"pairs", (inputs / "parallel.tsv").string()}}});
  auto same_report = study::run_amplification_study(same_config, dir / "out2");
  CHECK(same_report["amplification"][1]["amplified"] == false);
  CHECK(same_report["amplification"][1]["ratio"].get<double>() == doctest::Approx(1.0));
}

TEST_CASE("config overrides use dot paths") {
  json config = {{"study", "hp"}, {"seeds", {{"token_set", 1}}}};
  study::apply_override(config, "seeds.token_set=99");
  CHECK(config["seeds"]["token_set"] == 99);
  study::apply_override(config, "set_size=7");
  CHECK(config["set_size"] == 7);
  study::apply_override(config, "backend=manifest:/tmp/x.tsv");
  CHECK(config["backend"] == "manifest:/tmp/x.tsv");
  study::apply_override(config, "metrics=[\"bleu\"]");
  CHECK(config["metrics"].is_array());
  CHECK_THROWS_AS(study::apply_override(config, "oops"), ConfigError);
}

TEST_CASE("run_study dispatches on the study kind") {
  test_support::TempDir dir("dispatch");
  json bad = {{"study", "unknown"}};
  CHECK_THROWS_AS(study::run_study(bad, dir.path()), ConfigError);
}

}  // TEST_SUITE
