#include "halluprobe/study.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <optional>

#include "halluprobe/attnstats.hpp"
#include "halluprobe/backend.hpp"
#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/hpdetect.hpp"
#include "halluprobe/memorization.hpp"
#include "halluprobe/metrics.hpp"
#include "halluprobe/nheval.hpp"
#include "halluprobe/nhestimate.hpp"
#include "halluprobe/noiseforge.hpp"

namespace halluprobe::study {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void write_json_file(const std::filesystem::path& file, const json& doc) {
  write_file(file, doc.dump(2) + "\n");
}

// Stage harness: a failed stage lands in report["failed_stages"] with its
// error category so the CLI can map it to an exit code; later stages
// still run when their inputs exist.
class StageRunner {
 public:
  explicit StageRunner(json& report) : report_(report) {
    report_["failed_stages"] = json::array();
  }

  bool run(const std::string& name, const std::function<void()>& body) {
    try {
      body();
      return true;
    } catch (const ConfigError& e) {
      record(name, "config", e.what());
    } catch (const BackendError& e) {
      record(name, "backend", e.what());
    } catch (const InvariantError& e) {
      record(name, "invariant", e.what());
    } catch (const std::exception& e) {
      record(name, "other", e.what());
    }
    return false;
  }

 private:
  void record(const std::string& name, const std::string& category, const std::string& what) {
    report_["failed_stages"].push_back({{"stage", name}, {"category", category},
                                        {"error", what}});
  }

  json& report_;
};

json require(const json& config, const std::string& key) {
  if (!config.contains(key))
    throw ConfigError("study config is missing required key '" + key + "'");
  return config.at(key);
}

std::uint64_t require_seed(const json& config, const std::string& name) {
  const json seeds = require(config, "seeds");
  if (!seeds.contains(name))
    throw ConfigError("study config is missing seeds." + name +
                      " (every randomized step needs an explicit seed)");
  return seeds.at(name).get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// HP study (memorization -> comparison sets -> perturbation detection)

struct HpInputs {
  memorization::RunManifest manifest;
  std::vector<std::string> refs;
  std::vector<std::string> sources;
  std::unique_ptr<backend::TranslationBackend> model;
  hpdetect::PerturbationTokenSet tokens;
  hpdetect::DetectParams params;
  std::optional<attnstats::AttentionStore> attention;
};

std::vector<hpdetect::Sample> samples_for(const std::vector<std::int64_t>& ids,
                                          const HpInputs& inputs) {
  std::vector<hpdetect::Sample> samples;
  samples.reserve(ids.size());
  for (auto id : ids) {
    samples.push_back({id, inputs.sources[static_cast<std::size_t>(id)],
                       inputs.refs[static_cast<std::size_t>(id)]});
  }
  return samples;
}

json hp_counts(const hpdetect::DetectionResult& result) {
  return json{{"unique_hp", result.unique_hp},
              {"total_hp", result.total_hp},
              {"gated_in", result.gated_in},
              {"translated", result.translated},
              {"failures", result.failures.size()}};
}

json mem_value_distribution(const std::vector<memorization::MemRecord>& records) {
  constexpr int kBins = 20;
  std::vector<std::int64_t> bins(kBins, 0);
  double sum = 0.0;
  double lo = 1.0, hi = -1.0;
  std::int64_t valued = 0, eligible = 0;
  for (const auto& rec : records) {
    if (!rec.has_value) continue;
    ++valued;
    if (rec.eligible) ++eligible;
    sum += rec.mem_value;
    lo = std::min(lo, rec.mem_value);
    hi = std::max(hi, rec.mem_value);
    int bin = static_cast<int>((rec.mem_value + 1.0) / 2.0 * kBins);
    bin = std::clamp(bin, 0, kBins - 1);
    ++bins[static_cast<std::size_t>(bin)];
  }
  json out;
  out["records"] = records.size();
  out["with_value"] = valued;
  out["eligible"] = eligible;
  out["mean"] = valued ? sum / static_cast<double>(valued) : 0.0;
  out["min"] = valued ? lo : 0.0;
  out["max"] = valued ? hi : 0.0;
  out["histogram_bins"] = bins;  // 20 equal bins over [-1, 1]
  return out;
}

void write_mem_values(const std::filesystem::path& file,
                      const std::vector<memorization::MemRecord>& records) {
  std::vector<std::string> lines;
  lines.reserve(records.size() + 1);
  lines.push_back("sample_id\tmem_value\tn_included\tn_excluded\thas_value\teligible");
  for (const auto& rec : records) {
    lines.push_back(std::to_string(rec.sample_id) + "\t" + fmt(rec.mem_value) + "\t" +
                    std::to_string(rec.n_included) + "\t" + std::to_string(rec.n_excluded) +
                    "\t" + std::to_string(rec.has_value ? 1 : 0) + "\t" +
                    std::to_string(rec.eligible ? 1 : 0));
  }
  write_lines(file, lines);
}

void write_set_file(const std::filesystem::path& file, const std::vector<std::int64_t>& ids,
                    const std::vector<memorization::MemRecord>& records,
                    const HpInputs& inputs) {
  std::unordered_map<std::int64_t, double> mem;
  for (const auto& rec : records) mem[rec.sample_id] = rec.mem_value;
  std::vector<std::string> lines;
  lines.reserve(ids.size());
  for (auto id : ids) {
    lines.push_back(std::to_string(id) + "\t" + fmt(mem[id]) + "\t" +
                    inputs.sources[static_cast<std::size_t>(id)] + "\t" +
                    inputs.refs[static_cast<std::size_t>(id)]);
  }
  write_lines(file, lines);
}

void write_hp_records(const std::filesystem::path& file,
                      const hpdetect::DetectionResult& result) {
  std::vector<std::string> lines;
  lines.push_back("sample_id\ttoken\tbase_score\tdelta_score\tbase_hyp\tperturbed_hyp");
  for (const auto& rec : result.records) {
    lines.push_back(std::to_string(rec.sample_id) + "\t" + rec.token + "\t" +
                    fmt(rec.base_score) + "\t" + fmt(rec.delta_score) + "\t" + rec.base_hyp +
                    "\t" + rec.perturbed_hyp);
  }
  write_lines(file, lines);
}

json attn_set_stats(const attnstats::AttentionStore& store,
                    const std::vector<std::int64_t>& ids, const std::string& variant) {
  auto matrices = store.collect(ids, variant);
  json out;
  out["matrices"] = matrices.size();
  out["missing"] = ids.size() - matrices.size();
  if (!matrices.empty()) {
    const auto stats = attnstats::aggregate(matrices);
    out["attention_entropy"] = stats.row_entropy;
    out["diagonal_attention_entropy"] = stats.diagonal_entropy;
    out["avg_diagonal_attention"] = stats.diagonal_mass;
    out["avg_last_token_attention"] = stats.last_token_attention;
  }
  return out;
}

}  // namespace

json run_hp_study(const json& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  json report;
  report["study"] = "hp";
  report["config"] = config;
  StageRunner stages(report);

  HpInputs inputs;
  int set_size = 0;
  int min_exclusions = 0;
  std::vector<std::string> metric_names;
  std::uint64_t selection_seed = 0;

  const bool loaded = stages.run("load_inputs", [&] {
    inputs.manifest =
        memorization::load_run_manifest(require(config, "manifest").get<std::string>());
    inputs.refs = read_lines(require(config, "refs").get<std::string>());
    inputs.sources = read_lines(require(config, "corpus_sources").get<std::string>());
    if (static_cast<std::int64_t>(inputs.refs.size()) < inputs.manifest.n)
      throw ConfigError("refs file is shorter than the manifest corpus size");
    if (static_cast<std::int64_t>(inputs.sources.size()) < inputs.manifest.n)
      throw ConfigError("corpus_sources file is shorter than the manifest corpus size");

    inputs.model = backend::parse_backend_spec(
        require(config, "backend").get<std::string>(),
        config.value("nondeterministic", false),
        config.value("backend_env", std::vector<std::string>{}));
    if (config.contains("max_inflight"))
      inputs.model->set_max_inflight(config["max_inflight"].get<std::size_t>());
    inputs.tokens = hpdetect::build_token_set(
        inputs.sources, config.value("top_k_tokens", 100), config.value("num_tokens", 30),
        require_seed(config, "token_set"));
    inputs.params.base_threshold =
        config.contains("thresholds") ? config["thresholds"].value("base", 0.09) : 0.09;
    inputs.params.delta_threshold =
        config.contains("thresholds") ? config["thresholds"].value("delta", 0.01) : 0.01;
    if (config.contains("attention_dir") && !config["attention_dir"].is_null())
      inputs.attention =
          attnstats::AttentionStore::load_dir(config["attention_dir"].get<std::string>());

    set_size = config.value("set_size", 100);
    min_exclusions = config.value("min_exclusions", 2);
    selection_seed = require_seed(config, "set_selection");
    metric_names = config.value("metrics", std::vector<std::string>{"chrf", "bleu", "accuracy"});
    if (metric_names.empty()) throw ConfigError("hp study needs at least one metric");
  });

  std::unordered_map<std::string, std::vector<memorization::MemRecord>> records_by_metric;

  if (loaded) {
    report["token_set"] = inputs.tokens.tokens;
    report["per_metric"] = json::object();
    for (const auto& metric_name : metric_names) {
      stages.run("metric." + metric_name, [&] {
        const auto metric = metrics::metric_kind_from_string(metric_name);
        auto records =
            memorization::compute_mem_values(inputs.manifest, inputs.refs, metric, min_exclusions);
        write_mem_values(out_dir / ("mem_values." + metric_name + ".tsv"), records);

        auto sets = memorization::select_sets(records, set_size, selection_seed);
        write_set_file(out_dir / ("memorized." + metric_name + ".tsv"), sets.memorized,
                       records, inputs);
        write_set_file(out_dir / ("random." + metric_name + ".tsv"), sets.random, records,
                       inputs);

        json section;
        section["mem_values"] = mem_value_distribution(records);
        section["sets"] = {{"memorized", sets.memorized}, {"random", sets.random}};

        const auto memorized_result =
            hpdetect::detect_hp(samples_for(sets.memorized, inputs), *inputs.model,
                                inputs.tokens, inputs.params);
        const auto random_result = hpdetect::detect_hp(
            samples_for(sets.random, inputs), *inputs.model, inputs.tokens, inputs.params);
        write_hp_records(out_dir / ("hp_records." + metric_name + ".memorized.tsv"),
                         memorized_result);
        write_hp_records(out_dir / ("hp_records." + metric_name + ".random.tsv"),
                         random_result);
        section["hp"] = {{"memorized", hp_counts(memorized_result)},
                         {"random", hp_counts(random_result)}};

        if (inputs.attention) {
          section["attention"] = {
              {"memorized", attn_set_stats(*inputs.attention, sets.memorized, "base")},
              {"random", attn_set_stats(*inputs.attention, sets.random, "base")}};
        }

        report["per_metric"][metric_name] = std::move(section);
        records_by_metric[metric_name] = std::move(records);
      });
    }

    const std::string sweep_metric = config.value("sweep_metric", metric_names.front());

    if (config.contains("floor_sweep") && !config["floor_sweep"].empty()) {
      stages.run("floor_sweep", [&] {
        auto it = records_by_metric.find(sweep_metric);
        if (it == records_by_metric.end())
          throw ConfigError("floor_sweep: no records for sweep metric " + sweep_metric);
        json rows = json::array();
        std::vector<std::string> tsv{"floor\tunique_hp\ttotal_hp"};
        for (double floor : config["floor_sweep"].get<std::vector<double>>()) {
          try {
            auto sets = memorization::select_sets(it->second, set_size, selection_seed, floor);
            const auto result = hpdetect::detect_hp(samples_for(sets.random, inputs),
                                                    *inputs.model, inputs.tokens, inputs.params);
            rows.push_back({{"floor", floor},
                            {"unique_hp", result.unique_hp},
                            {"total_hp", result.total_hp}});
            tsv.push_back(fmt(floor) + "\t" + std::to_string(result.unique_hp) + "\t" +
                          std::to_string(result.total_hp));
          } catch (const ConfigError& e) {
            // a floor above the data starves the sampling pool; keep the
            // curve point, marked, instead of losing the sweep
            rows.push_back({{"floor", floor}, {"skipped", e.what()}});
            tsv.push_back(fmt(floor) + "\t-\t-");
          }
        }
        report["floor_sweep"] = {{"metric", sweep_metric}, {"points", std::move(rows)}};
        write_lines(out_dir / "floor_sweep.tsv", tsv);
      });
    }

    if (config.contains("exclusion_sweep") && !config["exclusion_sweep"].empty()) {
      stages.run("exclusion_sweep", [&] {
        const auto metric = metrics::metric_kind_from_string(sweep_metric);
        json rows = json::array();
        std::vector<std::string> tsv{
            "min_exclusions\tmemorized_unique\tmemorized_total\trandom_unique\trandom_total"};
        for (int exclusions : config["exclusion_sweep"].get<std::vector<int>>()) {
          try {
            auto records = memorization::compute_mem_values(inputs.manifest, inputs.refs,
                                                            metric, exclusions);
            auto sets = memorization::select_sets(records, set_size, selection_seed);
            const auto memorized_result =
                hpdetect::detect_hp(samples_for(sets.memorized, inputs), *inputs.model,
                                    inputs.tokens, inputs.params);
            const auto random_result =
                hpdetect::detect_hp(samples_for(sets.random, inputs), *inputs.model,
                                    inputs.tokens, inputs.params);
            rows.push_back({{"min_exclusions", exclusions},
                            {"memorized", hp_counts(memorized_result)},
                            {"random", hp_counts(random_result)}});
            tsv.push_back(std::to_string(exclusions) + "\t" +
                          std::to_string(memorized_result.unique_hp) + "\t" +
                          std::to_string(memorized_result.total_hp) + "\t" +
                          std::to_string(random_result.unique_hp) + "\t" +
                          std::to_string(random_result.total_hp));
          } catch (const ConfigError& e) {
            // strict eligibility can leave too few records for the sets
            rows.push_back({{"min_exclusions", exclusions}, {"skipped", e.what()}});
            tsv.push_back(std::to_string(exclusions) + "\t-\t-\t-\t-");
          }
        }
        report["exclusion_sweep"] = {{"metric", sweep_metric}, {"points", std::move(rows)}};
        write_lines(out_dir / "exclusion_sweep.tsv", tsv);
      });
    }
  }

  write_json_file(out_dir / "report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// NH study (noise forging + evaluation of externally translated sets)

namespace {

std::optional<nheval::TranslationSet> maybe_load_set(const json& pattern_config,
                                                     const std::string& key,
                                                     nheval::SetTag tag) {
  if (!pattern_config.contains(key) || pattern_config[key].is_null()) return std::nullopt;
  return nheval::load_translation_set(pattern_config[key].get<std::string>(), tag);
}

json row_to_json(const nheval::SummaryRow& row) {
  auto cell = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json out;
  out["pattern"] = row.pattern;
  out["irs_bleu"] = cell(row.irs_bleu);
  out["vrs_bleu"] = cell(row.vrs_bleu);
  out["test_bleu"] = cell(row.test_bleu);
  out["irs_nh_pct"] = cell(row.irs_nh_pct);
  out["irs_oh_pct"] = cell(row.irs_oh_pct);
  out["irs_repeats_pct"] = cell(row.irs_repeats_pct);
  out["irs_unique_bigrams"] = cell(row.irs_unique_bigrams);
  out["nh_is_proxy"] = row.nh_is_proxy;
  out["oh_is_proxy"] = row.oh_is_proxy;
  return out;
}

std::string table_cell(const std::optional<double>& v, bool proxy = false) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return proxy ? std::string(buf) + " (PROXY)" : std::string(buf);
}

}  // namespace

json run_nh_study(const json& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  json report;
  report["study"] = "nh";
  report["config"] = config;
  StageRunner stages(report);

  if (config.contains("donor") && config.contains("irs")) {
    stages.run("forge", [&] {
      const auto irs = noiseforge::load_irs(require(config, "irs").get<std::string>());
      std::optional<ParallelCorpus> clean;
      if (config.contains("clean") && !config["clean"].is_null()) {
        clean = load_parallel_corpus(config["clean"].get<std::string>());
        noiseforge::validate_irs(irs, &*clean);
      }
      if (config.contains("vrs") && !config["vrs"].is_null())
        noiseforge::validate_vrs(noiseforge::load_vrs(config["vrs"].get<std::string>()), irs);

      const auto donor = noiseforge::DonorCorpus::load(require(config, "donor").get<std::string>());
      const int unit_count = config.value("unit_count", 21);
      const int repeats = config.value("repeats", 1000);
      if (static_cast<int>(irs.pairs.size()) != unit_count)
        throw ConfigError("IRS has " + std::to_string(irs.pairs.size()) +
                          " pairs but unit_count is " + std::to_string(unit_count));
      const std::size_t uu_count = config.value(
          "uu_count", static_cast<std::size_t>(unit_count) * static_cast<std::size_t>(repeats));

      noiseforge::StringSet irs_sources, irs_targets;
      for (const auto& p : irs.pairs) {
        irs_sources.insert(p.source);
        irs_targets.insert(p.target);
      }

      const auto uu = noiseforge::gen_uu(donor, uu_count, require_seed(config, "uu"),
                                         &irs_sources, &irs_targets);
      const auto rr = noiseforge::gen_rr(irs, repeats);
      const auto ru = noiseforge::gen_ru(irs.sources(), donor, repeats,
                                         require_seed(config, "ru"), &irs_targets);
      const auto ur = noiseforge::gen_ur(irs.targets(), donor, repeats,
                                         require_seed(config, "ur"), &irs_sources);
      noiseforge::verify_overlap_contract(irs, uu, rr, ru, ur);

      json forged = json::object();
      for (const auto* set : {&uu, &rr, &ru, &ur}) {
        const std::string name(noiseforge::to_string(set->pattern));
        noiseforge::NoiseSpec spec;
        spec.pattern = set->pattern;
        spec.unit_count = unit_count;
        spec.repeats = repeats;
        spec.seed = set->pattern == noiseforge::NoisePattern::rr
                        ? 0
                        : require_seed(config, name);
        noiseforge::save_noise_set(out_dir / "noise" / name, *set, spec);
        forged[name] = set->pairs.size();

        if (clean && config.value("emit_training", false)) {
          const auto emitted =
              noiseforge::emit_training_corpus(*clean, *set, require_seed(config, "shuffle"));
          save_parallel_corpus(out_dir / "train" / name, emitted.corpus);
          std::vector<std::string> provenance;
          provenance.reserve(emitted.is_noise.size());
          for (auto flag : emitted.is_noise) provenance.push_back(flag ? "noise" : "clean");
          write_lines(out_dir / "train" / name / "provenance.txt", provenance);
          forged[name + "_training_lines"] = emitted.corpus.size();
          forged[name + "_noise_fraction"] =
              static_cast<double>(set->pairs.size()) /
              static_cast<double>(emitted.corpus.size());
        }
      }
      report["forged"] = std::move(forged);
      report["overlap_contract"] = "verified";
    });
  }

  if (config.contains("patterns") && !config["patterns"].empty()) {
    stages.run("evaluate", [&] {
      std::vector<nheval::PatternInputs> patterns;
      std::vector<std::string> names;
      for (const auto& [name, pattern_config] : config["patterns"].items()) {
        names.push_back(name);
        nheval::PatternInputs inputs;
        inputs.pattern = name;
        inputs.irs = maybe_load_set(pattern_config, "irs", nheval::SetTag::irs);
        inputs.vrs = maybe_load_set(pattern_config, "vrs", nheval::SetTag::vrs);
        inputs.test = maybe_load_set(pattern_config, "test", nheval::SetTag::test);
        if (pattern_config.contains("annotations") && !pattern_config["annotations"].is_null())
          inputs.irs_annotations =
              nheval::load_annotations(pattern_config["annotations"].get<std::string>());
        if (pattern_config.contains("train_targets") &&
            !pattern_config["train_targets"].is_null()) {
          inputs.training_targets =
              read_lines(pattern_config["train_targets"].get<std::string>());
        } else if (config.contains("train_targets") && !config["train_targets"].is_null()) {
          inputs.training_targets = read_lines(config["train_targets"].get<std::string>());
        }
        patterns.push_back(std::move(inputs));
      }

      const auto rows = nheval::summarize(patterns);
      json table = json::array();
      std::vector<std::string> tsv{
          "pattern\tirs_bleu\tvrs_bleu\ttest_bleu\tirs_nh\tirs_oh\tirs_repeats\t"
          "irs_unique_bigrams"};
      for (const auto& row : rows) {
        table.push_back(row_to_json(row));
        tsv.push_back(row.pattern + "\t" + table_cell(row.irs_bleu) + "\t" +
                      table_cell(row.vrs_bleu) + "\t" + table_cell(row.test_bleu) + "\t" +
                      table_cell(row.irs_nh_pct, row.nh_is_proxy) + "\t" +
                      table_cell(row.irs_oh_pct, row.oh_is_proxy) + "\t" +
                      table_cell(row.irs_repeats_pct) + "\t" +
                      table_cell(row.irs_unique_bigrams));
      }
      report["summary"] = std::move(table);
      write_lines(out_dir / "summary.tsv", tsv);

      // Figure-4-shaped plot data: top n-gram counts per pattern.
      const int ngram = config.value("fig4_ngram", 2);
      const int top = config.value("fig4_top", 5);
      std::vector<std::string> plot{"ngram\tcount\tpattern"};
      for (std::size_t i = 0; i < patterns.size(); ++i) {
        if (!patterns[i].irs) continue;
        for (const auto& [gram, count] : nheval::top_ngram_counts(*patterns[i].irs, ngram, top)) {
          plot.push_back(gram + "\t" + std::to_string(count) + "\t" + names[i]);
        }
      }
      write_lines(out_dir / "top_ngrams.tsv", plot);
    });
  }

  write_json_file(out_dir / "report.json", report);
  return report;
}

// ---------------------------------------------------------------------------
// Amplification study (NH estimator over data-generation outputs)

namespace {

json anh_report_to_json(const nhestimate::AnhReport& report, bool include_ids) {
  json out;
  out["label"] = report.label;
  out["params"] = {{"epsilon", report.params.epsilon},
                   {"ngram", report.params.ngram},
                   {"threshold", report.params.threshold}};
  out["corpus_size"] = report.corpus_size;
  out["counts"] = {{"f1", report.f1.size()},
                   {"f2", report.f2.size()},
                   {"s_eps", report.s_eps.size()},
                   {"s_eps_f1", report.s_eps_f1.size()},
                   {"s_eps_f2", report.s_eps_f2.size()},
                   {"anh", report.anh.size()}};
  if (include_ids) {
    out["f1"] = report.f1;
    out["f2"] = report.f2;
    out["s_eps"] = report.s_eps;
    out["s_eps_f1"] = report.s_eps_f1;
    out["s_eps_f2"] = report.s_eps_f2;
    out["anh"] = report.anh;
  }
  return out;
}

nhestimate::AnhReport estimate_run(const json& run_config, const nhestimate::AnhParams& params) {
  const std::string label = run_config.value("label", "run");
  const std::filesystem::path pairs = require(run_config, "pairs").get<std::string>();
  const std::filesystem::path scores =
      run_config.contains("scores") && !run_config["scores"].is_null()
          ? std::filesystem::path(run_config["scores"].get<std::string>())
          : std::filesystem::path{};
  return nhestimate::estimate_anh_file(pairs, scores, params, label);
}

}  // namespace

json run_amplification_study(const json& config, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  json report;
  report["study"] = "amplification";
  report["config"] = config;
  StageRunner stages(report);

  stages.run("estimate", [&] {
    nhestimate::AnhParams params;
    params.epsilon = config.value("epsilon", 1.0);
    params.ngram = config.value("ngram", 4);
    params.threshold = config.value("threshold", 2);

    const auto baseline = estimate_run(require(config, "baseline"), params);
    std::vector<nhestimate::AnhReport> derived;
    for (const auto& run_config : require(config, "derived")) {
      derived.push_back(estimate_run(run_config, params));
    }

    std::filesystem::create_directories(out_dir / "runs");
    write_json_file(out_dir / "runs" / (baseline.label + ".json"),
                    anh_report_to_json(baseline, true));
    for (const auto& run : derived) {
      write_json_file(out_dir / "runs" / (run.label + ".json"), anh_report_to_json(run, true));
    }

    const auto rows = nhestimate::amplification_report(baseline, derived);
    json table = json::array();
    std::vector<std::string> tsv{"label\tf1\tf2\ts_eps_f1\ts_eps_f2\tanh\tratio\tamplified"};
    for (const auto& row : rows) {
      table.push_back({{"label", row.label},
                       {"f1", row.f1},
                       {"f2", row.f2},
                       {"s_eps_f1", row.s_eps_f1},
                       {"s_eps_f2", row.s_eps_f2},
                       {"anh", row.anh},
                       {"ratio", std::isfinite(row.ratio) ? json(row.ratio) : json("inf")},
                       {"amplified", row.amplified}});
      tsv.push_back(row.label + "\t" + std::to_string(row.f1) + "\t" + std::to_string(row.f2) +
                    "\t" + std::to_string(row.s_eps_f1) + "\t" + std::to_string(row.s_eps_f2) +
                    "\t" + std::to_string(row.anh) + "\t" +
                    (std::isfinite(row.ratio) ? fmt(row.ratio) : "inf") + "\t" +
                    (row.amplified ? "yes" : "no"));
    }
    report["amplification"] = std::move(table);
    write_lines(out_dir / "amplification.tsv", tsv);
  });

  write_json_file(out_dir / "report.json", report);
  return report;
}

// ---------------------------------------------------------------------------

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;  // bare strings stay strings
  }

  json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty()) throw ConfigError("override has an empty key segment: " + assignment);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

json run_study(const json& config, const std::filesystem::path& out_dir) {
  const std::string kind = require(config, "study").get<std::string>();
  if (kind == "hp") return run_hp_study(config, out_dir);
  if (kind == "nh") return run_nh_study(config, out_dir);
  if (kind == "amplification") return run_amplification_study(config, out_dir);
  throw ConfigError("unknown study kind: " + kind + " (expected hp, nh or amplification)");
}

int report_exit_code(const nlohmann::json& report) {
  if (!report.contains("failed_stages") || report["failed_stages"].empty()) return exit_code::ok;
  const std::string category = report["failed_stages"][0].value("category", "other");
  if (category == "config") return exit_code::config_error;
  if (category == "backend") return exit_code::backend_failure;
  return exit_code::invariant_violation;
}

}  // namespace halluprobe::study
