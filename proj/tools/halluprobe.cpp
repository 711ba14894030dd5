// halluprobe: corpus-scale diagnostics for machine-translation
// hallucinations. Subcommands cover overlap metrics, leave-out
// memorization estimation, perturbation-based hallucination detection,
// corpus noise generation, natural-hallucination evaluation and the
// corpus-level NH estimator, plus study drivers that chain them.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

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
#include "halluprobe/study.hpp"

namespace hp = halluprobe;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

void emit_json(const std::optional<std::string>& path, const json& doc) {
  if (path && *path != "-") {
    hp::write_file(*path, doc.dump(2) + "\n");
  } else {
    std::cout << doc.dump(2) << "\n";
  }
}

std::string ascii_lower(std::string s) {
  for (char& c : s) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return s;
}

// ---------------------------------------------------------------------------
// metrics: score a hyp TAB ref TSV line by line

struct MetricsArgs {
  std::string kind = "chrf";
  std::string input;
  std::string scores_out = "-";
  std::optional<std::string> summary_out;
  bool lowercase = false;
};

int cmd_metrics(const MetricsArgs& args) {
  const auto kind = hp::metrics::metric_kind_from_string(args.kind);
  const auto rows = hp::read_tsv(args.input);

  std::vector<double> scores;
  std::vector<hp::metrics::TokenSeq> hyp_tokens, ref_tokens;
  scores.reserve(rows.size());
  std::size_t line_no = 0;
  std::size_t both_empty = 0;  // scored 1.0 by definition; flagged below
  for (const auto& row : rows) {
    ++line_no;
    if (row.size() < 2)
      throw hp::ConfigError(args.input + " line " + std::to_string(line_no) +
                            ": expected `hyp TAB ref`");
    std::string hyp = args.lowercase ? ascii_lower(row[0]) : row[0];
    std::string ref = args.lowercase ? ascii_lower(row[1]) : row[1];
    if (hp::metrics::normalize_ws(hyp).empty() && hp::metrics::normalize_ws(ref).empty())
      ++both_empty;
    scores.push_back(hp::metrics::score(kind, hyp, ref));
    hyp_tokens.push_back(hp::metrics::tokenize(hyp, hp::metrics::Granularity::word));
    ref_tokens.push_back(hp::metrics::tokenize(ref, hp::metrics::Granularity::word));
  }
  if (scores.empty()) throw hp::ConfigError("no pairs in " + args.input);

  std::vector<std::string> lines;
  lines.reserve(scores.size());
  for (double s : scores) lines.push_back(fmt(s));
  if (args.scores_out == "-") {
    for (const auto& line : lines) std::cout << line << "\n";
  } else {
    hp::write_lines(args.scores_out, lines);
  }

  double sum = 0.0, lo = scores[0], hi = scores[0];
  for (double s : scores) {
    sum += s;
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  json summary;
  summary["metric"] = args.kind;
  summary["pairs"] = scores.size();
  summary["mean"] = sum / static_cast<double>(scores.size());
  summary["min"] = lo;
  summary["max"] = hi;
  summary["corpus_bleu"] = hp::metrics::corpus_bleu(hyp_tokens, ref_tokens);
  summary["lowercased"] = args.lowercase;
  summary["both_empty_pairs"] = both_empty;
  emit_json(args.summary_out, summary);
  return 0;
}

// ---------------------------------------------------------------------------
// mve: memorization values + comparison sets from a run manifest

struct MveArgs {
  std::string manifest;
  std::optional<std::string> refs;
  std::optional<std::string> sources;
  std::string metric = "chrf";
  int min_exclusions = 2;
  int top = 100;
  std::uint64_t seed = 0;
  std::optional<double> floor;
  std::string out;
};

int cmd_mve(const MveArgs& args) {
  auto manifest = hp::memorization::load_run_manifest(args.manifest);
  std::vector<std::string> refs;
  if (args.refs) refs = hp::read_lines(*args.refs);
  if (!manifest.has_scores() && refs.empty())
    throw hp::ConfigError("hypothesis manifests need --refs for scoring");

  const auto metric = hp::metrics::metric_kind_from_string(args.metric);
  auto records = hp::memorization::compute_mem_values(manifest, refs, metric,
                                                      args.min_exclusions);

  std::filesystem::create_directories(args.out);
  std::vector<std::string> lines{"sample_id\tmem_value\tn_included\tn_excluded\thas_value\teligible"};
  for (const auto& rec : records) {
    lines.push_back(std::to_string(rec.sample_id) + "\t" + fmt(rec.mem_value) + "\t" +
                    std::to_string(rec.n_included) + "\t" + std::to_string(rec.n_excluded) +
                    "\t" + std::to_string(rec.has_value ? 1 : 0) + "\t" +
                    std::to_string(rec.eligible ? 1 : 0));
  }
  hp::write_lines(std::filesystem::path(args.out) / "mem_values.tsv", lines);

  const double floor = args.floor.value_or(-std::numeric_limits<double>::infinity());
  auto sets = hp::memorization::select_sets(records, args.top, args.seed, floor);

  std::vector<std::string> sources;
  if (args.sources) sources = hp::read_lines(*args.sources);

  std::unordered_map<std::int64_t, double> mem;
  for (const auto& rec : records) mem[rec.sample_id] = rec.mem_value;
  auto write_set = [&](const std::string& name, const std::vector<std::int64_t>& ids) {
    std::vector<std::string> set_lines;
    for (auto id : ids) {
      std::string line = std::to_string(id) + "\t" + fmt(mem[id]);
      if (!sources.empty() && !refs.empty()) {
        if (id < 0 || id >= static_cast<std::int64_t>(sources.size()) ||
            id >= static_cast<std::int64_t>(refs.size()))
          throw hp::ConfigError("sample id " + std::to_string(id) +
                                " is outside --sources/--refs");
        line += "\t" + sources[static_cast<std::size_t>(id)] + "\t" +
                refs[static_cast<std::size_t>(id)];
      }
      set_lines.push_back(std::move(line));
    }
    hp::write_lines(std::filesystem::path(args.out) / name, set_lines);
  };
  write_set("memorized.tsv", sets.memorized);
  write_set("random.tsv", sets.random);

  std::int64_t eligible = 0;
  for (const auto& rec : records) eligible += rec.eligible ? 1 : 0;
  json summary;
  summary["metric"] = args.metric;
  summary["min_exclusions"] = args.min_exclusions;
  summary["records"] = records.size();
  summary["eligible"] = eligible;
  summary["k"] = args.top;
  summary["seed"] = args.seed;
  if (args.floor) summary["floor"] = *args.floor;
  summary["memorized"] = sets.memorized;
  summary["random"] = sets.random;
  hp::write_file(std::filesystem::path(args.out) / "summary.json", summary.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// hp-detect: Algorithm-2 detection over a sample set file

struct HpDetectArgs {
  std::string set_file;
  std::string backend_spec;
  bool nondeterministic = false;
  std::string corpus_src;
  int tokens = 30;
  int top_k = 100;
  std::uint64_t seed = 0;
  std::string thresholds = "0.09,0.01";
  std::string out;
  std::optional<std::string> attention_dir;
  std::size_t max_inflight = 8;
  std::vector<std::string> backend_env;
};

std::vector<hp::hpdetect::Sample> load_sample_set(const std::string& file) {
  std::vector<hp::hpdetect::Sample> samples;
  std::size_t line_no = 0;
  for (const auto& row : hp::read_tsv(file)) {
    ++line_no;
    hp::hpdetect::Sample sample;
    if (row.size() == 3) {
      sample = {std::stoll(row[0]), row[1], row[2]};
    } else if (row.size() >= 4) {
      // mve set file: id, mem_value, source, reference
      sample = {std::stoll(row[0]), row[2], row[3]};
    } else {
      throw hp::ConfigError(file + " line " + std::to_string(line_no) +
                            ": expected `id TAB source TAB reference` or the 4-column "
                            "mve set format");
    }
    samples.push_back(std::move(sample));
  }
  if (samples.empty()) throw hp::ConfigError("no samples in " + file);
  return samples;
}

int cmd_hp_detect(const HpDetectArgs& args) {
  const auto samples = load_sample_set(args.set_file);
  auto backend = hp::backend::parse_backend_spec(args.backend_spec, args.nondeterministic,
                                                 args.backend_env);
  backend->set_max_inflight(args.max_inflight);

  const auto corpus_sources = hp::read_lines(args.corpus_src);
  const auto token_set =
      hp::hpdetect::build_token_set(corpus_sources, args.top_k, args.tokens, args.seed);

  hp::hpdetect::DetectParams params;
  if (std::sscanf(args.thresholds.c_str(), "%lf,%lf", &params.base_threshold,
                  &params.delta_threshold) != 2)
    throw hp::ConfigError("--thresholds wants `base,delta`, got: " + args.thresholds);

  const auto result = hp::hpdetect::detect_hp(samples, *backend, token_set, params);

  std::filesystem::create_directories(args.out);
  std::vector<std::string> lines{"sample_id\ttoken\tbase_score\tdelta_score\tbase_hyp\tperturbed_hyp"};
  for (const auto& rec : result.records) {
    lines.push_back(std::to_string(rec.sample_id) + "\t" + rec.token + "\t" +
                    fmt(rec.base_score) + "\t" + fmt(rec.delta_score) + "\t" + rec.base_hyp +
                    "\t" + rec.perturbed_hyp);
  }
  hp::write_lines(std::filesystem::path(args.out) / "hp_records.tsv", lines);

  std::vector<std::string> failure_lines{"sample_id\ttoken\terror"};
  for (const auto& f : result.failures) {
    failure_lines.push_back(std::to_string(f.sample_id) + "\t" + f.token.value_or("-") +
                            "\t" + f.message);
  }
  hp::write_lines(std::filesystem::path(args.out) / "failures.tsv", failure_lines);

  json summary;
  summary["unique_hp"] = result.unique_hp;
  summary["total_hp"] = result.total_hp;
  summary["samples"] = samples.size();
  summary["gated_in"] = result.gated_in;
  summary["translated"] = result.translated;
  summary["failures"] = result.failures.size();
  summary["tokens"] = token_set.tokens;
  summary["thresholds"] = {{"base", params.base_threshold},
                           {"delta", params.delta_threshold}};
  summary["seed"] = args.seed;

  if (args.attention_dir) {
    const auto store = hp::attnstats::AttentionStore::load_dir(*args.attention_dir);
    const auto annotated = hp::hpdetect::attach_attention(result.records, store);
    std::size_t with_base = 0, with_perturbed = 0;
    for (const auto& a : annotated) {
      with_base += a.base_attn.has_value();
      with_perturbed += a.perturbed_attn.has_value();
    }
    summary["attention"] = {{"records", annotated.size()},
                            {"with_base", with_base},
                            {"with_perturbed", with_perturbed}};
  }

  hp::write_file(std::filesystem::path(args.out) / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// noise-forge

struct NoiseForgeArgs {
  std::string pattern;
  std::string irs_dir;
  std::optional<std::string> donor_dir;
  int repeats = 1000;
  std::optional<std::size_t> count;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<std::string> clean_dir;
  bool emit_training = false;
};

int cmd_noise_forge(const NoiseForgeArgs& args) {
  const auto pattern = hp::noiseforge::pattern_from_string(args.pattern);
  const auto irs = hp::noiseforge::load_irs(args.irs_dir);

  hp::noiseforge::StringSet irs_sources, irs_targets;
  for (const auto& p : irs.pairs) {
    irs_sources.insert(p.source);
    irs_targets.insert(p.target);
  }

  std::optional<hp::noiseforge::DonorCorpus> donor;
  if (args.donor_dir) donor = hp::noiseforge::DonorCorpus::load(*args.donor_dir);
  auto need_donor = [&]() -> const hp::noiseforge::DonorCorpus& {
    if (!donor) throw hp::ConfigError("pattern " + args.pattern + " needs --donor");
    return *donor;
  };

  hp::noiseforge::NoiseSet set;
  switch (pattern) {
    case hp::noiseforge::NoisePattern::uu: {
      const std::size_t count =
          args.count.value_or(irs.pairs.size() * static_cast<std::size_t>(args.repeats));
      set = hp::noiseforge::gen_uu(need_donor(), count, args.seed, &irs_sources, &irs_targets);
      break;
    }
    case hp::noiseforge::NoisePattern::rr:
      set = hp::noiseforge::gen_rr(irs, args.repeats);
      break;
    case hp::noiseforge::NoisePattern::ru:
      set = hp::noiseforge::gen_ru(irs.sources(), need_donor(), args.repeats, args.seed,
                                   &irs_targets);
      break;
    case hp::noiseforge::NoisePattern::ur:
      set = hp::noiseforge::gen_ur(irs.targets(), need_donor(), args.repeats, args.seed,
                                   &irs_sources);
      break;
  }

  hp::noiseforge::NoiseSpec spec;
  spec.pattern = pattern;
  spec.unit_count = static_cast<int>(irs.pairs.size());
  spec.repeats = args.repeats;
  spec.seed = args.seed;
  hp::noiseforge::save_noise_set(args.out, set, spec);
  std::cerr << "wrote " << set.pairs.size() << " " << args.pattern << " pairs to " << args.out
            << "\n";

  if (args.clean_dir && args.emit_training) {
    const auto clean = hp::load_parallel_corpus(*args.clean_dir);
    hp::noiseforge::validate_irs(irs, &clean);
    const auto emitted = hp::noiseforge::emit_training_corpus(clean, set, args.seed);
    const auto train_dir = std::filesystem::path(args.out) / "train";
    hp::save_parallel_corpus(train_dir, emitted.corpus);
    std::vector<std::string> provenance;
    provenance.reserve(emitted.is_noise.size());
    for (auto flag : emitted.is_noise) provenance.push_back(flag ? "noise" : "clean");
    hp::write_lines(train_dir / "provenance.txt", provenance);
    std::cerr << "wrote " << emitted.corpus.size() << " shuffled training lines ("
              << set.pairs.size() << " noise)\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// nh-eval

struct NhEvalArgs {
  std::string translations_dir;
  std::optional<std::string> train_targets;
  std::optional<std::string> annotations;
  std::string out;
  std::optional<std::string> bigrams_out;
  int ngram = 2;
  int top = 5;
};

int cmd_nh_eval(const NhEvalArgs& args) {
  namespace fs = std::filesystem;
  std::vector<hp::nheval::PatternInputs> patterns;
  std::vector<std::string> names;

  if (!fs::is_directory(args.translations_dir))
    throw hp::ConfigError("--translations must be a directory of per-pattern subdirectories");
  std::vector<fs::path> subdirs;
  for (const auto& entry : fs::directory_iterator(args.translations_dir)) {
    if (entry.is_directory()) subdirs.push_back(entry.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  if (subdirs.empty())
    throw hp::ConfigError("no pattern subdirectories under " + args.translations_dir);

  for (const auto& dir : subdirs) {
    hp::nheval::PatternInputs inputs;
    inputs.pattern = dir.filename().string();
    names.push_back(inputs.pattern);
    if (fs::exists(dir / "irs.tsv"))
      inputs.irs = hp::nheval::load_translation_set(dir / "irs.tsv", hp::nheval::SetTag::irs);
    if (fs::exists(dir / "vrs.tsv"))
      inputs.vrs = hp::nheval::load_translation_set(dir / "vrs.tsv", hp::nheval::SetTag::vrs);
    if (fs::exists(dir / "test.tsv"))
      inputs.test = hp::nheval::load_translation_set(dir / "test.tsv", hp::nheval::SetTag::test);

    if (fs::exists(dir / "annotations.tsv")) {
      inputs.irs_annotations = hp::nheval::load_annotations(dir / "annotations.tsv");
    } else if (args.annotations) {
      inputs.irs_annotations = hp::nheval::load_annotations(*args.annotations);
    }
    if (fs::exists(dir / "train_targets.txt")) {
      inputs.training_targets = hp::read_lines(dir / "train_targets.txt");
    } else if (args.train_targets) {
      inputs.training_targets = hp::read_lines(*args.train_targets);
    }
    patterns.push_back(std::move(inputs));
  }

  const auto rows = hp::nheval::summarize(patterns);
  json report;
  report["patterns"] = json::array();
  for (const auto& row : rows) {
    json cell;
    cell["pattern"] = row.pattern;
    cell["irs_bleu"] = row.irs_bleu ? json(*row.irs_bleu) : json(nullptr);
    cell["vrs_bleu"] = row.vrs_bleu ? json(*row.vrs_bleu) : json(nullptr);
    cell["test_bleu"] = row.test_bleu ? json(*row.test_bleu) : json(nullptr);
    cell["irs_nh_pct"] = row.irs_nh_pct ? json(*row.irs_nh_pct) : json(nullptr);
    cell["irs_oh_pct"] = row.irs_oh_pct ? json(*row.irs_oh_pct) : json(nullptr);
    cell["irs_repeats_pct"] = row.irs_repeats_pct ? json(*row.irs_repeats_pct) : json(nullptr);
    cell["irs_unique_bigrams"] =
        row.irs_unique_bigrams ? json(*row.irs_unique_bigrams) : json(nullptr);
    cell["nh_is_proxy"] = row.nh_is_proxy;
    cell["oh_is_proxy"] = row.oh_is_proxy;
    report["patterns"].push_back(std::move(cell));
  }
  emit_json(args.out, report);

  if (args.bigrams_out) {
    std::vector<std::string> plot{"ngram\tcount\tpattern"};
    for (std::size_t i = 0; i < patterns.size(); ++i) {
      if (!patterns[i].irs) continue;
      for (const auto& [gram, count] :
           hp::nheval::top_ngram_counts(*patterns[i].irs, args.ngram, args.top)) {
        plot.push_back(gram + "\t" + std::to_string(count) + "\t" + names[i]);
      }
    }
    hp::write_lines(*args.bigrams_out, plot);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// nh-estimate

struct NhEstimateArgs {
  std::string pairs;
  std::optional<std::string> scores;
  double epsilon = 1.0;
  int ngram = 4;
  int threshold = 2;
  std::string label = "run";
  std::string out;
};

int cmd_nh_estimate(const NhEstimateArgs& args) {
  hp::nhestimate::AnhParams params;
  params.epsilon = args.epsilon;
  params.ngram = args.ngram;
  params.threshold = args.threshold;
  const auto report = hp::nhestimate::estimate_anh_file(
      args.pairs, args.scores ? std::filesystem::path(*args.scores) : std::filesystem::path{},
      params, args.label);

  json out;
  out["label"] = report.label;
  out["params"] = {{"epsilon", params.epsilon},
                   {"ngram", params.ngram},
                   {"threshold", params.threshold}};
  out["corpus_size"] = report.corpus_size;
  out["counts"] = {{"f1", report.f1.size()},       {"f2", report.f2.size()},
                   {"s_eps", report.s_eps.size()}, {"s_eps_f1", report.s_eps_f1.size()},
                   {"s_eps_f2", report.s_eps_f2.size()}, {"anh", report.anh.size()}};
  out["f1"] = report.f1;
  out["f2"] = report.f2;
  out["s_eps"] = report.s_eps;
  out["s_eps_f1"] = report.s_eps_f1;
  out["s_eps_f2"] = report.s_eps_f2;
  out["anh"] = report.anh;
  emit_json(args.out, out);
  return 0;
}

// ---------------------------------------------------------------------------
// attn-stats

struct AttnStatsArgs {
  std::string dir;
  std::string sets;  // comma-separated set files, first column = sample id
  std::string variant = "base";
  std::string out;
};

int cmd_attn_stats(const AttnStatsArgs& args) {
  const auto store = hp::attnstats::AttentionStore::load_dir(args.dir);

  json out;
  out["variant"] = args.variant;
  out["matrices_loaded"] = store.size();
  out["sets"] = json::object();

  std::size_t start = 0;
  const std::string& sets = args.sets;
  while (start <= sets.size()) {
    auto comma = sets.find(',', start);
    const std::string file =
        sets.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (file.empty()) {
      if (comma == std::string::npos) break;
      start = comma + 1;
      continue;
    }
    std::vector<std::int64_t> ids;
    for (const auto& row : hp::read_tsv(file)) ids.push_back(std::stoll(row[0]));

    const auto matrices = store.collect(ids, args.variant);
    json section;
    section["samples"] = ids.size();
    section["matrices"] = matrices.size();
    section["missing"] = ids.size() - matrices.size();
    if (!matrices.empty()) {
      const auto stats = hp::attnstats::aggregate(matrices);
      section["attention_entropy"] = stats.row_entropy;
      section["diagonal_attention_entropy"] = stats.diagonal_entropy;
      section["avg_diagonal_attention"] = stats.diagonal_mass;
      section["avg_last_token_attention"] = stats.last_token_attention;
    }
    out["sets"][std::filesystem::path(file).stem().string()] = std::move(section);

    if (comma == std::string::npos) break;
    start = comma + 1;
  }

  emit_json(args.out, out);
  return 0;
}

// ---------------------------------------------------------------------------
// study

struct StudyArgs {
  std::string kind;
  std::string config_file;
  std::string out;
  std::vector<std::string> overrides;
};

int cmd_study(const StudyArgs& args) {
  json config = json::parse(hp::read_file(args.config_file));
  for (const auto& assignment : args.overrides) hp::study::apply_override(config, assignment);
  if (!args.kind.empty()) {
    if (config.contains("study") && config["study"].get<std::string>() != args.kind)
      throw hp::ConfigError("config file says study=" +
                            config["study"].get<std::string>() + " but the command line says " +
                            args.kind);
    config["study"] = args.kind;
  }
  const json report = hp::study::run_study(config, args.out);
  const int code = hp::study::report_exit_code(report);
  if (code != 0) {
    std::cerr << "study finished with failed stages:\n";
    for (const auto& failure : report["failed_stages"]) {
      std::cerr << "  [" << failure["category"].get<std::string>() << "] "
                << failure["stage"].get<std::string>() << ": "
                << failure["error"].get<std::string>() << "\n";
    }
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hallucination diagnostics for machine translation corpora"};
  app.require_subcommand(1);

  MetricsArgs metrics_args;
  auto* metrics_cmd = app.add_subcommand("metrics", "score a `hyp TAB ref` TSV file");
  metrics_cmd->add_option("--kind", metrics_args.kind,
                          "chrf | bleu | adjusted_bleu | accuracy");
  metrics_cmd->add_option("--in", metrics_args.input, "input TSV")->required();
  metrics_cmd->add_option("--scores-out", metrics_args.scores_out,
                          "per-line scores destination (- for stdout)");
  metrics_cmd->add_option("--summary-out", metrics_args.summary_out,
                          "summary JSON destination (- for stdout)");
  metrics_cmd->add_flag("--lowercase", metrics_args.lowercase,
                        "ASCII-lowercase both sides before scoring");

  MveArgs mve_args;
  auto* mve_cmd = app.add_subcommand("mve", "memorization values from a run manifest");
  mve_cmd->add_option("--manifest", mve_args.manifest, "manifest directory")->required();
  mve_cmd->add_option("--refs", mve_args.refs, "references, one per sample id");
  mve_cmd->add_option("--sources", mve_args.sources,
                      "sources, one per sample id (enables hp-ready set files)");
  mve_cmd->add_option("--metric", mve_args.metric, "chrf | bleu | accuracy");
  mve_cmd->add_option("--min-exclusions", mve_args.min_exclusions,
                      "eligibility floor on leave-out count");
  mve_cmd->add_option("--top", mve_args.top, "comparison set size k");
  mve_cmd->add_option("--seed", mve_args.seed, "random-set sampling seed")->required();
  mve_cmd->add_option("--floor", mve_args.floor, "minimum mem value for the random pool");
  mve_cmd->add_option("--out", mve_args.out, "output directory")->required();

  HpDetectArgs hp_args;
  auto* hp_cmd = app.add_subcommand("hp-detect", "hallucination-under-perturbation detection");
  hp_cmd->add_option("--set", hp_args.set_file, "sample set TSV")->required();
  hp_cmd->add_option("--backend", hp_args.backend_spec, "manifest:FILE | cmd:\"PROG ARGS\"")
      ->required();
  hp_cmd->add_flag("--nondeterministic", hp_args.nondeterministic,
                   "declare the backend non-deterministic (refused here)");
  hp_cmd->add_option("--corpus-src", hp_args.corpus_src,
                     "training-corpus sources for the token pool")
      ->required();
  hp_cmd->add_option("--tokens", hp_args.tokens, "perturbation tokens to sample");
  hp_cmd->add_option("--topk", hp_args.top_k, "frequency pool size");
  hp_cmd->add_option("--seed", hp_args.seed, "token sampling seed")->required();
  hp_cmd->add_option("--thresholds", hp_args.thresholds, "base,delta adjusted-BLEU gates");
  hp_cmd->add_option("--out", hp_args.out, "output directory")->required();
  hp_cmd->add_option("--attention", hp_args.attention_dir, "attention dump directory");
  hp_cmd->add_option("--max-inflight", hp_args.max_inflight,
                     "pipelined requests to a command backend");
  hp_cmd->add_option("--backend-env", hp_args.backend_env,
                     "KEY=VALUE exported to the backend child (repeatable)");

  NoiseForgeArgs forge_args;
  auto* forge_cmd = app.add_subcommand("noise-forge", "materialize a corpus noise pattern");
  forge_cmd->add_option("--pattern", forge_args.pattern, "uu | rr | ru | ur")->required();
  forge_cmd->add_option("--irs", forge_args.irs_dir, "IRS directory (src.txt/tgt.txt)")
      ->required();
  forge_cmd->add_option("--donor", forge_args.donor_dir, "donor corpus directory");
  forge_cmd->add_option("--repeats", forge_args.repeats, "repetitions per IRS unit");
  forge_cmd->add_option("--count", forge_args.count, "UU pair count (default units*repeats)");
  forge_cmd->add_option("--seed", forge_args.seed, "sampling seed")->required();
  forge_cmd->add_option("--out", forge_args.out, "output directory")->required();
  forge_cmd->add_option("--clean", forge_args.clean_dir, "clean corpus directory");
  forge_cmd->add_flag("--emit-training", forge_args.emit_training,
                      "also emit the shuffled clean+noise training corpus");

  NhEvalArgs nh_eval_args;
  auto* nh_eval_cmd = app.add_subcommand("nh-eval", "natural-hallucination evaluation table");
  nh_eval_cmd->add_option("--translations", nh_eval_args.translations_dir,
                          "directory of per-pattern subdirectories")
      ->required();
  nh_eval_cmd->add_option("--train-targets", nh_eval_args.train_targets,
                          "training targets for repeat matching");
  nh_eval_cmd->add_option("--annotations", nh_eval_args.annotations,
                          "shared NH/OH/DH annotation file");
  nh_eval_cmd->add_option("--out", nh_eval_args.out, "report JSON destination")->required();
  nh_eval_cmd->add_option("--bigrams-out", nh_eval_args.bigrams_out,
                          "top n-gram plot data TSV");
  nh_eval_cmd->add_option("--ngram", nh_eval_args.ngram, "plot n-gram order");
  nh_eval_cmd->add_option("--top", nh_eval_args.top, "plot n-grams per pattern");

  NhEstimateArgs est_args;
  auto* est_cmd = app.add_subcommand("nh-estimate", "corpus-level NH estimator");
  est_cmd->add_option("--pairs", est_args.pairs, "source/translation TSV")->required();
  est_cmd->add_option("--scores", est_args.scores, "aligned similarity scores (one per line)");
  est_cmd->add_option("--epsilon", est_args.epsilon, "bottom similarity percentage");
  est_cmd->add_option("--ngram", est_args.ngram, "repeat n-gram order");
  est_cmd->add_option("--threshold", est_args.threshold, "repeat-margin threshold");
  est_cmd->add_option("--label", est_args.label, "run label for reports");
  est_cmd->add_option("--out", est_args.out, "report JSON destination")->required();

  AttnStatsArgs attn_args;
  auto* attn_cmd = app.add_subcommand("attn-stats", "attention statistics over sample sets");
  attn_cmd->add_option("--dir", attn_args.dir, "directory of ATTN v1 files")->required();
  attn_cmd->add_option("--sets", attn_args.sets, "comma-separated set TSVs")->required();
  attn_cmd->add_option("--variant", attn_args.variant, "matrix variant to aggregate");
  attn_cmd->add_option("--out", attn_args.out, "output JSON destination")->required();

  StudyArgs study_args;
  auto* study_cmd = app.add_subcommand("study", "run a full study from a config file");
  study_cmd->add_option("kind", study_args.kind, "hp | nh | amplification (optional)");
  study_cmd->add_option("--config", study_args.config_file, "study config JSON")->required();
  study_cmd->add_option("--out", study_args.out, "output directory")->required();
  study_cmd->add_option("--set", study_args.overrides,
                        "config override key=value (dot paths allowed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return hp::exit_code::config_error;
  }

  try {
    if (*metrics_cmd) return cmd_metrics(metrics_args);
    if (*mve_cmd) return cmd_mve(mve_args);
    if (*hp_cmd) return cmd_hp_detect(hp_args);
    if (*forge_cmd) return cmd_noise_forge(forge_args);
    if (*nh_eval_cmd) return cmd_nh_eval(nh_eval_args);
    if (*est_cmd) return cmd_nh_estimate(est_args);
    if (*attn_cmd) return cmd_attn_stats(attn_args);
    if (*study_cmd) return cmd_study(study_args);
  } catch (const hp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return hp::exit_code::config_error;
  } catch (const hp::BackendError& e) {
    std::cerr << "backend error: " << e.what() << "\n";
    return hp::exit_code::backend_failure;
  } catch (const hp::InvariantError& e) {
    std::cerr << "invariant violation: " << e.what() << "\n";
    return hp::exit_code::invariant_violation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
