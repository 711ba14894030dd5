#include "halluprobe/nheval.hpp"

#include <algorithm>
#include <unordered_set>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/metrics.hpp"

namespace halluprobe::nheval {

TranslationSet load_translation_set(const std::filesystem::path& file, SetTag tag) {
  TranslationSet set;
  set.tag = tag;
  std::size_t line_no = 0;
  for (const auto& row : read_tsv(file)) {
    ++line_no;
    if (row.size() < 2)
      throw ConfigError(file.string() + " line " + std::to_string(line_no) +
                        ": expected `source TAB translation [TAB reference]`");
    TranslationEntry entry;
    entry.source = row[0];
    entry.translation = row[1];
    if (row.size() >= 3) entry.reference = row[2];
    set.entries.push_back(std::move(entry));
  }
  return set;
}

std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& file) {
  std::vector<AnnotationRecord> annotations;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(file)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_tsv(line);
    if (fields.size() < 3)
      throw ConfigError(file.string() + " line " + std::to_string(line_no) +
                        ": expected `nh TAB oh TAB dh` 0/1 fields");
    auto flag = [&](const std::string& f) {
      if (f == "0") return false;
      if (f == "1") return true;
      throw ConfigError(file.string() + " line " + std::to_string(line_no) +
                        ": annotation fields must be 0 or 1, got '" + f + "'");
    };
    annotations.push_back({flag(fields[0]), flag(fields[1]), flag(fields[2])});
  }
  validate_annotations(annotations);
  return annotations;
}

void validate_annotations(std::span<const AnnotationRecord> annotations) {
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    const auto& a = annotations[i];
    if ((a.oh || a.dh) && !a.nh)
      throw InvariantError("annotation " + std::to_string(i) +
                           " marks a hallucination subtype (oh/dh) without nh");
  }
}

double irs_repeats(const TranslationSet& translations,
                   std::span<const std::string> training_targets) {
  if (translations.entries.empty()) return 0.0;
  std::unordered_set<std::string> targets;
  targets.reserve(training_targets.size());
  for (const auto& t : training_targets) targets.insert(metrics::normalize_ws(t));
  std::size_t matched = 0;
  for (const auto& entry : translations.entries) {
    if (targets.contains(metrics::normalize_ws(entry.translation))) ++matched;
  }
  return 100.0 * static_cast<double>(matched) /
         static_cast<double>(translations.entries.size());
}

double unique_bigram_fraction(const TranslationSet& translations) {
  if (translations.entries.empty())
    throw ConfigError("unique_bigram_fraction: empty translation set");
  double sum = 0.0;
  for (const auto& entry : translations.entries) {
    const auto tokens = metrics::tokenize(entry.translation, metrics::Granularity::word).tokens;
    if (tokens.size() < 2) {
      sum += 1.0;  // no bigrams, hence no repeats
      continue;
    }
    const auto counts = metrics::ngram_counts(tokens, 2);
    sum += static_cast<double>(counts.size()) / static_cast<double>(tokens.size() - 1);
  }
  return sum / static_cast<double>(translations.entries.size());
}

std::vector<std::pair<std::string, std::int64_t>> top_ngram_counts(
    const TranslationSet& translations, int n, int k) {
  if (n < 1 || k < 1) throw ConfigError("top_ngram_counts: need n >= 1 and k >= 1");
  std::unordered_map<std::string, std::int64_t> pooled;
  for (const auto& entry : translations.entries) {
    const auto tokens = metrics::tokenize(entry.translation, metrics::Granularity::word).tokens;
    for (const auto& [gram, count] : metrics::ngram_counts(tokens, n)) pooled[gram] += count;
  }
  std::vector<std::pair<std::string, std::int64_t>> ranked(pooled.begin(), pooled.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(static_cast<std::size_t>(k));
  return ranked;
}

bool oscillation_flag(std::string_view translation, int n, int min_count) {
  if (n < 1 || min_count < 1) throw ConfigError("oscillation_flag: need n >= 1, min_count >= 1");
  const auto tokens = metrics::tokenize(translation, metrics::Granularity::word).tokens;
  return metrics::max_ngram_count(tokens, n) >= min_count;
}

namespace {

std::optional<double> set_bleu_scaled(const std::optional<TranslationSet>& set) {
  if (!set || set->entries.empty()) return std::nullopt;
  std::vector<metrics::TokenSeq> hyps, refs;
  hyps.reserve(set->entries.size());
  refs.reserve(set->entries.size());
  for (const auto& entry : set->entries) {
    if (!entry.reference) return std::nullopt;  // reference-free set: no BLEU cell
    hyps.push_back(metrics::tokenize(entry.translation, metrics::Granularity::word));
    refs.push_back(metrics::tokenize(*entry.reference, metrics::Granularity::word));
  }
  return 100.0 * metrics::corpus_bleu(hyps, refs);
}

}  // namespace

std::vector<SummaryRow> summarize(std::span<const PatternInputs> patterns) {
  std::vector<SummaryRow> rows;
  rows.reserve(patterns.size());
  for (const auto& inputs : patterns) {
    SummaryRow row;
    row.pattern = inputs.pattern;
    row.irs_bleu = set_bleu_scaled(inputs.irs);
    row.vrs_bleu = set_bleu_scaled(inputs.vrs);
    row.test_bleu = set_bleu_scaled(inputs.test);

    if (inputs.irs && !inputs.irs->entries.empty()) {
      const auto& irs = *inputs.irs;
      const double count = static_cast<double>(irs.entries.size());

      if (inputs.irs_annotations) {
        const auto& ann = *inputs.irs_annotations;
        if (ann.size() != irs.entries.size())
          throw InvariantError("pattern " + inputs.pattern + ": " +
                               std::to_string(ann.size()) + " annotations for " +
                               std::to_string(irs.entries.size()) + " translations");
        validate_annotations(ann);
        std::size_t nh = 0, oh = 0;
        for (const auto& a : ann) {
          nh += a.nh;
          oh += a.oh;
        }
        row.irs_nh_pct = 100.0 * static_cast<double>(nh) / count;
        row.irs_oh_pct = 100.0 * static_cast<double>(oh) / count;
      } else {
        // Automated proxies: oscillation for OH; oscillation or an exact
        // training-target copy for NH.
        std::size_t oh = 0, nh = 0;
        std::unordered_set<std::string> targets;
        if (inputs.training_targets) {
          for (const auto& t : *inputs.training_targets)
            targets.insert(metrics::normalize_ws(t));
        }
        for (const auto& entry : irs.entries) {
          const bool oscillates = oscillation_flag(entry.translation);
          const bool repeated =
              !targets.empty() && targets.contains(metrics::normalize_ws(entry.translation));
          oh += oscillates;
          nh += (oscillates || repeated);
        }
        row.irs_oh_pct = 100.0 * static_cast<double>(oh) / count;
        row.irs_nh_pct = 100.0 * static_cast<double>(nh) / count;
        row.nh_is_proxy = true;
        row.oh_is_proxy = true;
      }

      if (inputs.training_targets)
        row.irs_repeats_pct = irs_repeats(irs, *inputs.training_targets);
      row.irs_unique_bigrams = unique_bigram_fraction(irs);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace halluprobe::nheval
