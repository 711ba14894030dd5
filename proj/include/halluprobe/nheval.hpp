#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace halluprobe::nheval {

enum class SetTag { irs, vrs, test, other };

struct TranslationEntry {
  std::string source;
  std::string translation;
  std::optional<std::string> reference;
};

/// Model outputs over one evaluation set. References are optional; the
/// reference-free metrics run without them.
struct TranslationSet {
  std::vector<TranslationEntry> entries;
  SetTag tag = SetTag::other;
};

/// TSV rows: source TAB translation [TAB reference].
TranslationSet load_translation_set(const std::filesystem::path& file,
                                    SetTag tag = SetTag::other);

/// One human judgment per entry. Oscillatory and detached hallucinations
/// are natural-hallucination subtypes, so oh or dh without nh is rejected.
struct AnnotationRecord {
  bool nh = false;
  bool oh = false;
  bool dh = false;
};

/// TSV rows of three 0/1 fields `nh TAB oh TAB dh`; `#` lines are comments.
std::vector<AnnotationRecord> load_annotations(const std::filesystem::path& file);
void validate_annotations(std::span<const AnnotationRecord> annotations);

/// Percentage of translations that exactly match (whitespace-normalized)
/// any training-data target.
double irs_repeats(const TranslationSet& translations,
                   std::span<const std::string> training_targets);

/// Mean over entries of distinct-bigram count / (L - 1) for token length
/// L >= 2; shorter sentences contribute 1.0. Low values signal oscillation.
double unique_bigram_fraction(const TranslationSet& translations);

/// Counts pooled over the whole set, top k, ties broken lexicographically.
std::vector<std::pair<std::string, std::int64_t>> top_ngram_counts(
    const TranslationSet& translations, int n, int k);

/// True iff some token n-gram occurs at least min_count times: the
/// automated proxy for an oscillatory hallucination.
bool oscillation_flag(std::string_view translation, int n = 4, int min_count = 2);

/// Everything known about one noise pattern's model.
struct PatternInputs {
  std::string pattern;
  std::optional<TranslationSet> irs;
  std::optional<TranslationSet> vrs;
  std::optional<TranslationSet> test;
  std::optional<std::vector<AnnotationRecord>> irs_annotations;
  std::optional<std::vector<std::string>> training_targets;
};

/// One row of the noise-pattern analysis table. BLEU cells are on the
/// 0-100 scale, hallucination cells are percentages. Cells are empty when
/// their inputs are missing; NH/OH fall back to automated proxies flagged
/// as such when no annotations were supplied.
struct SummaryRow {
  std::string pattern;
  std::optional<double> irs_bleu;
  std::optional<double> vrs_bleu;
  std::optional<double> test_bleu;
  std::optional<double> irs_nh_pct;
  std::optional<double> irs_oh_pct;
  std::optional<double> irs_repeats_pct;
  std::optional<double> irs_unique_bigrams;
  bool nh_is_proxy = false;
  bool oh_is_proxy = false;
};

std::vector<SummaryRow> summarize(std::span<const PatternInputs> patterns);

}  // namespace halluprobe::nheval
