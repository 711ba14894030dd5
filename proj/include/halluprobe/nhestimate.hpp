#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace halluprobe::nhestimate {

/// One decoded sample: source, its translation, and the cross-lingual
/// similarity score produced by an external scorer.
struct ScoredEntry {
  std::string source;
  std::string translation;
  double similarity = 0.0;
};

struct ScoredCorpus {
  std::vector<ScoredEntry> entries;

  std::size_t size() const { return entries.size(); }
};

/// `pairs` is a TSV of `source TAB translation` with similarity scores in
/// an aligned one-per-line file, or a 3-column TSV when scores_path is
/// empty.
ScoredCorpus load_scored_corpus(const std::filesystem::path& pairs_path,
                                const std::filesystem::path& scores_path = {});

struct AnhParams {
  double epsilon = 1.0;  // percent
  int ngram = 4;
  int threshold = 2;

  friend bool operator==(const AnhParams&, const AnhParams&) = default;
};

/// Oscillation filter F1: entries whose top repeated translation n-gram
/// outnumbers the top repeated source n-gram by at least `t`. Sentences
/// shorter than n tokens count as 0.
std::vector<std::int64_t> f1_select(const ScoredCorpus& corpus, int n, int t);

/// Repeated-translation filter F2: every entry whose exact translation
/// (whitespace-normalized) is shared by two or more entries with distinct
/// sources.
std::vector<std::int64_t> f2_select(const ScoredCorpus& corpus);

/// The floor(epsilon/100 * N) entries with the lowest similarity; ties are
/// broken toward the lower entry index.
std::vector<std::int64_t> bottom_epsilon(const ScoredCorpus& corpus, double epsilon);

/// Full output of the corpus-level estimator. All id vectors are sorted;
/// anh = (s_eps intersect f1) union (s_eps intersect f2).
struct AnhReport {
  std::string label;
  AnhParams params;
  std::int64_t corpus_size = 0;
  std::vector<std::int64_t> f1;
  std::vector<std::int64_t> f2;
  std::vector<std::int64_t> s_eps;
  std::vector<std::int64_t> s_eps_f1;
  std::vector<std::int64_t> s_eps_f2;
  std::vector<std::int64_t> anh;
};

AnhReport estimate_anh(const ScoredCorpus& corpus, const AnhParams& params,
                       const std::string& label = "");

/// Streaming variant for corpora that should not be materialized as full
/// strings: keeps per-entry hashes, flags and scores only.
AnhReport estimate_anh_file(const std::filesystem::path& pairs_path,
                            const std::filesystem::path& scores_path,
                            const AnhParams& params, const std::string& label = "");

struct AmplificationRow {
  std::string label;
  std::size_t f1 = 0;
  std::size_t f2 = 0;
  std::size_t s_eps_f1 = 0;
  std::size_t s_eps_f2 = 0;
  std::size_t anh = 0;
  double ratio = 1.0;  // anh relative to the baseline row
  bool amplified = false;
};

/// Baseline-first comparison table. All reports must share (epsilon, n, t);
/// a mismatch is refused.
std::vector<AmplificationRow> amplification_report(const AnhReport& baseline,
                                                   std::span<const AnhReport> derived);

}  // namespace halluprobe::nhestimate
