#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace halluprobe::metrics {

enum class Granularity { word, character };

/// Tokenized sentence. Word granularity splits on runs of whitespace;
/// character granularity yields one token per non-whitespace UTF-8 code
/// point, in order. Tokenizing an empty string yields an empty sequence.
struct TokenSeq {
  std::vector<std::string> tokens;
  Granularity granularity = Granularity::word;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

TokenSeq tokenize(std::string_view text, Granularity granularity);

/// Word tokens re-joined with single spaces (collapses all whitespace runs).
std::string normalize_ws(std::string_view text);

/// Occurrence counts for token n-grams of one order; keys join tokens with
/// a single space.
std::unordered_map<std::string, std::int64_t> ngram_counts(std::span<const std::string> tokens,
                                                           int n);

/// Count of the most frequent n-gram; 0 when the sentence is shorter than n.
std::int64_t max_ngram_count(std::span<const std::string> tokens, int n);

enum class Smoothing { none, add_one };

/// chrF over character n-grams of orders 1..char_n: per-order precision and
/// recall are macro-averaged, then combined as an F-beta score. Scores lie
/// in [0,1]. Two empty strings score 1.0; exactly one empty scores 0.0.
double sentence_chrf(std::string_view hyp, std::string_view ref, int char_n = 6,
                     double beta = 2.0);

/// Sentence BLEU in [0,1] with brevity penalty. Smoothing::add_one adds one
/// to the clipped-match and candidate counts of every order above unigram,
/// so identity inputs of any nonzero length score exactly 1.0. An empty
/// hypothesis scores 0.0.
double sentence_bleu(const TokenSeq& hyp, const TokenSeq& ref, int max_n = 4,
                     Smoothing smoothing = Smoothing::add_one);

/// The gate metric of the perturbation detector: smoothed sentence BLEU on
/// word tokens, scaled to [0,1].
double adjusted_bleu(std::string_view hyp, std::string_view ref, int max_n = 4,
                     Smoothing smoothing = Smoothing::add_one);

/// 1 iff the whitespace-normalized strings are equal.
int exact_accuracy(std::string_view hyp, std::string_view ref);

/// Corpus BLEU: n-gram statistics are pooled over all pairs before taking
/// precisions (unsmoothed). Orders with no pooled candidate n-grams are
/// dropped from the geometric mean. Throws on an empty or misaligned corpus.
double corpus_bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs,
                   int max_n = 4);

enum class MetricKind { chrf, bleu, adjusted_bleu, accuracy };

MetricKind metric_kind_from_string(std::string_view name);
std::string_view to_string(MetricKind kind);

/// String-level dispatch used wherever a metric choice is a config value.
/// Every kind maps (hypothesis, reference) to [0,1].
double score(MetricKind kind, std::string_view hyp, std::string_view ref);

}  // namespace halluprobe::metrics
