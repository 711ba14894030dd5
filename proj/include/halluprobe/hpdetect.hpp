#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "halluprobe/attnstats.hpp"
#include "halluprobe/backend.hpp"

namespace halluprobe::hpdetect {

/// The perturbation tokens T: s tokens drawn without replacement from the
/// top_k most frequent word tokens of the training corpus.
struct PerturbationTokenSet {
  std::vector<std::string> tokens;       // size s, no duplicates
  std::vector<std::string> source_pool;  // the top_k candidates, by rank
  std::uint64_t seed = 0;
};

PerturbationTokenSet build_token_set(std::span<const std::string> corpus_sources, int top_k,
                                     int s, std::uint64_t seed);

/// Inserts the token at the first position: `token + ' ' + x` on the word
/// level (just the token when x is empty).
std::string perturb(const std::string& x, const std::string& token);

struct Sample {
  std::int64_t id = 0;
  std::string source;
  std::string reference;
};

/// One detected hallucination event: the unperturbed output was adequate
/// (base_score > base_threshold) and inserting `token` changed it almost
/// completely (delta_score < delta_threshold).
struct HPRecord {
  std::int64_t sample_id = 0;
  std::string token;
  std::string base_hyp;       // y' = Model(x)
  std::string perturbed_hyp;  // y~ = Model(token + x)
  double base_score = 0.0;    // adjusted_bleu(y', reference)
  double delta_score = 0.0;   // adjusted_bleu(y~, y')
};

struct DetectParams {
  double base_threshold = 0.09;
  double delta_threshold = 0.01;
};

struct TranslationFailure {
  std::int64_t sample_id = 0;
  std::optional<std::string> token;  // empty for the unperturbed call
  std::string message;
};

struct DetectionResult {
  std::vector<HPRecord> records;
  int unique_hp = 0;  // distinct sample ids among records
  int total_hp = 0;   // records.size(); one sample can fire on many tokens
  int gated_in = 0;   // samples whose base translation passed the gate
  int translated = 0; // samples with a successful base translation
  std::vector<TranslationFailure> failures;
};

/// Algorithm: translate each unperturbed source; keep the sample only when
/// the output scores above base_threshold against the reference; then, for
/// every token in T, translate the perturbed source and record an HPRecord
/// when the perturbed output scores below delta_threshold against the base
/// output. Untranslatable sentences are excluded from counts and reported
/// in `failures`. Refuses non-deterministic backends.
DetectionResult detect_hp(std::span<const Sample> samples,
                          backend::TranslationBackend& model,
                          const PerturbationTokenSet& tokens,
                          const DetectParams& params = {});

/// HPRecord joined with the attention statistics of its base and perturbed
/// translations, when the store has them.
struct AnnotatedHPRecord {
  HPRecord record;
  std::optional<attnstats::AttnSummary> base_attn;
  std::optional<attnstats::AttnSummary> perturbed_attn;
};

std::vector<AnnotatedHPRecord> attach_attention(std::span<const HPRecord> records,
                                                const attnstats::AttentionStore& store);

}  // namespace halluprobe::hpdetect
