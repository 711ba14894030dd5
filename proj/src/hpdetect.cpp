#include "halluprobe/hpdetect.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

#include "halluprobe/errors.hpp"
#include "halluprobe/metrics.hpp"
#include "halluprobe/rng.hpp"

namespace halluprobe::hpdetect {

PerturbationTokenSet build_token_set(std::span<const std::string> corpus_sources, int top_k,
                                     int s, std::uint64_t seed) {
  if (corpus_sources.empty()) throw ConfigError("build_token_set: empty corpus");
  if (s < 1 || top_k < s)
    throw ConfigError("build_token_set: need 1 <= s <= top_k");

  std::unordered_map<std::string, std::int64_t> freq;
  for (const auto& sentence : corpus_sources) {
    for (auto& token : metrics::tokenize(sentence, metrics::Granularity::word).tokens) {
      ++freq[std::move(token)];
    }
  }
  if (freq.size() < static_cast<std::size_t>(top_k))
    throw ConfigError("build_token_set: vocabulary has " + std::to_string(freq.size()) +
                      " tokens, need top_k=" + std::to_string(top_k));

  // Frequency ranking, ties broken lexicographically.
  std::vector<std::pair<std::string, std::int64_t>> ranked(freq.begin(), freq.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  ranked.resize(static_cast<std::size_t>(top_k));

  PerturbationTokenSet set;
  set.seed = seed;
  set.source_pool.reserve(ranked.size());
  for (auto& [token, count] : ranked) set.source_pool.push_back(std::move(token));

  SeededRng rng(seed);
  auto picks = rng.sample_without_replacement(set.source_pool.size(),
                                              static_cast<std::size_t>(s));
  set.tokens.reserve(picks.size());
  for (auto idx : picks) set.tokens.push_back(set.source_pool[idx]);
  return set;
}

std::string perturb(const std::string& x, const std::string& token) {
  if (x.empty()) return token;
  return token + " " + x;
}

DetectionResult detect_hp(std::span<const Sample> samples,
                          backend::TranslationBackend& model,
                          const PerturbationTokenSet& tokens, const DetectParams& params) {
  if (!model.deterministic())
    throw ConfigError("detect_hp requires a deterministic backend; rerun without sampling "
                      "or drop --nondeterministic");
  if (tokens.tokens.empty()) throw ConfigError("detect_hp: empty perturbation token set");

  DetectionResult result;

  // Base pass over all unperturbed sources.
  std::vector<std::string> base_sources;
  base_sources.reserve(samples.size());
  for (const auto& sample : samples) base_sources.push_back(sample.source);
  auto base_items = model.translate_batch(base_sources);

  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& sample = samples[i];
    if (!base_items[i].ok()) {
      result.failures.push_back({sample.id, std::nullopt, base_items[i].error});
      continue;
    }
    ++result.translated;
    const std::string& base_hyp = *base_items[i].translation;
    const double base_score = metrics::adjusted_bleu(base_hyp, sample.reference);
    if (!(base_score > params.base_threshold)) continue;
    ++result.gated_in;

    std::vector<std::string> perturbed;
    perturbed.reserve(tokens.tokens.size());
    for (const auto& token : tokens.tokens) perturbed.push_back(perturb(sample.source, token));
    auto perturbed_items = model.translate_batch(perturbed);

    for (std::size_t j = 0; j < tokens.tokens.size(); ++j) {
      if (!perturbed_items[j].ok()) {
        result.failures.push_back({sample.id, tokens.tokens[j], perturbed_items[j].error});
        continue;
      }
      const std::string& perturbed_hyp = *perturbed_items[j].translation;
      const double delta_score = metrics::adjusted_bleu(perturbed_hyp, base_hyp);
      if (delta_score < params.delta_threshold) {
        result.records.push_back({sample.id, tokens.tokens[j], base_hyp, perturbed_hyp,
                                  base_score, delta_score});
      }
    }
  }

  result.total_hp = static_cast<int>(result.records.size());
  std::unordered_set<std::int64_t> unique_ids;
  for (const auto& rec : result.records) unique_ids.insert(rec.sample_id);
  result.unique_hp = static_cast<int>(unique_ids.size());
  return result;
}

std::vector<AnnotatedHPRecord> attach_attention(std::span<const HPRecord> records,
                                                const attnstats::AttentionStore& store) {
  std::vector<AnnotatedHPRecord> annotated;
  annotated.reserve(records.size());
  for (const auto& rec : records) {
    AnnotatedHPRecord entry;
    entry.record = rec;
    if (const auto* base = store.find(rec.sample_id, "base"))
      entry.base_attn = attnstats::summarize(*base);
    if (const auto* pert = store.find(rec.sample_id, "perturbed"))
      entry.perturbed_attn = attnstats::summarize(*pert);
    annotated.push_back(std::move(entry));
  }
  return annotated;
}

}  // namespace halluprobe::hpdetect
