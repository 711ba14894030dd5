#include "halluprobe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "halluprobe/errors.hpp"

namespace halluprobe::metrics {

namespace {

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Length in bytes of the UTF-8 sequence starting at `c`; malformed lead
// bytes are consumed as single characters rather than rejected.
std::size_t utf8_len(unsigned char c) {
  if (c < 0x80) return 1;
  if ((c >> 5) == 0x6) return 2;
  if ((c >> 4) == 0xe) return 3;
  if ((c >> 3) == 0x1e) return 4;
  return 1;
}

struct BleuStats {
  // Per order: clipped matches and candidate n-gram counts.
  std::vector<std::int64_t> matches;
  std::vector<std::int64_t> candidates;
  std::int64_t hyp_len = 0;
  std::int64_t ref_len = 0;

  explicit BleuStats(int max_n) : matches(max_n, 0), candidates(max_n, 0) {}

  void add(const TokenSeq& hyp, const TokenSeq& ref, int max_n) {
    hyp_len += static_cast<std::int64_t>(hyp.size());
    ref_len += static_cast<std::int64_t>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      auto hyp_grams = ngram_counts(hyp.tokens, n);
      if (hyp_grams.empty()) continue;
      auto ref_grams = ngram_counts(ref.tokens, n);
      std::int64_t clipped = 0;
      std::int64_t total = 0;
      for (const auto& [gram, count] : hyp_grams) {
        total += count;
        auto it = ref_grams.find(gram);
        if (it != ref_grams.end()) clipped += std::min(count, it->second);
      }
      matches[n - 1] += clipped;
      candidates[n - 1] += total;
    }
  }

  double combine(int max_n, Smoothing smoothing) const {
    if (hyp_len == 0) return 0.0;
    double log_prec_sum = 0.0;
    int orders = 0;
    for (int n = 1; n <= max_n; ++n) {
      double num = static_cast<double>(matches[n - 1]);
      double den = static_cast<double>(candidates[n - 1]);
      if (smoothing == Smoothing::add_one && n >= 2) {
        num += 1.0;
        den += 1.0;
      }
      if (den == 0.0) continue;  // order longer than every hypothesis
      if (num == 0.0) return 0.0;
      log_prec_sum += std::log(num / den);
      ++orders;
    }
    if (orders == 0) return 0.0;
    const double brevity =
        hyp_len >= ref_len
            ? 1.0
            : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return brevity * std::exp(log_prec_sum / orders);
  }
};

}  // namespace

TokenSeq tokenize(std::string_view text, Granularity granularity) {
  TokenSeq out;
  out.granularity = granularity;
  if (granularity == Granularity::word) {
    std::size_t i = 0;
    while (i < text.size()) {
      while (i < text.size() && is_ws(text[i])) ++i;
      std::size_t start = i;
      while (i < text.size() && !is_ws(text[i])) ++i;
      if (i > start) out.tokens.emplace_back(text.substr(start, i - start));
    }
  } else {
    std::size_t i = 0;
    while (i < text.size()) {
      if (is_ws(text[i])) {
        ++i;
        continue;
      }
      std::size_t len = std::min(utf8_len(static_cast<unsigned char>(text[i])),
                                 text.size() - i);
      out.tokens.emplace_back(text.substr(i, len));
      i += len;
    }
  }
  return out;
}

std::string normalize_ws(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_ws(text[i])) ++i;
    std::size_t start = i;
    while (i < text.size() && !is_ws(text[i])) ++i;
    if (i > start) {
      if (!out.empty()) out.push_back(' ');
      out.append(text.substr(start, i - start));
    }
  }
  return out;
}

std::unordered_map<std::string, std::int64_t> ngram_counts(std::span<const std::string> tokens,
                                                           int n) {
  std::unordered_map<std::string, std::int64_t> counts;
  if (n < 1 || tokens.size() < static_cast<std::size_t>(n)) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t j = 1; j < static_cast<std::size_t>(n); ++j) {
      key.push_back(' ');
      key.append(tokens[i + j]);
    }
    ++counts[std::move(key)];
  }
  return counts;
}

std::int64_t max_ngram_count(std::span<const std::string> tokens, int n) {
  std::int64_t best = 0;
  for (const auto& [gram, count] : ngram_counts(tokens, n)) {
    best = std::max(best, count);
  }
  return best;
}

double sentence_chrf(std::string_view hyp, std::string_view ref, int char_n, double beta) {
  if (char_n < 1) throw ConfigError("sentence_chrf: char_n must be >= 1");
  TokenSeq hyp_chars = tokenize(hyp, Granularity::character);
  TokenSeq ref_chars = tokenize(ref, Granularity::character);
  if (hyp_chars.empty() && ref_chars.empty()) return 1.0;
  if (hyp_chars.empty() || ref_chars.empty()) return 0.0;

  double prec_sum = 0.0;
  double rec_sum = 0.0;
  int orders = 0;
  for (int n = 1; n <= char_n; ++n) {
    auto hyp_grams = ngram_counts(hyp_chars.tokens, n);
    auto ref_grams = ngram_counts(ref_chars.tokens, n);
    std::int64_t hyp_total = 0;
    std::int64_t ref_total = 0;
    std::int64_t clipped = 0;
    for (const auto& [gram, count] : hyp_grams) {
      hyp_total += count;
      auto it = ref_grams.find(gram);
      if (it != ref_grams.end()) clipped += std::min(count, it->second);
    }
    for (const auto& [gram, count] : ref_grams) ref_total += count;
    if (hyp_total == 0 && ref_total == 0) continue;
    if (hyp_total > 0) prec_sum += static_cast<double>(clipped) / hyp_total;
    if (ref_total > 0) rec_sum += static_cast<double>(clipped) / ref_total;
    ++orders;
  }
  if (orders == 0) return 0.0;
  const double precision = prec_sum / orders;
  const double recall = rec_sum / orders;
  const double b2 = beta * beta;
  const double denom = b2 * precision + recall;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * precision * recall / denom;
}

double sentence_bleu(const TokenSeq& hyp, const TokenSeq& ref, int max_n, Smoothing smoothing) {
  if (max_n < 1) throw ConfigError("sentence_bleu: max_n must be >= 1");
  if (hyp.empty()) return 0.0;
  BleuStats stats(max_n);
  stats.add(hyp, ref, max_n);
  return stats.combine(max_n, smoothing);
}

double adjusted_bleu(std::string_view hyp, std::string_view ref, int max_n,
                     Smoothing smoothing) {
  return sentence_bleu(tokenize(hyp, Granularity::word), tokenize(ref, Granularity::word),
                       max_n, smoothing);
}

int exact_accuracy(std::string_view hyp, std::string_view ref) {
  return normalize_ws(hyp) == normalize_ws(ref) ? 1 : 0;
}

double corpus_bleu(std::span<const TokenSeq> hyps, std::span<const TokenSeq> refs, int max_n) {
  if (hyps.size() != refs.size())
    throw ConfigError("corpus_bleu: hypothesis/reference counts differ");
  if (hyps.empty()) throw ConfigError("corpus_bleu: empty corpus");
  BleuStats stats(max_n);
  for (std::size_t i = 0; i < hyps.size(); ++i) stats.add(hyps[i], refs[i], max_n);
  return stats.combine(max_n, Smoothing::none);
}

MetricKind metric_kind_from_string(std::string_view name) {
  if (name == "chrf") return MetricKind::chrf;
  if (name == "bleu") return MetricKind::bleu;
  if (name == "adjusted_bleu" || name == "adjusted-bleu") return MetricKind::adjusted_bleu;
  if (name == "accuracy") return MetricKind::accuracy;
  throw ConfigError("unknown metric: " + std::string(name));
}

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::chrf: return "chrf";
    case MetricKind::bleu: return "bleu";
    case MetricKind::adjusted_bleu: return "adjusted_bleu";
    case MetricKind::accuracy: return "accuracy";
  }
  return "unknown";
}

double score(MetricKind kind, std::string_view hyp, std::string_view ref) {
  switch (kind) {
    case MetricKind::chrf:
      return sentence_chrf(hyp, ref);
    case MetricKind::bleu:
      return sentence_bleu(tokenize(hyp, Granularity::word),
                           tokenize(ref, Granularity::word));
    case MetricKind::adjusted_bleu:
      return adjusted_bleu(hyp, ref);
    case MetricKind::accuracy:
      return static_cast<double>(exact_accuracy(hyp, ref));
  }
  throw ConfigError("unknown metric kind");
}

}  // namespace halluprobe::metrics
