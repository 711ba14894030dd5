#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace halluprobe::attnstats {

/// Cross-attention map for one sentence: target rows over source columns,
/// row-stochastic within 1e-4. Multi-head dumps are averaged into one
/// matrix on load.
struct AttentionMatrix {
  std::int64_t sample_id = 0;
  std::string variant;  // e.g. "base" or "perturbed"
  std::size_t t_len = 0;
  std::size_t s_len = 0;
  std::vector<double> values;  // row-major, t_len * s_len

  double at(std::size_t row, std::size_t col) const { return values[row * s_len + col]; }
};

/// Throws InvariantError on negative entries or rows that do not sum to 1
/// within tolerance.
void validate(const AttentionMatrix& matrix, double tolerance = 1e-4);

/// Mean over target rows of the natural-log entropy of each row
/// distribution. 0 for one-hot rows; ln(s_len) for uniform rows.
double row_entropy(const AttentionMatrix& matrix);

/// Entropy of the renormalized diagonal-band mass distribution over target
/// positions, with band column round(i * s_len / t_len) for row i. Zero
/// diagonal mass is defined as 0.
double diagonal_entropy(const AttentionMatrix& matrix);

/// Mean diagonal-band attention (the "averaged diagonal attention" reading
/// of the same statistic; reported alongside the entropy variant).
double diagonal_mass(const AttentionMatrix& matrix);

/// Mean over target rows of the attention on the last source column.
double last_token_attention(const AttentionMatrix& matrix);

struct AttnSummary {
  double row_entropy = 0.0;
  double diagonal_entropy = 0.0;
  double diagonal_mass = 0.0;
  double last_token_attention = 0.0;
  bool zero_diagonal_mass = false;
};

AttnSummary summarize(const AttentionMatrix& matrix);

/// Unweighted mean of the per-matrix statistics, sentence first then set.
struct SetStats {
  double row_entropy = 0.0;
  double diagonal_entropy = 0.0;
  double diagonal_mass = 0.0;
  double last_token_attention = 0.0;
  std::size_t count = 0;
};

SetStats aggregate(std::span<const AttentionMatrix> matrices);

/// Serialized attention format, one sentence per file:
///   ATTN v1 <sample_id> <variant> <heads> <T_len> <S_len>
/// followed by heads*T_len lines of S_len space-separated decimal floats.
AttentionMatrix load_attention_file(const std::filesystem::path& file);

/// Writes one or more heads; `head_values[h]` is a row-major t_len*s_len map.
void save_attention_file(const std::filesystem::path& file, std::int64_t sample_id,
                         const std::string& variant, std::size_t t_len, std::size_t s_len,
                         std::span<const std::vector<double>> head_values);

/// Every parseable attention file under a directory, keyed by (id, variant).
class AttentionStore {
 public:
  static AttentionStore load_dir(const std::filesystem::path& dir);

  void insert(AttentionMatrix matrix);
  const AttentionMatrix* find(std::int64_t sample_id, const std::string& variant) const;
  std::size_t size() const { return matrices_.size(); }

  /// Matrices for the given ids in id order, skipping absent keys.
  std::vector<AttentionMatrix> collect(std::span<const std::int64_t> sample_ids,
                                       const std::string& variant) const;

 private:
  std::map<std::pair<std::int64_t, std::string>, AttentionMatrix> matrices_;
};

}  // namespace halluprobe::attnstats
