#include "halluprobe/attnstats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "halluprobe/errors.hpp"

namespace halluprobe::attnstats {

namespace {

// Natural-log entropy of an unnormalized nonnegative vector.
double entropy_of(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double w : weights) {
    if (w <= 0.0) continue;
    const double p = w / total;
    h -= p * std::log(p);
  }
  return h;
}

std::size_t band_column(std::size_t row, std::size_t t_len, std::size_t s_len) {
  const auto j = static_cast<std::size_t>(
      std::llround(static_cast<double>(row) * static_cast<double>(s_len) /
                   static_cast<double>(t_len)));
  return std::min(j, s_len - 1);
}

std::vector<double> diagonal_band(const AttentionMatrix& m) {
  std::vector<double> band(m.t_len);
  for (std::size_t i = 0; i < m.t_len; ++i) band[i] = m.at(i, band_column(i, m.t_len, m.s_len));
  return band;
}

}  // namespace

void validate(const AttentionMatrix& matrix, double tolerance) {
  if (matrix.t_len == 0 || matrix.s_len == 0)
    throw InvariantError("attention matrix for sample " + std::to_string(matrix.sample_id) +
                         " has an empty dimension");
  if (matrix.values.size() != matrix.t_len * matrix.s_len)
    throw InvariantError("attention matrix value count does not match dimensions");
  for (std::size_t i = 0; i < matrix.t_len; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < matrix.s_len; ++j) {
      const double v = matrix.at(i, j);
      if (v < 0.0)
        throw InvariantError("negative attention value at row " + std::to_string(i) +
                             " of sample " + std::to_string(matrix.sample_id));
      sum += v;
    }
    if (std::abs(sum - 1.0) > tolerance)
      throw InvariantError("attention row " + std::to_string(i) + " of sample " +
                           std::to_string(matrix.sample_id) + " sums to " +
                           std::to_string(sum) + ", not 1");
  }
}

double row_entropy(const AttentionMatrix& matrix) {
  double total = 0.0;
  for (std::size_t i = 0; i < matrix.t_len; ++i) {
    total += entropy_of(std::span(matrix.values).subspan(i * matrix.s_len, matrix.s_len));
  }
  return total / static_cast<double>(matrix.t_len);
}

double diagonal_entropy(const AttentionMatrix& matrix) {
  return entropy_of(diagonal_band(matrix));
}

double diagonal_mass(const AttentionMatrix& matrix) {
  const auto band = diagonal_band(matrix);
  double sum = 0.0;
  for (double v : band) sum += v;
  return sum / static_cast<double>(band.size());
}

double last_token_attention(const AttentionMatrix& matrix) {
  double sum = 0.0;
  for (std::size_t i = 0; i < matrix.t_len; ++i) sum += matrix.at(i, matrix.s_len - 1);
  return sum / static_cast<double>(matrix.t_len);
}

AttnSummary summarize(const AttentionMatrix& matrix) {
  AttnSummary s;
  s.row_entropy = row_entropy(matrix);
  s.diagonal_entropy = diagonal_entropy(matrix);
  s.diagonal_mass = diagonal_mass(matrix);
  s.last_token_attention = last_token_attention(matrix);
  const auto band = diagonal_band(matrix);
  double band_sum = 0.0;
  for (double v : band) band_sum += v;
  s.zero_diagonal_mass = band_sum <= 0.0;
  return s;
}

SetStats aggregate(std::span<const AttentionMatrix> matrices) {
  if (matrices.empty()) throw ConfigError("aggregate: empty attention set");
  SetStats stats;
  for (const auto& m : matrices) {
    const AttnSummary s = summarize(m);
    stats.row_entropy += s.row_entropy;
    stats.diagonal_entropy += s.diagonal_entropy;
    stats.diagonal_mass += s.diagonal_mass;
    stats.last_token_attention += s.last_token_attention;
  }
  const auto count = static_cast<double>(matrices.size());
  stats.row_entropy /= count;
  stats.diagonal_entropy /= count;
  stats.diagonal_mass /= count;
  stats.last_token_attention /= count;
  stats.count = matrices.size();
  return stats;
}

AttentionMatrix load_attention_file(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());

  std::string magic, version;
  std::int64_t sample_id = 0;
  std::string variant;
  std::size_t heads = 0, t_len = 0, s_len = 0;
  in >> magic >> version >> sample_id >> variant >> heads >> t_len >> s_len;
  if (!in || magic != "ATTN" || version != "v1")
    throw ConfigError(file.string() + ": not an `ATTN v1` attention file");
  if (heads == 0 || t_len == 0 || s_len == 0)
    throw ConfigError(file.string() + ": header declares an empty dimension");

  AttentionMatrix matrix;
  matrix.sample_id = sample_id;
  matrix.variant = variant;
  matrix.t_len = t_len;
  matrix.s_len = s_len;
  matrix.values.assign(t_len * s_len, 0.0);

  for (std::size_t h = 0; h < heads; ++h) {
    AttentionMatrix head;
    head.sample_id = sample_id;
    head.variant = variant;
    head.t_len = t_len;
    head.s_len = s_len;
    head.values.resize(t_len * s_len);
    for (auto& v : head.values) {
      if (!(in >> v)) throw ConfigError(file.string() + ": truncated value block");
    }
    validate(head);
    for (std::size_t i = 0; i < head.values.size(); ++i) matrix.values[i] += head.values[i];
  }
  if (heads > 1) {
    for (auto& v : matrix.values) v /= static_cast<double>(heads);
  }
  return matrix;
}

void save_attention_file(const std::filesystem::path& file, std::int64_t sample_id,
                         const std::string& variant, std::size_t t_len, std::size_t s_len,
                         std::span<const std::vector<double>> head_values) {
  if (head_values.empty()) throw ConfigError("save_attention_file: no heads given");
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  out << "ATTN v1 " << sample_id << ' ' << variant << ' ' << head_values.size() << ' '
      << t_len << ' ' << s_len << '\n';
  char buf[32];
  for (const auto& head : head_values) {
    if (head.size() != t_len * s_len)
      throw ConfigError("save_attention_file: head size does not match dimensions");
    for (std::size_t i = 0; i < t_len; ++i) {
      for (std::size_t j = 0; j < s_len; ++j) {
        std::snprintf(buf, sizeof(buf), "%.17g", head[i * s_len + j]);
        out << (j ? " " : "") << buf;
      }
      out << '\n';
    }
  }
}

AttentionStore AttentionStore::load_dir(const std::filesystem::path& dir) {
  AttentionStore store;
  if (!std::filesystem::is_directory(dir))
    throw ConfigError("attention directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& file : files) store.insert(load_attention_file(file));
  return store;
}

void AttentionStore::insert(AttentionMatrix matrix) {
  auto key = std::make_pair(matrix.sample_id, matrix.variant);
  matrices_.insert_or_assign(std::move(key), std::move(matrix));
}

const AttentionMatrix* AttentionStore::find(std::int64_t sample_id,
                                            const std::string& variant) const {
  auto it = matrices_.find({sample_id, variant});
  return it == matrices_.end() ? nullptr : &it->second;
}

std::vector<AttentionMatrix> AttentionStore::collect(std::span<const std::int64_t> sample_ids,
                                                     const std::string& variant) const {
  std::vector<std::int64_t> sorted(sample_ids.begin(), sample_ids.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<AttentionMatrix> out;
  for (auto id : sorted) {
    if (const auto* m = find(id, variant)) out.push_back(*m);
  }
  return out;
}

}  // namespace halluprobe::attnstats
