#include "halluprobe/nhestimate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/metrics.hpp"

namespace halluprobe::nhestimate {

namespace {

struct Hash128 {
  std::uint64_t hi = 0;
  std::uint64_t lo = 0;

  friend bool operator==(const Hash128&, const Hash128&) = default;
};

struct Hash128Fold {
  std::size_t operator()(const Hash128& h) const {
    return static_cast<std::size_t>(h.hi ^ (h.lo * 0x9e3779b97f4a7c15ull));
  }
};

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdull;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ull;
  x ^= x >> 33;
  return x;
}

// Two FNV-style accumulators with independent multipliers, finalized with
// strong mixing; 128 bits make grouping collisions negligible at corpus
// scale.
Hash128 hash128(std::string_view s) {
  std::uint64_t a = 0xcbf29ce484222325ull;
  std::uint64_t b = 0x84222325cbf29ce4ull;
  for (unsigned char c : s) {
    a = (a ^ c) * 0x100000001b3ull;
    b = (b ^ c) * 0x9e3779b97f4a7c15ull;
  }
  return {mix64(a ^ mix64(b)), mix64(b + 0x632be59bd9b4e019ull * a)};
}

std::size_t bottom_count(double epsilon, std::size_t n) {
  // +1e-6 absorbs decimal-epsilon representation error in the product.
  return static_cast<std::size_t>(
      std::floor(epsilon * static_cast<double>(n) / 100.0 + 1e-6));
}

std::int64_t repeat_margin(std::string_view source, std::string_view translation, int n) {
  const auto src = metrics::tokenize(source, metrics::Granularity::word).tokens;
  const auto hyp = metrics::tokenize(translation, metrics::Granularity::word).tokens;
  return metrics::max_ngram_count(hyp, n) - metrics::max_ngram_count(src, n);
}

std::vector<std::int64_t> sorted_intersection(const std::vector<std::int64_t>& a,
                                              const std::vector<std::int64_t>& b) {
  std::vector<std::int64_t> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<std::int64_t> sorted_union(const std::vector<std::int64_t>& a,
                                       const std::vector<std::int64_t>& b) {
  std::vector<std::int64_t> out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Shared single-pass core for the in-memory and streaming paths.
class AnhAccumulator {
 public:
  explicit AnhAccumulator(const AnhParams& params) : params_(params) {
    if (params.epsilon <= 0.0 || params.epsilon > 100.0)
      throw ConfigError("epsilon must be in (0, 100]");
    if (params.ngram < 1 || params.threshold < 1)
      throw ConfigError("need ngram >= 1 and threshold >= 1");
  }

  void add(std::string_view source, std::string_view translation, double similarity) {
    const Hash128 trans_hash = hash128(metrics::normalize_ws(translation));
    const Hash128 source_hash = hash128(metrics::normalize_ws(source));
    auto [it, inserted] = groups_.try_emplace(trans_hash, Group{0, source_hash, false});
    ++it->second.count;
    if (!inserted && !(it->second.first_source == source_hash)) it->second.mixed = true;

    Entry entry;
    entry.similarity = similarity;
    entry.trans_hash = trans_hash;
    entry.oscillatory =
        repeat_margin(source, translation, params_.ngram) >= params_.threshold;
    entries_.push_back(entry);
  }

  AnhReport finish(const std::string& label) {
    if (entries_.empty()) throw ConfigError("NH estimator: empty corpus");
    AnhReport report;
    report.label = label;
    report.params = params_;
    report.corpus_size = static_cast<std::int64_t>(entries_.size());

    for (std::size_t i = 0; i < entries_.size(); ++i) {
      const auto& entry = entries_[i];
      if (entry.oscillatory) report.f1.push_back(static_cast<std::int64_t>(i));
      const Group& group = groups_.at(entry.trans_hash);
      if (group.count >= 2 && group.mixed) report.f2.push_back(static_cast<std::int64_t>(i));
    }

    const std::size_t count = bottom_count(params_.epsilon, entries_.size());
    std::vector<std::int64_t> order(entries_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
    auto lower = [this](std::int64_t a, std::int64_t b) {
      const double sa = entries_[static_cast<std::size_t>(a)].similarity;
      const double sb = entries_[static_cast<std::size_t>(b)].similarity;
      if (sa != sb) return sa < sb;
      return a < b;
    };
    if (count < order.size()) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                       order.end(), lower);
      order.resize(count);
    }
    std::sort(order.begin(), order.end());
    report.s_eps = std::move(order);

    report.s_eps_f1 = sorted_intersection(report.s_eps, report.f1);
    report.s_eps_f2 = sorted_intersection(report.s_eps, report.f2);
    report.anh = sorted_union(report.s_eps_f1, report.s_eps_f2);
    return report;
  }

 private:
  struct Group {
    std::uint32_t count = 0;
    Hash128 first_source;
    bool mixed = false;
  };

  struct Entry {
    double similarity = 0.0;
    Hash128 trans_hash;
    bool oscillatory = false;
  };

  AnhParams params_;
  std::vector<Entry> entries_;
  std::unordered_map<Hash128, Group, Hash128Fold> groups_;
};

}  // namespace

ScoredCorpus load_scored_corpus(const std::filesystem::path& pairs_path,
                                const std::filesystem::path& scores_path) {
  ScoredCorpus corpus;
  const bool external_scores = !scores_path.empty();
  std::vector<std::string> score_lines;
  if (external_scores) score_lines = read_lines(scores_path);

  std::size_t line_no = 0;
  for (const auto& line : read_lines(pairs_path)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    ScoredEntry entry;
    if (external_scores) {
      if (fields.size() < 2)
        throw ConfigError(pairs_path.string() + " line " + std::to_string(line_no) +
                          ": expected `source TAB translation`");
      if (corpus.entries.size() >= score_lines.size())
        throw ConfigError("score file " + scores_path.string() +
                          " is shorter than the pair file");
      entry.similarity = std::stod(score_lines[corpus.entries.size()]);
    } else {
      if (fields.size() < 3)
        throw ConfigError(pairs_path.string() + " line " + std::to_string(line_no) +
                          ": expected `source TAB translation TAB similarity`");
      entry.similarity = std::stod(fields[2]);
    }
    entry.source = std::move(fields[0]);
    entry.translation = std::move(fields[1]);
    corpus.entries.push_back(std::move(entry));
  }
  if (external_scores && score_lines.size() != corpus.entries.size())
    throw ConfigError("score file has " + std::to_string(score_lines.size()) +
                      " lines for " + std::to_string(corpus.entries.size()) + " pairs");
  return corpus;
}

std::vector<std::int64_t> f1_select(const ScoredCorpus& corpus, int n, int t) {
  if (n < 1 || t < 1) throw ConfigError("f1_select: need n >= 1 and t >= 1");
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const auto& e = corpus.entries[i];
    if (repeat_margin(e.source, e.translation, n) >= t)
      out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

std::vector<std::int64_t> f2_select(const ScoredCorpus& corpus) {
  struct Group {
    std::int64_t count = 0;
    std::string first_source;
    bool mixed = false;
  };
  std::unordered_map<std::string, Group> groups;
  std::vector<std::string> keys(corpus.entries.size());
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const auto& e = corpus.entries[i];
    keys[i] = metrics::normalize_ws(e.translation);
    auto [it, inserted] = groups.try_emplace(keys[i]);
    ++it->second.count;
    const std::string normalized_source = metrics::normalize_ws(e.source);
    if (inserted) {
      it->second.first_source = normalized_source;
    } else if (it->second.first_source != normalized_source) {
      it->second.mixed = true;
    }
  }
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < corpus.entries.size(); ++i) {
    const Group& g = groups.at(keys[i]);
    if (g.count >= 2 && g.mixed) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

std::vector<std::int64_t> bottom_epsilon(const ScoredCorpus& corpus, double epsilon) {
  if (epsilon <= 0.0 || epsilon > 100.0) throw ConfigError("epsilon must be in (0, 100]");
  if (corpus.entries.empty()) throw ConfigError("bottom_epsilon: empty corpus");
  const std::size_t count = bottom_count(epsilon, corpus.entries.size());
  std::vector<std::int64_t> order(corpus.entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<std::int64_t>(i);
  auto lower = [&corpus](std::int64_t a, std::int64_t b) {
    const double sa = corpus.entries[static_cast<std::size_t>(a)].similarity;
    const double sb = corpus.entries[static_cast<std::size_t>(b)].similarity;
    if (sa != sb) return sa < sb;
    return a < b;
  };
  if (count < order.size()) {
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                     order.end(), lower);
    order.resize(count);
  }
  std::sort(order.begin(), order.end());
  return order;
}

AnhReport estimate_anh(const ScoredCorpus& corpus, const AnhParams& params,
                       const std::string& label) {
  AnhAccumulator acc(params);
  for (const auto& e : corpus.entries) acc.add(e.source, e.translation, e.similarity);
  return acc.finish(label);
}

AnhReport estimate_anh_file(const std::filesystem::path& pairs_path,
                            const std::filesystem::path& scores_path,
                            const AnhParams& params, const std::string& label) {
  AnhAccumulator acc(params);
  const bool external_scores = !scores_path.empty();

  std::ifstream pairs(pairs_path);
  if (!pairs) throw ConfigError("cannot open " + pairs_path.string());
  std::ifstream scores;
  if (external_scores) {
    scores.open(scores_path);
    if (!scores) throw ConfigError("cannot open " + scores_path.string());
  }

  std::string line, score_line;
  std::size_t line_no = 0;
  while (std::getline(pairs, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    double similarity = 0.0;
    if (external_scores) {
      if (fields.size() < 2)
        throw ConfigError(pairs_path.string() + " line " + std::to_string(line_no) +
                          ": expected `source TAB translation`");
      if (!std::getline(scores, score_line))
        throw ConfigError("score file " + scores_path.string() +
                          " is shorter than the pair file");
      similarity = std::stod(score_line);
    } else {
      if (fields.size() < 3)
        throw ConfigError(pairs_path.string() + " line " + std::to_string(line_no) +
                          ": expected `source TAB translation TAB similarity`");
      similarity = std::stod(fields[2]);
    }
    acc.add(fields[0], fields[1], similarity);
  }
  if (external_scores && std::getline(scores, score_line) && !score_line.empty())
    throw ConfigError("score file has more lines than the pair file");
  return acc.finish(label);
}

std::vector<AmplificationRow> amplification_report(const AnhReport& baseline,
                                                   std::span<const AnhReport> derived) {
  std::vector<AmplificationRow> rows;
  rows.reserve(derived.size() + 1);

  auto to_row = [](const AnhReport& report) {
    AmplificationRow row;
    row.label = report.label;
    row.f1 = report.f1.size();
    row.f2 = report.f2.size();
    row.s_eps_f1 = report.s_eps_f1.size();
    row.s_eps_f2 = report.s_eps_f2.size();
    row.anh = report.anh.size();
    return row;
  };

  rows.push_back(to_row(baseline));
  for (const auto& report : derived) {
    if (!(report.params == baseline.params))
      throw ConfigError("amplification_report: report '" + report.label +
                        "' was computed with different (epsilon, ngram, threshold) "
                        "parameters than the baseline");
    AmplificationRow row = to_row(report);
    if (baseline.anh.empty()) {
      row.ratio = report.anh.empty() ? 1.0 : std::numeric_limits<double>::infinity();
    } else {
      row.ratio = static_cast<double>(report.anh.size()) /
                  static_cast<double>(baseline.anh.size());
    }
    row.amplified = report.anh.size() > baseline.anh.size();
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace halluprobe::nhestimate
