#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "halluprobe/metrics.hpp"

namespace halluprobe::memorization {

/// Which samples each trained model saw. Row k holds the sorted sample ids
/// of model k's training subset; every row has exactly m entries.
struct MembershipTable {
  std::int64_t n = 0;
  std::int64_t m = 0;
  std::vector<std::vector<std::uint32_t>> rows;

  int t() const { return static_cast<int>(rows.size()); }
  bool includes(int model, std::int64_t sample_id) const;
};

/// Draws t independent uniform m-subsets of [0, n). Deterministic per seed.
MembershipTable plan_subsets(std::int64_t n, int t, std::int64_t m, std::uint64_t seed);

/// Per-model evaluation data for the leave-out estimator. Models were
/// trained elsewhere; this carries their membership plus either precomputed
/// per-sample scores or raw hypotheses to be scored on ingest.
struct RunManifest {
  std::int64_t n = 0;
  int t = 0;
  std::int64_t m = 0;
  std::optional<metrics::MetricKind> metric;  // metric that produced stored scores
  std::optional<std::uint64_t> seed;
  MembershipTable membership;
  std::vector<std::int64_t> index;  // sample ids addressed by the per-model rows

  // Exactly one of the two is populated.
  std::vector<std::vector<double>> scores;      // [t][index.size()]
  std::vector<std::vector<std::string>> hyps;   // [t][index.size()]

  bool has_scores() const { return !scores.empty(); }
};

RunManifest load_run_manifest(const std::filesystem::path& dir);
void save_run_manifest(const std::filesystem::path& dir, const RunManifest& manifest);

/// Throws InvariantError when the manifest breaks its contract (row sizes,
/// id ranges, data alignment, t >= 2).
void validate(const RunManifest& manifest);

struct MemRecord {
  std::int64_t sample_id = 0;
  double mem_value = 0.0;  // meaningful only when has_value
  int n_included = 0;
  int n_excluded = 0;
  bool has_value = false;  // included and excluded by at least one model each
  bool eligible = false;   // has_value and n_excluded >= min_exclusions
};

/// The leave-out memorization value of each indexed sample: mean metric over
/// models trained with it minus mean metric over models trained without it.
/// Hypothesis manifests are scored against refs (indexed by sample id) with
/// the given metric; score manifests are trusted as-is.
std::vector<MemRecord> compute_mem_values(const RunManifest& manifest,
                                          std::span<const std::string> refs,
                                          metrics::MetricKind metric, int min_exclusions);

/// Memorized = top-k by memorization value (ties to the lower sample id);
/// random = k drawn uniformly from the remaining eligible records whose
/// value is >= floor. The sets never intersect.
struct ComparisonSets {
  std::vector<std::int64_t> memorized;  // descending mem_value
  std::vector<std::int64_t> random;     // ascending sample id
  int k = 0;
};

ComparisonSets select_sets(std::span<const MemRecord> records, int k, std::uint64_t seed,
                           double floor = -std::numeric_limits<double>::infinity());

}  // namespace halluprobe::memorization
