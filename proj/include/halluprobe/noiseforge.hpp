#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "halluprobe/corpus.hpp"

namespace halluprobe::noiseforge {

/// Invalid reference set: a small collection of detached source-target
/// pairs (typically a couple dozen) seeded into the noise patterns.
struct Irs {
  std::vector<Pair> pairs;

  std::vector<std::string> sources() const;
  std::vector<std::string> targets() const;
};

Irs load_irs(const std::filesystem::path& dir);

/// Sources pairwise distinct, targets pairwise distinct; when a clean
/// corpus is given, no IRS pair may appear in it.
void validate_irs(const Irs& irs, const ParallelCorpus* clean = nullptr);

/// Valid reference set: the IRS sources paired with correct references.
struct Vrs {
  std::vector<Pair> pairs;
};

Vrs load_vrs(const std::filesystem::path& dir);

/// Same source set as the IRS, targets all different from the IRS targets.
void validate_vrs(const Vrs& vrs, const Irs& irs);

enum class NoisePattern { uu, rr, ru, ur };

NoisePattern pattern_from_string(std::string_view name);
std::string_view to_string(NoisePattern pattern);

struct NoiseSpec {
  NoisePattern pattern = NoisePattern::uu;
  int unit_count = 21;
  int repeats = 1000;
  std::uint64_t seed = 0;
};

struct NoiseSet {
  NoisePattern pattern = NoisePattern::uu;
  std::vector<Pair> pairs;
};

/// Large aligned data source for "unique" draws. Construction keeps only
/// lines whose source and target are both first occurrences, so draws
/// within a role never repeat.
struct DonorCorpus {
  std::vector<Pair> pairs;

  static DonorCorpus from_corpus(const ParallelCorpus& corpus);
  static DonorCorpus load(const std::filesystem::path& dir);
};

using StringSet = std::unordered_set<std::string>;

/// Unique-Unique: `count` donor lines, sources kept, targets reassigned by
/// a seeded derangement so no emitted pair is donor-aligned. Lines whose
/// source/target appear in the exclusion sets are never drawn.
NoiseSet gen_uu(const DonorCorpus& donor, std::size_t count, std::uint64_t seed,
                const StringSet* exclude_sources = nullptr,
                const StringSet* exclude_targets = nullptr);

/// Repeat-Repeat: every IRS pair repeated `repeats` times.
NoiseSet gen_rr(const Irs& irs, int repeats);

/// Repeat-Unique: each source repeated `repeats` times, every occurrence
/// paired with a distinct donor target.
NoiseSet gen_ru(std::span<const std::string> irs_sources, const DonorCorpus& donor,
                int repeats, std::uint64_t seed,
                const StringSet* exclude_targets = nullptr);

/// Unique-Repeat: mirror of gen_ru with the roles swapped.
NoiseSet gen_ur(std::span<const std::string> irs_targets, const DonorCorpus& donor,
                int repeats, std::uint64_t seed,
                const StringSet* exclude_sources = nullptr);

/// Clean corpus + noise, shuffled with the given seed. `is_noise` aligns
/// with the emitted lines and is written as the provenance sidecar.
struct EmittedCorpus {
  ParallelCorpus corpus;
  std::vector<std::uint8_t> is_noise;
};

EmittedCorpus emit_training_corpus(const ParallelCorpus& clean, const NoiseSet& noise,
                                   std::uint64_t seed);

/// The evaluation-design contract: RR contains every IRS pair; RU shares
/// exactly the IRS sources; UR shares exactly the IRS targets; UU shares
/// nothing with the IRS on either side. Throws InvariantError on violation.
void verify_overlap_contract(const Irs& irs, const NoiseSet& uu, const NoiseSet& rr,
                             const NoiseSet& ru, const NoiseSet& ur);

void save_noise_set(const std::filesystem::path& dir, const NoiseSet& set,
                    const NoiseSpec& spec);
NoiseSet load_noise_set(const std::filesystem::path& dir);

}  // namespace halluprobe::noiseforge
