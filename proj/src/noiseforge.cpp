#include "halluprobe/noiseforge.hpp"

#include <algorithm>

#include <json.hpp>

#include "halluprobe/errors.hpp"
#include "halluprobe/rng.hpp"

namespace halluprobe::noiseforge {

using nlohmann::json;

std::vector<std::string> Irs::sources() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.source);
  return out;
}

std::vector<std::string> Irs::targets() const {
  std::vector<std::string> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

Irs load_irs(const std::filesystem::path& dir) {
  auto corpus = load_parallel_corpus(dir);
  Irs irs;
  irs.pairs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) irs.pairs.push_back(corpus.pair(i));
  validate_irs(irs);
  return irs;
}

void validate_irs(const Irs& irs, const ParallelCorpus* clean) {
  if (irs.pairs.empty()) throw InvariantError("IRS is empty");
  StringSet sources, targets;
  for (const auto& p : irs.pairs) {
    if (!sources.insert(p.source).second)
      throw InvariantError("IRS sources are not pairwise distinct: " + p.source);
    if (!targets.insert(p.target).second)
      throw InvariantError("IRS targets are not pairwise distinct: " + p.target);
  }
  if (clean != nullptr) {
    for (std::size_t i = 0; i < clean->size(); ++i) {
      for (const auto& p : irs.pairs) {
        if (p.source == clean->sources[i] && p.target == clean->targets[i])
          throw InvariantError("IRS pair appears in the clean corpus: " + p.source);
      }
    }
  }
}

Vrs load_vrs(const std::filesystem::path& dir) {
  auto corpus = load_parallel_corpus(dir);
  Vrs vrs;
  vrs.pairs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) vrs.pairs.push_back(corpus.pair(i));
  return vrs;
}

void validate_vrs(const Vrs& vrs, const Irs& irs) {
  StringSet irs_sources, irs_targets;
  for (const auto& p : irs.pairs) {
    irs_sources.insert(p.source);
    irs_targets.insert(p.target);
  }
  StringSet vrs_sources;
  for (const auto& p : vrs.pairs) vrs_sources.insert(p.source);
  if (vrs_sources != irs_sources)
    throw InvariantError("VRS source set differs from IRS source set");
  for (const auto& p : vrs.pairs) {
    if (irs_targets.contains(p.target))
      throw InvariantError("VRS target collides with an IRS target: " + p.target);
  }
}

NoisePattern pattern_from_string(std::string_view name) {
  if (name == "uu") return NoisePattern::uu;
  if (name == "rr") return NoisePattern::rr;
  if (name == "ru") return NoisePattern::ru;
  if (name == "ur") return NoisePattern::ur;
  throw ConfigError("unknown noise pattern: " + std::string(name) +
                    " (expected uu, rr, ru or ur)");
}

std::string_view to_string(NoisePattern pattern) {
  switch (pattern) {
    case NoisePattern::uu: return "uu";
    case NoisePattern::rr: return "rr";
    case NoisePattern::ru: return "ru";
    case NoisePattern::ur: return "ur";
  }
  return "unknown";
}

DonorCorpus DonorCorpus::from_corpus(const ParallelCorpus& corpus) {
  DonorCorpus donor;
  StringSet seen_sources, seen_targets;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& src = corpus.sources[i];
    const auto& tgt = corpus.targets[i];
    if (seen_sources.contains(src) || seen_targets.contains(tgt)) continue;
    seen_sources.insert(src);
    seen_targets.insert(tgt);
    donor.pairs.push_back({src, tgt});
  }
  return donor;
}

DonorCorpus DonorCorpus::load(const std::filesystem::path& dir) {
  return from_corpus(load_parallel_corpus(dir));
}

namespace {

std::vector<std::size_t> usable_lines(const DonorCorpus& donor,
                                      const StringSet* exclude_sources,
                                      const StringSet* exclude_targets) {
  std::vector<std::size_t> pool;
  pool.reserve(donor.pairs.size());
  for (std::size_t i = 0; i < donor.pairs.size(); ++i) {
    const auto& p = donor.pairs[i];
    if (exclude_sources && exclude_sources->contains(p.source)) continue;
    if (exclude_targets && exclude_targets->contains(p.target)) continue;
    pool.push_back(i);
  }
  return pool;
}

}  // namespace

NoiseSet gen_uu(const DonorCorpus& donor, std::size_t count, std::uint64_t seed,
                const StringSet* exclude_sources, const StringSet* exclude_targets) {
  if (count < 2) throw ConfigError("gen_uu: need count >= 2 for a derangement");
  auto pool = usable_lines(donor, exclude_sources, exclude_targets);
  if (pool.size() < count)
    throw ConfigError("gen_uu: donor has " + std::to_string(pool.size()) +
                      " usable lines, need " + std::to_string(count));

  SeededRng rng(seed);
  auto picks = rng.sample_without_replacement(pool.size(), count);
  std::vector<std::size_t> lines;
  lines.reserve(count);
  for (auto idx : picks) lines.push_back(pool[idx]);

  // Pair source of lines[i] with target of lines[i+1] (cyclically): a
  // derangement of the donor alignment, and with per-role-unique donor
  // lines never an aligned pair.
  NoiseSet set;
  set.pattern = NoisePattern::uu;
  std::vector<std::size_t> target_of(count);
  for (std::size_t i = 0; i < count; ++i) target_of[i] = lines[(i + 1) % count];

  auto valid = [&](std::size_t src_line, std::size_t tgt_line) {
    return src_line != tgt_line &&
           donor.pairs[src_line].source != donor.pairs[tgt_line].target;
  };
  for (std::size_t i = 0; i < count; ++i) {
    if (valid(lines[i], target_of[i])) continue;
    // Source text equals the assigned target text; swap targets with the
    // first position that keeps both pairs valid.
    bool repaired = false;
    for (std::size_t step = 1; step < count; ++step) {
      const std::size_t j = (i + step) % count;
      if (valid(lines[i], target_of[j]) && valid(lines[j], target_of[i])) {
        std::swap(target_of[i], target_of[j]);
        repaired = true;
        break;
      }
    }
    if (!repaired)
      throw InvariantError("gen_uu: cannot satisfy unrelated-pairing constraints");
  }

  set.pairs.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    set.pairs.push_back({donor.pairs[lines[i]].source, donor.pairs[target_of[i]].target});
  }
  return set;
}

NoiseSet gen_rr(const Irs& irs, int repeats) {
  if (repeats < 1) throw ConfigError("gen_rr: repeats must be >= 1");
  validate_irs(irs);
  NoiseSet set;
  set.pattern = NoisePattern::rr;
  set.pairs.reserve(irs.pairs.size() * static_cast<std::size_t>(repeats));
  for (const auto& p : irs.pairs) {
    for (int r = 0; r < repeats; ++r) set.pairs.push_back(p);
  }
  return set;
}

NoiseSet gen_ru(std::span<const std::string> irs_sources, const DonorCorpus& donor,
                int repeats, std::uint64_t seed, const StringSet* exclude_targets) {
  if (repeats < 1) throw ConfigError("gen_ru: repeats must be >= 1");
  if (irs_sources.empty()) throw ConfigError("gen_ru: no sources given");
  auto pool = usable_lines(donor, nullptr, exclude_targets);
  const std::size_t needed = irs_sources.size() * static_cast<std::size_t>(repeats);
  if (pool.size() < needed)
    throw ConfigError("gen_ru: donor exhausted, need " + std::to_string(needed) +
                      " targets but only " + std::to_string(pool.size()) + " usable");

  SeededRng rng(seed);
  auto picks = rng.sample_without_replacement(pool.size(), needed);
  NoiseSet set;
  set.pattern = NoisePattern::ru;
  set.pairs.reserve(needed);
  std::size_t next = 0;
  for (const auto& source : irs_sources) {
    for (int r = 0; r < repeats; ++r) {
      set.pairs.push_back({source, donor.pairs[pool[picks[next++]]].target});
    }
  }
  return set;
}

NoiseSet gen_ur(std::span<const std::string> irs_targets, const DonorCorpus& donor,
                int repeats, std::uint64_t seed, const StringSet* exclude_sources) {
  if (repeats < 1) throw ConfigError("gen_ur: repeats must be >= 1");
  if (irs_targets.empty()) throw ConfigError("gen_ur: no targets given");
  auto pool = usable_lines(donor, exclude_sources, nullptr);
  const std::size_t needed = irs_targets.size() * static_cast<std::size_t>(repeats);
  if (pool.size() < needed)
    throw ConfigError("gen_ur: donor exhausted, need " + std::to_string(needed) +
                      " sources but only " + std::to_string(pool.size()) + " usable");

  SeededRng rng(seed);
  auto picks = rng.sample_without_replacement(pool.size(), needed);
  NoiseSet set;
  set.pattern = NoisePattern::ur;
  set.pairs.reserve(needed);
  std::size_t next = 0;
  for (const auto& target : irs_targets) {
    for (int r = 0; r < repeats; ++r) {
      set.pairs.push_back({donor.pairs[pool[picks[next++]]].source, target});
    }
  }
  return set;
}

EmittedCorpus emit_training_corpus(const ParallelCorpus& clean, const NoiseSet& noise,
                                   std::uint64_t seed) {
  const std::size_t total = clean.size() + noise.pairs.size();
  std::vector<std::size_t> order(total);
  for (std::size_t i = 0; i < total; ++i) order[i] = i;
  SeededRng rng(seed);
  rng.shuffle(order);

  EmittedCorpus out;
  out.corpus.sources.reserve(total);
  out.corpus.targets.reserve(total);
  out.is_noise.reserve(total);
  for (auto idx : order) {
    if (idx < clean.size()) {
      out.corpus.sources.push_back(clean.sources[idx]);
      out.corpus.targets.push_back(clean.targets[idx]);
      out.is_noise.push_back(0);
    } else {
      const auto& p = noise.pairs[idx - clean.size()];
      out.corpus.sources.push_back(p.source);
      out.corpus.targets.push_back(p.target);
      out.is_noise.push_back(1);
    }
  }
  return out;
}

namespace {

struct PairHash {
  std::size_t operator()(const Pair& p) const {
    return std::hash<std::string>{}(p.source) * 1000003u ^ std::hash<std::string>{}(p.target);
  }
};

}  // namespace

void verify_overlap_contract(const Irs& irs, const NoiseSet& uu, const NoiseSet& rr,
                             const NoiseSet& ru, const NoiseSet& ur) {
  StringSet irs_sources, irs_targets;
  std::unordered_set<Pair, PairHash> irs_pairs;
  for (const auto& p : irs.pairs) {
    irs_sources.insert(p.source);
    irs_targets.insert(p.target);
    irs_pairs.insert(p);
  }

  std::unordered_set<Pair, PairHash> rr_pairs(rr.pairs.begin(), rr.pairs.end());
  for (const auto& p : irs.pairs) {
    if (!rr_pairs.contains(p))
      throw InvariantError("overlap contract: RR is missing the IRS pair: " + p.source);
  }

  StringSet ru_sources, ru_targets;
  for (const auto& p : ru.pairs) {
    ru_sources.insert(p.source);
    ru_targets.insert(p.target);
  }
  for (const auto& s : irs_sources) {
    if (!ru_sources.contains(s))
      throw InvariantError("overlap contract: RU is missing the IRS source: " + s);
  }
  for (const auto& p : ru.pairs) {
    if (irs_targets.contains(p.target))
      throw InvariantError("overlap contract: RU target collides with IRS: " + p.target);
  }

  StringSet ur_targets;
  for (const auto& p : ur.pairs) ur_targets.insert(p.target);
  for (const auto& t : irs_targets) {
    if (!ur_targets.contains(t))
      throw InvariantError("overlap contract: UR is missing the IRS target: " + t);
  }
  for (const auto& p : ur.pairs) {
    if (irs_sources.contains(p.source))
      throw InvariantError("overlap contract: UR source collides with IRS: " + p.source);
  }

  for (const auto& p : uu.pairs) {
    if (irs_sources.contains(p.source))
      throw InvariantError("overlap contract: UU source collides with IRS: " + p.source);
    if (irs_targets.contains(p.target))
      throw InvariantError("overlap contract: UU target collides with IRS: " + p.target);
  }
}

void save_noise_set(const std::filesystem::path& dir, const NoiseSet& set,
                    const NoiseSpec& spec) {
  std::filesystem::create_directories(dir);
  ParallelCorpus corpus;
  corpus.sources.reserve(set.pairs.size());
  corpus.targets.reserve(set.pairs.size());
  for (const auto& p : set.pairs) {
    corpus.sources.push_back(p.source);
    corpus.targets.push_back(p.target);
  }
  save_parallel_corpus(dir, corpus);
  json meta;
  meta["pattern"] = std::string(to_string(set.pattern));
  meta["unit_count"] = spec.unit_count;
  meta["repeats"] = spec.repeats;
  meta["seed"] = spec.seed;
  meta["size"] = set.pairs.size();
  write_file(dir / "spec.json", meta.dump(2) + "\n");
}

NoiseSet load_noise_set(const std::filesystem::path& dir) {
  auto corpus = load_parallel_corpus(dir);
  json meta = json::parse(read_file(dir / "spec.json"));
  NoiseSet set;
  set.pattern = pattern_from_string(meta.at("pattern").get<std::string>());
  set.pairs.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) set.pairs.push_back(corpus.pair(i));
  return set;
}

}  // namespace halluprobe::noiseforge
