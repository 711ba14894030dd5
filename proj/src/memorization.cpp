#include "halluprobe/memorization.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"
#include "halluprobe/rng.hpp"

namespace halluprobe::memorization {

using nlohmann::json;

bool MembershipTable::includes(int model, std::int64_t sample_id) const {
  const auto& row = rows.at(static_cast<std::size_t>(model));
  return std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(sample_id));
}

MembershipTable plan_subsets(std::int64_t n, int t, std::int64_t m, std::uint64_t seed) {
  if (n <= 0 || m <= 0 || m >= n)
    throw ConfigError("plan_subsets: need 0 < m < n, got n=" + std::to_string(n) +
                      " m=" + std::to_string(m));
  if (t < 2) throw ConfigError("plan_subsets: need t >= 2 trials");
  if (n > std::numeric_limits<std::uint32_t>::max())
    throw ConfigError("plan_subsets: corpus too large");

  MembershipTable table;
  table.n = n;
  table.m = m;
  table.rows.reserve(static_cast<std::size_t>(t));
  SeededRng base(seed);
  for (int k = 0; k < t; ++k) {
    SeededRng rng = base.fork(static_cast<std::uint64_t>(k));
    auto picks = rng.sample_without_replacement(static_cast<std::size_t>(n),
                                                static_cast<std::size_t>(m));
    std::vector<std::uint32_t> row(picks.begin(), picks.end());
    std::sort(row.begin(), row.end());
    table.rows.push_back(std::move(row));
  }
  return table;
}

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kMembershipFile = "membership.txt";
constexpr const char* kIndexFile = "index.txt";

std::string model_file_name(int k) {
  std::ostringstream name;
  name << "model_" << std::setw(3) << std::setfill('0') << k << ".txt";
  return name.str();
}

std::vector<std::uint32_t> parse_id_line(const std::string& line, std::int64_t n,
                                         const std::string& context) {
  std::vector<std::uint32_t> ids;
  const char* p = line.data();
  const char* end = line.data() + line.size();
  while (p < end) {
    while (p < end && *p == ' ') ++p;
    if (p >= end) break;
    std::uint32_t value = 0;
    auto [next, ec] = std::from_chars(p, end, value);
    if (ec != std::errc()) throw ConfigError("bad sample id in " + context);
    if (static_cast<std::int64_t>(value) >= n)
      throw InvariantError("sample id " + std::to_string(value) + " out of range in " + context);
    ids.push_back(value);
    p = next;
  }
  return ids;
}

}  // namespace

RunManifest load_run_manifest(const std::filesystem::path& dir) {
  json header = json::parse(read_file(dir / kManifestFile));
  RunManifest manifest;
  manifest.n = header.at("n").get<std::int64_t>();
  manifest.t = header.at("t").get<int>();
  manifest.m = header.at("m").get<std::int64_t>();
  if (header.contains("metric") && !header["metric"].is_null())
    manifest.metric = metrics::metric_kind_from_string(header["metric"].get<std::string>());
  if (header.contains("seed") && !header["seed"].is_null())
    manifest.seed = header["seed"].get<std::uint64_t>();
  const std::string kind = header.value("kind", "scores");
  if (kind != "scores" && kind != "hypotheses")
    throw ConfigError("manifest kind must be 'scores' or 'hypotheses'");

  manifest.membership.n = manifest.n;
  manifest.membership.m = manifest.m;
  auto membership_lines = read_lines(dir / kMembershipFile);
  if (static_cast<int>(membership_lines.size()) != manifest.t)
    throw InvariantError("membership.txt has " + std::to_string(membership_lines.size()) +
                         " rows, expected t=" + std::to_string(manifest.t));
  for (int k = 0; k < manifest.t; ++k) {
    auto row = parse_id_line(membership_lines[k], manifest.n, "membership row " + std::to_string(k));
    std::sort(row.begin(), row.end());
    manifest.membership.rows.push_back(std::move(row));
  }

  for (const auto& line : read_lines(dir / kIndexFile)) {
    if (line.empty()) continue;
    auto ids = parse_id_line(line, manifest.n, "index.txt");
    for (auto id : ids) manifest.index.push_back(static_cast<std::int64_t>(id));
  }

  for (int k = 0; k < manifest.t; ++k) {
    auto lines = read_lines(dir / "models" / model_file_name(k));
    if (lines.size() != manifest.index.size())
      throw InvariantError("model file " + model_file_name(k) + " has " +
                           std::to_string(lines.size()) + " rows, expected " +
                           std::to_string(manifest.index.size()));
    if (kind == "scores") {
      std::vector<double> row;
      row.reserve(lines.size());
      for (const auto& line : lines) {
        try {
          row.push_back(std::stod(line));
        } catch (const std::exception&) {
          throw ConfigError("bad score '" + line + "' in " + model_file_name(k));
        }
      }
      manifest.scores.push_back(std::move(row));
    } else {
      manifest.hyps.push_back(std::move(lines));
    }
  }
  validate(manifest);
  return manifest;
}

void save_run_manifest(const std::filesystem::path& dir, const RunManifest& manifest) {
  validate(manifest);
  std::filesystem::create_directories(dir / "models");
  json header;
  header["n"] = manifest.n;
  header["t"] = manifest.t;
  header["m"] = manifest.m;
  header["kind"] = manifest.has_scores() ? "scores" : "hypotheses";
  if (manifest.metric) header["metric"] = std::string(metrics::to_string(*manifest.metric));
  if (manifest.seed) header["seed"] = *manifest.seed;
  write_file(dir / kManifestFile, header.dump(2) + "\n");

  std::vector<std::string> membership_lines;
  for (const auto& row : manifest.membership.rows) {
    std::string line;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) line.push_back(' ');
      line += std::to_string(row[i]);
    }
    membership_lines.push_back(std::move(line));
  }
  write_lines(dir / kMembershipFile, membership_lines);

  std::vector<std::string> index_lines;
  index_lines.reserve(manifest.index.size());
  for (auto id : manifest.index) index_lines.push_back(std::to_string(id));
  write_lines(dir / kIndexFile, index_lines);

  for (int k = 0; k < manifest.t; ++k) {
    if (manifest.has_scores()) {
      std::vector<std::string> lines;
      lines.reserve(manifest.scores[k].size());
      for (double v : manifest.scores[k]) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        lines.emplace_back(buf);
      }
      write_lines(dir / "models" / model_file_name(k), lines);
    } else {
      write_lines(dir / "models" / model_file_name(k), manifest.hyps[k]);
    }
  }
}

void validate(const RunManifest& manifest) {
  if (manifest.t < 2) throw InvariantError("manifest needs t >= 2 models");
  if (manifest.membership.t() != manifest.t)
    throw InvariantError("membership rows do not match t");
  for (int k = 0; k < manifest.t; ++k) {
    const auto& row = manifest.membership.rows[static_cast<std::size_t>(k)];
    if (static_cast<std::int64_t>(row.size()) != manifest.m)
      throw InvariantError("membership row " + std::to_string(k) + " has " +
                           std::to_string(row.size()) + " samples, expected m=" +
                           std::to_string(manifest.m));
    if (std::adjacent_find(row.begin(), row.end()) != row.end())
      throw InvariantError("membership row " + std::to_string(k) + " has duplicate ids");
  }
  for (auto id : manifest.index) {
    if (id < 0 || id >= manifest.n) throw InvariantError("index id out of range");
  }
  const std::size_t data_rows = manifest.has_scores() ? manifest.scores.size()
                                                      : manifest.hyps.size();
  if (!manifest.scores.empty() && !manifest.hyps.empty())
    throw InvariantError("manifest holds both scores and hypotheses");
  if (static_cast<int>(data_rows) != manifest.t)
    throw InvariantError("per-model data rows do not match t");
  for (int k = 0; k < manifest.t; ++k) {
    const std::size_t cols = manifest.has_scores() ? manifest.scores[k].size()
                                                   : manifest.hyps[k].size();
    if (cols != manifest.index.size())
      throw InvariantError("model " + std::to_string(k) + " data misaligned with index");
  }
}

std::vector<MemRecord> compute_mem_values(const RunManifest& manifest,
                                          std::span<const std::string> refs,
                                          metrics::MetricKind metric, int min_exclusions) {
  validate(manifest);
  if (min_exclusions < 1) throw ConfigError("min_exclusions must be >= 1");
  if (!manifest.has_scores() && static_cast<std::int64_t>(refs.size()) < manifest.n)
    throw ConfigError("hypothesis manifest needs one reference per sample (got " +
                      std::to_string(refs.size()) + " for n=" + std::to_string(manifest.n) + ")");

  // Flat inclusion bitmap: t * n entries.
  std::vector<std::uint8_t> included(static_cast<std::size_t>(manifest.t) *
                                     static_cast<std::size_t>(manifest.n), 0);
  for (int k = 0; k < manifest.t; ++k) {
    for (auto id : manifest.membership.rows[static_cast<std::size_t>(k)]) {
      included[static_cast<std::size_t>(k) * manifest.n + id] = 1;
    }
  }

  std::vector<MemRecord> records;
  records.reserve(manifest.index.size());
  for (std::size_t row = 0; row < manifest.index.size(); ++row) {
    const std::int64_t id = manifest.index[row];
    double sum_in = 0.0, sum_out = 0.0;
    int count_in = 0, count_out = 0;
    for (int k = 0; k < manifest.t; ++k) {
      const double cell =
          manifest.has_scores()
              ? manifest.scores[k][row]
              : metrics::score(metric, manifest.hyps[k][row], refs[static_cast<std::size_t>(id)]);
      if (included[static_cast<std::size_t>(k) * manifest.n + id]) {
        sum_in += cell;
        ++count_in;
      } else {
        sum_out += cell;
        ++count_out;
      }
    }
    MemRecord rec;
    rec.sample_id = id;
    rec.n_included = count_in;
    rec.n_excluded = count_out;
    rec.has_value = count_in >= 1 && count_out >= 1;
    rec.eligible = rec.has_value && count_out >= min_exclusions;
    if (rec.has_value) rec.mem_value = sum_in / count_in - sum_out / count_out;
    records.push_back(rec);
  }
  return records;
}

ComparisonSets select_sets(std::span<const MemRecord> records, int k, std::uint64_t seed,
                           double floor) {
  if (k < 1) throw ConfigError("select_sets: k must be >= 1");
  std::vector<const MemRecord*> eligible;
  for (const auto& rec : records) {
    if (rec.eligible) eligible.push_back(&rec);
  }
  if (eligible.size() < 2 * static_cast<std::size_t>(k))
    throw ConfigError("select_sets: need at least " + std::to_string(2 * k) +
                      " eligible records, have " + std::to_string(eligible.size()));

  std::sort(eligible.begin(), eligible.end(), [](const MemRecord* a, const MemRecord* b) {
    if (a->mem_value != b->mem_value) return a->mem_value > b->mem_value;
    return a->sample_id < b->sample_id;
  });

  ComparisonSets sets;
  sets.k = k;
  for (int i = 0; i < k; ++i) sets.memorized.push_back(eligible[static_cast<std::size_t>(i)]->sample_id);

  std::vector<const MemRecord*> pool(eligible.begin() + k, eligible.end());
  std::erase_if(pool, [floor](const MemRecord* rec) { return rec->mem_value < floor; });
  std::sort(pool.begin(), pool.end(), [](const MemRecord* a, const MemRecord* b) {
    return a->sample_id < b->sample_id;
  });
  if (pool.size() < static_cast<std::size_t>(k))
    throw ConfigError("select_sets: sampling pool has " + std::to_string(pool.size()) +
                      " records after floor filter, need " + std::to_string(k));

  SeededRng rng(seed);
  auto picks = rng.sample_without_replacement(pool.size(), static_cast<std::size_t>(k));
  for (auto idx : picks) sets.random.push_back(pool[idx]->sample_id);
  std::sort(sets.random.begin(), sets.random.end());
  return sets;
}

}  // namespace halluprobe::memorization
