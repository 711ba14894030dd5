#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace halluprobe {

/// One aligned sentence pair.
struct Pair {
  std::string source;
  std::string target;

  friend bool operator==(const Pair&, const Pair&) = default;
};

/// Aligned source/target sentences; the line index is the stable sample id.
struct ParallelCorpus {
  std::vector<std::string> sources;
  std::vector<std::string> targets;

  std::size_t size() const { return sources.size(); }
  bool empty() const { return sources.empty(); }
  Pair pair(std::size_t i) const { return {sources[i], targets[i]}; }
};

/// Reads a directory holding src.txt / tgt.txt with equal line counts.
ParallelCorpus load_parallel_corpus(const std::filesystem::path& dir);
void save_parallel_corpus(const std::filesystem::path& dir, const ParallelCorpus& corpus,
                          const std::string& src_name = "src.txt",
                          const std::string& tgt_name = "tgt.txt");

std::vector<std::string> read_lines(const std::filesystem::path& file);
void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines);
std::string read_file(const std::filesystem::path& file);
void write_file(const std::filesystem::path& file, std::string_view content);

/// Splits one line on tab characters. Trailing empty fields are preserved.
std::vector<std::string> split_tsv(std::string_view line);

/// Rows of a TSV file, each split on tabs. Blank lines are skipped.
std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& file);

}  // namespace halluprobe
