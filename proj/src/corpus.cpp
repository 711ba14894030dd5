#include "halluprobe/corpus.hpp"

#include <fstream>
#include <sstream>

#include "halluprobe/errors.hpp"

namespace halluprobe {

std::vector<std::string> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

void write_lines(const std::filesystem::path& file, const std::vector<std::string>& lines) {
  std::ofstream out(file);
  if (!out) throw ConfigError("cannot write " + file.string());
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw ConfigError("write failed: " + file.string());
}

std::string read_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + file.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& file, std::string_view content) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + file.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw ConfigError("write failed: " + file.string());
}

ParallelCorpus load_parallel_corpus(const std::filesystem::path& dir) {
  ParallelCorpus corpus;
  corpus.sources = read_lines(dir / "src.txt");
  corpus.targets = read_lines(dir / "tgt.txt");
  if (corpus.sources.size() != corpus.targets.size()) {
    throw ConfigError("misaligned corpus in " + dir.string() + ": " +
                      std::to_string(corpus.sources.size()) + " source vs " +
                      std::to_string(corpus.targets.size()) + " target lines");
  }
  return corpus;
}

void save_parallel_corpus(const std::filesystem::path& dir, const ParallelCorpus& corpus,
                          const std::string& src_name, const std::string& tgt_name) {
  std::filesystem::create_directories(dir);
  write_lines(dir / src_name, corpus.sources);
  write_lines(dir / tgt_name, corpus.targets);
}

std::vector<std::string> split_tsv(std::string_view line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.emplace_back(line.substr(start));
      return fields;
    }
    fields.emplace_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::vector<std::vector<std::string>> read_tsv(const std::filesystem::path& file) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& line : read_lines(file)) {
    if (line.empty()) continue;
    rows.push_back(split_tsv(line));
  }
  return rows;
}

}  // namespace halluprobe
