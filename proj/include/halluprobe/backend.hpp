#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace halluprobe::backend {

/// Stand-in for the external NMT system: anything that maps a source
/// sentence to a translation. Deterministic backends are cached by exact
/// source string; a cached sentence is never re-requested.
class TranslationBackend {
 public:
  struct Item {
    std::optional<std::string> translation;
    std::string error;
    bool ok() const { return translation.has_value(); }
  };

  virtual ~TranslationBackend() = default;

  const std::string& name() const { return name_; }
  bool deterministic() const { return deterministic_; }

  std::size_t max_inflight() const { return max_inflight_; }
  void set_max_inflight(std::size_t limit);

  /// Throws BackendError with the source attached on miss or child failure.
  std::string translate(const std::string& source);

  /// Order-preserving; errors are isolated per item. Duplicate sources in
  /// one batch cost a single external call on deterministic backends.
  std::vector<Item> translate_batch(std::span<const std::string> sources);

  std::size_t cache_size() const;

 protected:
  TranslationBackend(std::string name, bool deterministic)
      : name_(std::move(name)), deterministic_(deterministic) {}

  virtual std::string fetch(const std::string& source) = 0;

  /// Bulk fetch hook for backends that can pipeline; the default loops
  /// fetch() with per-item error capture.
  virtual std::vector<Item> fetch_many(const std::vector<std::string>& sources);

 private:
  std::optional<std::string> cached(const std::string& source) const;
  void store(const std::string& source, const std::string& translation);

  std::string name_;
  bool deterministic_;
  std::size_t max_inflight_ = 8;
  mutable std::shared_mutex cache_mutex_;
  std::unordered_map<std::string, std::string> cache_;
};

/// Static source -> translation table; always deterministic.
class ManifestBackend : public TranslationBackend {
 public:
  explicit ManifestBackend(std::unordered_map<std::string, std::string> table);

  /// TSV rows of `source TAB translation`. Conflicting duplicate sources
  /// are rejected; identical duplicates are collapsed.
  static std::unique_ptr<ManifestBackend> from_tsv(const std::filesystem::path& file);

 protected:
  std::string fetch(const std::string& source) override;

 private:
  std::unordered_map<std::string, std::string> table_;
};

/// External translator child process speaking a line protocol: one source
/// sentence per input line, one translation per output line, strict 1:1,
/// UTF-8, flushed per line. One child per backend instance; batch requests
/// are pipelined up to max_inflight lines ahead.
class CommandBackend : public TranslationBackend {
 public:
  CommandBackend(std::vector<std::string> argv, bool deterministic,
                 std::vector<std::string> extra_env = {});
  ~CommandBackend() override;

  CommandBackend(const CommandBackend&) = delete;
  CommandBackend& operator=(const CommandBackend&) = delete;

 protected:
  std::string fetch(const std::string& source) override;
  std::vector<Item> fetch_many(const std::vector<std::string>& sources) override;

 private:
  void ensure_started();
  void shutdown() noexcept;
  bool write_line(const std::string& line);
  bool read_line(std::string& line);
  std::string death_notice() const;

  std::vector<std::string> argv_;
  std::vector<std::string> extra_env_;
  int child_pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string read_buffer_;
};

/// Shell-style splitting of a command spec into an argument vector.
/// Handles single quotes, double quotes, and backslash escapes.
std::vector<std::string> split_command(std::string_view spec);

/// Parses the shared `--backend` value: `manifest:FILE` or `cmd:PROG ARGS`.
/// extra_env entries (KEY=VALUE) are exported to command backend children.
std::unique_ptr<TranslationBackend> parse_backend_spec(std::string_view spec,
                                                       bool nondeterministic = false,
                                                       std::vector<std::string> extra_env = {});

}  // namespace halluprobe::backend
