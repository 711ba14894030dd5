#include "halluprobe/backend.hpp"

#include <atomic>
#include <csignal>
#include <cstring>
#include <mutex>
#include <semaphore>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include "halluprobe/corpus.hpp"
#include "halluprobe/errors.hpp"

namespace halluprobe::backend {

void TranslationBackend::set_max_inflight(std::size_t limit) {
  if (limit == 0) throw ConfigError("max_inflight must be >= 1");
  max_inflight_ = limit;
}

std::optional<std::string> TranslationBackend::cached(const std::string& source) const {
  std::shared_lock lock(cache_mutex_);
  auto it = cache_.find(source);
  if (it == cache_.end()) return std::nullopt;
  return it->second;
}

void TranslationBackend::store(const std::string& source, const std::string& translation) {
  std::unique_lock lock(cache_mutex_);
  cache_.emplace(source, translation);
}

std::size_t TranslationBackend::cache_size() const {
  std::shared_lock lock(cache_mutex_);
  return cache_.size();
}

std::string TranslationBackend::translate(const std::string& source) {
  if (deterministic_) {
    if (auto hit = cached(source)) return *hit;
  }
  std::string translation = fetch(source);
  if (deterministic_) store(source, translation);
  return translation;
}

std::vector<TranslationBackend::Item> TranslationBackend::fetch_many(
    const std::vector<std::string>& sources) {
  std::vector<Item> items;
  items.reserve(sources.size());
  for (const auto& source : sources) {
    Item item;
    try {
      item.translation = fetch(source);
    } catch (const Error& e) {
      item.error = e.what();
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<TranslationBackend::Item> TranslationBackend::translate_batch(
    std::span<const std::string> sources) {
  std::vector<Item> out(sources.size());
  if (!deterministic_) {
    auto fetched = fetch_many(std::vector<std::string>(sources.begin(), sources.end()));
    for (std::size_t i = 0; i < sources.size(); ++i) out[i] = std::move(fetched[i]);
    return out;
  }

  // Resolve cache hits and dedupe the misses, preserving first appearance.
  std::vector<std::string> misses;
  std::unordered_map<std::string, std::size_t> miss_slot;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string& source = sources[i];
    if (cached(source)) continue;
    if (miss_slot.emplace(source, misses.size()).second) misses.push_back(source);
  }

  std::vector<Item> fetched;
  if (!misses.empty()) {
    fetched = fetch_many(misses);
    for (std::size_t j = 0; j < misses.size(); ++j) {
      if (fetched[j].ok()) store(misses[j], *fetched[j].translation);
    }
  }

  for (std::size_t i = 0; i < sources.size(); ++i) {
    const std::string& source = sources[i];
    if (auto hit = cached(source)) {
      out[i].translation = std::move(hit);
    } else {
      out[i] = fetched[miss_slot.at(source)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// ManifestBackend

ManifestBackend::ManifestBackend(std::unordered_map<std::string, std::string> table)
    : TranslationBackend("manifest", /*deterministic=*/true), table_(std::move(table)) {}

std::unique_ptr<ManifestBackend> ManifestBackend::from_tsv(const std::filesystem::path& file) {
  std::unordered_map<std::string, std::string> table;
  std::size_t line_no = 0;
  for (const auto& line : read_lines(file)) {
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_tsv(line);
    if (fields.size() < 2)
      throw ConfigError("manifest " + file.string() + " line " + std::to_string(line_no) +
                        ": expected `source TAB translation`");
    auto [it, inserted] = table.emplace(fields[0], fields[1]);
    if (!inserted && it->second != fields[1])
      throw ConfigError("manifest " + file.string() + " line " + std::to_string(line_no) +
                        ": conflicting duplicate source");
  }
  return std::make_unique<ManifestBackend>(std::move(table));
}

std::string ManifestBackend::fetch(const std::string& source) {
  auto it = table_.find(source);
  if (it == table_.end())
    throw BackendError("manifest backend has no translation for source: " + source);
  return it->second;
}

// ---------------------------------------------------------------------------
// CommandBackend

namespace {

std::string sanitize_line(const std::string& source) {
  std::string out = source;
  for (char& c : out) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return out;
}

void ignore_sigpipe_once() {
  static const bool done = [] {
    std::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

}  // namespace

CommandBackend::CommandBackend(std::vector<std::string> argv, bool deterministic,
                               std::vector<std::string> extra_env)
    : TranslationBackend("cmd", deterministic),
      argv_(std::move(argv)),
      extra_env_(std::move(extra_env)) {
  if (argv_.empty()) throw ConfigError("command backend needs a program to run");
  ignore_sigpipe_once();
}

CommandBackend::~CommandBackend() { shutdown(); }

void CommandBackend::ensure_started() {
  if (child_pid_ > 0) return;

  int to_child[2];
  int from_child[2];
  if (pipe(to_child) != 0 || pipe(from_child) != 0)
    throw BackendError("pipe() failed: " + std::string(std::strerror(errno)));

  pid_t pid = fork();
  if (pid < 0) throw BackendError("fork() failed: " + std::string(std::strerror(errno)));

  if (pid == 0) {
    dup2(to_child[0], STDIN_FILENO);
    dup2(from_child[1], STDOUT_FILENO);
    close(to_child[0]);
    close(to_child[1]);
    close(from_child[0]);
    close(from_child[1]);
    for (const auto& kv : extra_env_) {
      auto eq = kv.find('=');
      if (eq != std::string::npos)
        setenv(kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str(), 1);
    }
    std::vector<char*> argv;
    argv.reserve(argv_.size() + 1);
    for (auto& arg : argv_) argv.push_back(arg.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    std::fprintf(stderr, "halluprobe: cannot exec %s: %s\n", argv[0], std::strerror(errno));
    _exit(127);
  }

  close(to_child[0]);
  close(from_child[1]);
  child_pid_ = pid;
  to_child_ = to_child[1];
  from_child_ = from_child[0];
}

void CommandBackend::shutdown() noexcept {
  if (to_child_ >= 0) {
    close(to_child_);
    to_child_ = -1;
  }
  if (from_child_ >= 0) {
    close(from_child_);
    from_child_ = -1;
  }
  if (child_pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {  // ~0.5s grace after stdin EOF
      if (waitpid(child_pid_, &status, WNOHANG) != 0) {
        child_pid_ = -1;
        return;
      }
      usleep(10000);
    }
    kill(child_pid_, SIGKILL);
    waitpid(child_pid_, &status, 0);
    child_pid_ = -1;
  }
}

bool CommandBackend::write_line(const std::string& line) {
  std::string payload = line;
  payload.push_back('\n');
  std::size_t written = 0;
  while (written < payload.size()) {
    ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    written += static_cast<std::size_t>(n);
  }
  return true;
}

bool CommandBackend::read_line(std::string& line) {
  while (true) {
    auto pos = read_buffer_.find('\n');
    if (pos != std::string::npos) {
      line = read_buffer_.substr(0, pos);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      read_buffer_.erase(0, pos + 1);
      return true;
    }
    char chunk[4096];
    ssize_t n = read(from_child_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    if (n == 0) return false;
    read_buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string CommandBackend::death_notice() const {
  std::string cmd;
  for (std::size_t i = 0; i < argv_.size(); ++i) {
    if (i) cmd.push_back(' ');
    cmd += argv_[i];
  }
  return "backend command '" + cmd + "' stopped responding";
}

std::string CommandBackend::fetch(const std::string& source) {
  ensure_started();
  if (!write_line(sanitize_line(source)))
    throw BackendError(death_notice() + " while sending source: " + source);
  std::string line;
  if (!read_line(line))
    throw BackendError(death_notice() + " while translating source: " + source);
  return line;
}

std::vector<TranslationBackend::Item> CommandBackend::fetch_many(
    const std::vector<std::string>& sources) {
  ensure_started();
  std::vector<Item> items(sources.size());
  if (sources.empty()) return items;

  // Pipeline: the writer runs at most max_inflight lines ahead of the reader.
  std::counting_semaphore<> slots(static_cast<std::ptrdiff_t>(max_inflight()));
  std::atomic<bool> dead{false};
  std::thread writer([&] {
    for (const auto& source : sources) {
      slots.acquire();
      if (dead.load(std::memory_order_acquire)) return;
      if (!write_line(sanitize_line(source))) {
        dead.store(true, std::memory_order_release);
        return;
      }
    }
  });

  for (std::size_t i = 0; i < sources.size(); ++i) {
    std::string line;
    if (!dead.load(std::memory_order_acquire) && read_line(line)) {
      items[i].translation = std::move(line);
    } else {
      dead.store(true, std::memory_order_release);
      items[i].error = death_notice() + " while translating source: " + sources[i];
    }
    slots.release();
  }

  // Unblock the writer if it is still parked on a slot.
  slots.release(static_cast<std::ptrdiff_t>(sources.size()));
  writer.join();
  return items;
}

// ---------------------------------------------------------------------------
// Backend spec parsing

std::vector<std::string> split_command(std::string_view spec) {
  std::vector<std::string> args;
  std::string current;
  bool have_token = false;
  std::size_t i = 0;
  while (i < spec.size()) {
    char c = spec[i];
    if (c == ' ' || c == '\t') {
      if (have_token) {
        args.push_back(std::move(current));
        current.clear();
        have_token = false;
      }
      ++i;
    } else if (c == '\'') {
      have_token = true;
      ++i;
      while (i < spec.size() && spec[i] != '\'') current.push_back(spec[i++]);
      if (i >= spec.size()) throw ConfigError("unterminated single quote in command spec");
      ++i;
    } else if (c == '"') {
      have_token = true;
      ++i;
      while (i < spec.size() && spec[i] != '"') {
        if (spec[i] == '\\' && i + 1 < spec.size()) ++i;
        current.push_back(spec[i++]);
      }
      if (i >= spec.size()) throw ConfigError("unterminated double quote in command spec");
      ++i;
    } else if (c == '\\' && i + 1 < spec.size()) {
      have_token = true;
      current.push_back(spec[i + 1]);
      i += 2;
    } else {
      have_token = true;
      current.push_back(c);
      ++i;
    }
  }
  if (have_token) args.push_back(std::move(current));
  return args;
}

std::unique_ptr<TranslationBackend> parse_backend_spec(std::string_view spec,
                                                       bool nondeterministic,
                                                       std::vector<std::string> extra_env) {
  constexpr std::string_view kManifest = "manifest:";
  constexpr std::string_view kCommand = "cmd:";
  if (spec.starts_with(kManifest)) {
    if (nondeterministic)
      throw ConfigError("manifest backends are always deterministic");
    return ManifestBackend::from_tsv(std::filesystem::path(spec.substr(kManifest.size())));
  }
  if (spec.starts_with(kCommand)) {
    auto argv = split_command(spec.substr(kCommand.size()));
    if (argv.empty()) throw ConfigError("empty command in backend spec");
    return std::make_unique<CommandBackend>(std::move(argv), !nondeterministic,
                                            std::move(extra_env));
  }
  throw ConfigError("backend spec must start with 'manifest:' or 'cmd:', got: " +
                    std::string(spec));
}

}  // namespace halluprobe::backend
