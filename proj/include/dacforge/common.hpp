#pragma once

/**
 * Shared utilities: deterministic RNG, seed derivation, string/file helpers.
 *
 * Every sampled artifact in the pipeline is keyed by a seed derived from
 * (global seed, problem id, purpose string), so results are independent of
 * scheduling and thread count.
 */

#include <atomic>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace dacforge {

// ============================================================================
// Deterministic RNG (splitmix64)
// ============================================================================

/// Counter-based generator with exact cross-platform behavior. Standard
/// library distributions are implementation-defined, so sampling goes through
/// the explicit mappings below.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_double() < p; }

  /// Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    if (hi < lo) throw std::invalid_argument("uniform_int: hi < lo");
    uint64_t span = static_cast<uint64_t>(hi) - static_cast<uint64_t>(lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

 private:
  uint64_t state_;
};

inline uint64_t splitmix64_once(uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Seed for one generation request. Purpose strings name the sampling site
/// (e.g. "division:t=3", "conquer:t=3:g=1") so concurrent schedules cannot
/// change what gets sampled.
inline uint64_t seed_for(uint64_t global_seed, std::string_view problem_id,
                         std::string_view purpose) {
  uint64_t h = fnv1a64(problem_id);
  h = fnv1a64("\x1f", h);
  h = fnv1a64(purpose, h);
  return splitmix64_once(h ^ splitmix64_once(global_seed));
}

/// Derive a sub-seed (e.g. per completion index) from a request seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
  return splitmix64_once(seed ^ splitmix64_once(salt + 0x51a9b2c3d4e5f607ull));
}

// ============================================================================
// Strings
// ============================================================================

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim_view(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return s.substr(b, e - b);
}

inline std::string trim(std::string_view s) { return std::string(trim_view(s)); }

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<std::string> split(std::string_view s, char delim) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(delim, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

/// Whitespace-delimited token count; stand-in token counter for backends that
/// do not report one.
inline int approx_token_count(std::string_view s) {
  int count = 0;
  bool in_tok = false;
  for (char c : s) {
    if (is_space(c)) {
      in_tok = false;
    } else if (!in_tok) {
      in_tok = true;
      ++count;
    }
  }
  return count;
}

// ============================================================================
// Files
// ============================================================================

inline std::string slurp_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Write-then-rename so readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  write_file(tmp, content);
  std::filesystem::rename(tmp, path);
}

inline std::string iso8601_utc_now() {
  using namespace std::chrono;
  auto now = system_clock::now();
  std::time_t t = system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// ============================================================================
// Parallel execution
// ============================================================================

/// Run fn(0..count-1) on up to `parallelism` threads. The first exception
/// stops scheduling of new work and is rethrown after all workers join.
template <typename Fn>
void parallel_for(size_t count, int parallelism, Fn&& fn) {
  if (count == 0) return;
  if (parallelism <= 1 || count == 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mu;
  size_t n_threads = std::min<size_t>(static_cast<size_t>(parallelism), count);
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  for (size_t w = 0; w < n_threads; ++w) {
    workers.emplace_back([&] {
      while (!failed.load(std::memory_order_relaxed)) {
        size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= count) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
          failed.store(true, std::memory_order_relaxed);
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace dacforge
