#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace metafap {

// Deterministic RNG. All randomness in the pipeline flows through this
// wrapper so that results do not depend on the standard library's
// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer, used to derive well-separated child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c);

// FNV-1a over a byte buffer; used for content hashes in run manifests.
std::uint64_t fnv1a64(const void* data, std::size_t len);
std::uint64_t fnv1a64_file(const std::string& path);
std::string hash_hex(std::uint64_t h);

// Worker count for data-parallel sections. Reads METAFAP_THREADS;
// 0 or unset means hardware concurrency.
int worker_count();

// Runs fn(index, worker_slot) for index in [0, n). Work items must be
// independent; callers that reduce results must do so in index order so
// the outcome does not depend on the number of workers. Exceptions thrown
// by workers are rethrown on the calling thread.
void parallel_for(std::size_t n, const std::function<void(std::size_t, int)>& fn);

// Shortest decimal form that parses back to the identical double.
// Falls back to 17 significant digits, which always round-trips.
std::string format_double(double v);

// Fixed 17-significant-digit form used in checkpoints and CSV files.
std::string format_double17(double v);

// Minimal JSON emitter with explicit control over number formatting.
// Values are written in insertion order.
class JsonWriter {
 public:
  JsonWriter& begin_object();
  JsonWriter& end_object();
  JsonWriter& begin_array();
  JsonWriter& end_array();
  JsonWriter& key(const std::string& k);
  JsonWriter& value(double v);
  JsonWriter& value(int v);
  JsonWriter& value(std::int64_t v);
  JsonWriter& value(std::uint64_t v);
  JsonWriter& value(bool v);
  JsonWriter& value(const std::string& v);
  JsonWriter& value(const char* v);
  JsonWriter& raw(const std::string& text);

  const std::string& str() const { return out_; }

 private:
  void comma();
  std::string out_;
  std::vector<bool> need_comma_;
  bool pending_key_ = false;
};

std::string json_escape(const std::string& s);

// Writes text to path atomically enough for our purposes; throws
// std::runtime_error on IO failure.
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace metafap
