#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "metafap/common.hpp"
#include "metafap/objective.hpp"
#include "metafap/oracle.hpp"

namespace metafap {

struct Sample {
  DesignVector x;
  ResponseTriple y;
};

// Closed frequency interval in GHz.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

bool intervals_contain(const std::vector<Interval>& iv, double v);
double intervals_length(const std::vector<Interval>& iv);

// Frequency regions defining the episodic protocol. Support and query
// regions are disjoint between the train and eval sides; eval tasks adapt
// on eval_support and are scored on eval_query.
struct SplitSpec {
  std::string name;
  std::vector<Interval> train_support;
  std::vector<Interval> train_query;
  std::vector<Interval> eval_support;
  std::vector<Interval> eval_query;

  void validate() const;
};

// Named presets: "primary", "easy", "hard".
SplitSpec preset_split(const std::string& name);
std::vector<std::string> split_names();

// Raw feature vector in CSV column order; feature 0 is frequency.
std::array<double, 8> design_features(const DesignVector& d);

// Per-feature z-score parameters. Zero-variance features keep std 1 so
// scaling maps them to exactly 0.
struct Scaler {
  std::array<double, 8> mean{};
  std::array<double, 8> stdev{};

  std::array<double, 8> transform(const std::array<double, 8>& x) const;
  std::array<double, 8> transform(const DesignVector& d) const;
};

Scaler fit_scaler(const std::vector<Sample>& fit_set);

// n i.i.d. draws, uniform per feature; frequency mass is proportional to
// interval length across the two bands. Labels come from the oracle.
std::vector<Sample> generate_dataset(std::size_t n, const OracleConfig& cfg,
                                     std::uint64_t seed);

extern const char* const kCsvHeader;

std::string dataset_to_csv(const std::vector<Sample>& samples);
void write_csv(const std::string& path, const std::vector<Sample>& samples);
std::vector<Sample> parse_csv(const std::string& text);
std::vector<Sample> read_csv(const std::string& path);

struct ScaledSample {
  std::array<double, 8> x{};
  Triple y{};
};

struct Task {
  std::vector<ScaledSample> support;
  std::vector<ScaledSample> query;
  std::uint64_t id = 0;
};

enum class TaskPhase { kTrain, kEval };

// Pools derived from one dataset: train-region samples, plus the
// eval-region samples split into disjoint validation and test halves.
// The scaler is fit on the train pool only.
struct SplitPools {
  SplitSpec split;
  Scaler scaler;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

SplitPools make_pools(const std::vector<Sample>& dataset,
                      const SplitSpec& split, std::uint64_t seed);

// Draws one episodic task from a pool: support samples uniformly without
// replacement from the phase's support region, query samples from its
// query region. Throws std::invalid_argument naming the deficient region
// if a region holds fewer samples than requested.
Task sample_task(const std::vector<Sample>& pool, const SplitSpec& split,
                 TaskPhase phase, std::size_t n_support, std::size_t n_query,
                 const Scaler& scaler, Rng& rng, std::uint64_t id = 0);

// Reusable sampler for hot loops; draws are bitwise identical to
// sample_task given the same rng state.
class TaskSampler {
 public:
  TaskSampler(const std::vector<Sample>& pool, const SplitSpec& split,
              TaskPhase phase, const Scaler& scaler);

  Task draw(std::size_t n_support, std::size_t n_query, Rng& rng,
            std::uint64_t id) const;

  std::size_t support_available() const { return support_idx_.size(); }
  std::size_t query_available() const { return query_idx_.size(); }

 private:
  const std::vector<Sample>* pool_;
  const Scaler* scaler_;
  std::string region_label_;
  mutable std::vector<std::uint32_t> support_idx_;
  mutable std::vector<std::uint32_t> query_idx_;
};

}  // namespace metafap
