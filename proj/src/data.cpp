#include "metafap/data.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

namespace metafap {

bool intervals_contain(const std::vector<Interval>& iv, double v) {
  for (const Interval& i : iv) {
    if (v >= i.lo && v <= i.hi) return true;
  }
  return false;
}

double intervals_length(const std::vector<Interval>& iv) {
  double len = 0.0;
  for (const Interval& i : iv) len += i.hi - i.lo;
  return len;
}

namespace {
void validate_interval_list(const std::vector<Interval>& iv,
                            const std::string& label) {
  if (iv.empty()) {
    throw std::invalid_argument("split region '" + label + "' is empty");
  }
  for (std::size_t i = 0; i < iv.size(); ++i) {
    if (!(iv[i].lo < iv[i].hi)) {
      throw std::invalid_argument("split region '" + label +
                                  "' has a malformed interval");
    }
    for (std::size_t j = i + 1; j < iv.size(); ++j) {
      const bool overlap = iv[i].lo < iv[j].hi && iv[j].lo < iv[i].hi;
      if (overlap) {
        throw std::invalid_argument("split region '" + label +
                                    "' has overlapping intervals");
      }
    }
  }
}
}  // namespace

void SplitSpec::validate() const {
  if (name.empty()) throw std::invalid_argument("split name is empty");
  validate_interval_list(train_support, name + ".train_support");
  validate_interval_list(train_query, name + ".train_query");
  validate_interval_list(eval_support, name + ".eval_support");
  validate_interval_list(eval_query, name + ".eval_query");
}

SplitSpec preset_split(const std::string& name) {
  SplitSpec s;
  s.name = name;
  if (name == "primary") {
    s.train_support = {{5.0, 11.0}, {15.0, 16.5}};
    s.train_query = {{16.5, 19.0}};
    s.eval_support = {{19.0, 22.0}};
    s.eval_query = {{22.0, 25.0}};
  } else if (name == "easy") {
    s.train_support = {{5.0, 11.0}, {15.0, 17.0}};
    s.train_query = {{17.0, 20.0}};
    s.eval_support = {{20.0, 22.5}};
    s.eval_query = {{22.5, 25.0}};
  } else if (name == "hard") {
    s.train_support = {{5.0, 11.0}, {15.0, 16.0}};
    s.train_query = {{16.0, 18.0}};
    s.eval_support = {{18.0, 21.5}};
    s.eval_query = {{21.5, 25.0}};
  } else {
    std::string known;
    for (const std::string& k : split_names()) {
      if (!known.empty()) known += ", ";
      known += k;
    }
    throw std::invalid_argument("unknown split '" + name + "' (known: " +
                                known + ")");
  }
  return s;
}

std::vector<std::string> split_names() { return {"primary", "easy", "hard"}; }

std::array<double, 8> design_features(const DesignVector& d) {
  return {d.freq_ghz, d.theta_deg,       d.spacing_lambda,
          d.cvt_ff,   d.cvb_pf,          d.rv_ohm,
          d.lv_ph,    static_cast<double>(d.array_n)};
}

std::array<double, 8> Scaler::transform(const std::array<double, 8>& x) const {
  std::array<double, 8> out;
  for (int i = 0; i < 8; ++i) out[i] = (x[i] - mean[i]) / stdev[i];
  return out;
}

std::array<double, 8> Scaler::transform(const DesignVector& d) const {
  return transform(design_features(d));
}

Scaler fit_scaler(const std::vector<Sample>& fit_set) {
  if (fit_set.empty()) throw std::invalid_argument("fit_scaler: empty fit set");
  Scaler s;
  const double dn = static_cast<double>(fit_set.size());
  for (const Sample& smp : fit_set) {
    const auto f = design_features(smp.x);
    for (int i = 0; i < 8; ++i) s.mean[i] += f[i];
  }
  for (int i = 0; i < 8; ++i) s.mean[i] /= dn;
  for (const Sample& smp : fit_set) {
    const auto f = design_features(smp.x);
    for (int i = 0; i < 8; ++i) {
      const double c = f[i] - s.mean[i];
      s.stdev[i] += c * c;
    }
  }
  for (int i = 0; i < 8; ++i) {
    s.stdev[i] = std::sqrt(s.stdev[i] / dn);
    if (s.stdev[i] == 0.0) s.stdev[i] = 1.0;
  }
  return s;
}

std::vector<Sample> generate_dataset(std::size_t n, const OracleConfig& cfg,
                                     std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("generate_dataset: n must be >= 1");
  cfg.validate();
  using namespace domain;
  const double len1 = kFreqHi1 - kFreqLo1;
  const double len2 = kFreqHi2 - kFreqLo2;

  Rng rng(seed);
  std::vector<Sample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    DesignVector& d = out[i].x;
    const double u = rng.uniform(0.0, len1 + len2);
    d.freq_ghz = u < len1 ? kFreqLo1 + u : kFreqLo2 + (u - len1);
    d.theta_deg = rng.uniform(kThetaLo, kThetaHi);
    d.spacing_lambda = rng.uniform(kSpacingLo, kSpacingHi);
    d.cvt_ff = rng.uniform(kCvtLo, kCvtHi);
    d.cvb_pf = rng.uniform(kCvbLo, kCvbHi);
    d.rv_ohm = rng.uniform(kRvLo, kRvHi);
    d.lv_ph = rng.uniform(kLvLo, kLvHi);
    d.array_n = kArrayLo + static_cast<int>(rng.uniform_index(
                               static_cast<std::uint64_t>(kArrayHi - kArrayLo + 1)));
  }
  parallel_for(n, [&](std::size_t i, int) {
    out[i].y = unit_cell_response(out[i].x, cfg);
  });
  return out;
}

const char* const kCsvHeader =
    "freq_ghz,theta_deg,spacing_lambda,cvt_ff,cvb_pf,rv_ohm,lv_ph,array_n,"
    "transmittance,reflectance,absorbance";

std::string dataset_to_csv(const std::vector<Sample>& samples) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const Sample& s : samples) {
    out += format_double17(s.x.freq_ghz);
    out += ',';
    out += format_double17(s.x.theta_deg);
    out += ',';
    out += format_double17(s.x.spacing_lambda);
    out += ',';
    out += format_double17(s.x.cvt_ff);
    out += ',';
    out += format_double17(s.x.cvb_pf);
    out += ',';
    out += format_double17(s.x.rv_ohm);
    out += ',';
    out += format_double17(s.x.lv_ph);
    out += ',';
    out += std::to_string(s.x.array_n);
    out += ',';
    out += format_double17(s.y.transmittance);
    out += ',';
    out += format_double17(s.y.reflectance);
    out += ',';
    out += format_double17(s.y.absorbance);
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<Sample>& samples) {
  write_text_file(path, dataset_to_csv(samples));
}

namespace {
double parse_field(const std::string& field, std::size_t line_no) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || end != begin + field.size() || !std::isfinite(v)) {
    throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                ": malformed numeric field '" + field + "'");
  }
  return v;
}
}  // namespace

std::vector<Sample> parse_csv(const std::string& text) {
  std::vector<Sample> out;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string line = text.substr(pos, eol - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = eol + 1;
    ++line_no;
    if (!saw_header) {
      if (line != kCsvHeader) {
        throw std::invalid_argument(
            "csv line 1: header mismatch (expected '" +
            std::string(kCsvHeader) + "')");
      }
      saw_header = true;
      continue;
    }
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (fields.size() != 11) {
      throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                  ": expected 11 fields, got " +
                                  std::to_string(fields.size()));
    }
    Sample s;
    s.x.freq_ghz = parse_field(fields[0], line_no);
    s.x.theta_deg = parse_field(fields[1], line_no);
    s.x.spacing_lambda = parse_field(fields[2], line_no);
    s.x.cvt_ff = parse_field(fields[3], line_no);
    s.x.cvb_pf = parse_field(fields[4], line_no);
    s.x.rv_ohm = parse_field(fields[5], line_no);
    s.x.lv_ph = parse_field(fields[6], line_no);
    const double n_raw = parse_field(fields[7], line_no);
    if (n_raw != std::floor(n_raw)) {
      throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                  ": array_n is not an integer");
    }
    s.x.array_n = static_cast<int>(n_raw);
    s.y.transmittance = parse_field(fields[8], line_no);
    s.y.reflectance = parse_field(fields[9], line_no);
    s.y.absorbance = parse_field(fields[10], line_no);
    try {
      s.x.validate();
      s.y.validate(1e-9);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("csv line " + std::to_string(line_no) +
                                  ": " + e.what());
    }
    out.push_back(s);
  }
  if (!saw_header) throw std::invalid_argument("csv: empty document");
  return out;
}

std::vector<Sample> read_csv(const std::string& path) {
  return parse_csv(read_text_file(path));
}

namespace {
std::vector<std::uint32_t> region_indices(const std::vector<Sample>& pool,
                                          const std::vector<Interval>& region) {
  std::vector<std::uint32_t> idx;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (intervals_contain(region, pool[i].x.freq_ghz)) {
      idx.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return idx;
}
}  // namespace

SplitPools make_pools(const std::vector<Sample>& dataset,
                      const SplitSpec& split, std::uint64_t seed) {
  split.validate();
  SplitPools pools;
  pools.split = split;

  std::vector<Interval> train_region = split.train_support;
  train_region.insert(train_region.end(), split.train_query.begin(),
                      split.train_query.end());
  std::vector<Interval> eval_region = split.eval_support;
  eval_region.insert(eval_region.end(), split.eval_query.begin(),
                     split.eval_query.end());

  std::vector<std::uint32_t> eval_idx;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const double f = dataset[i].x.freq_ghz;
    if (intervals_contain(train_region, f)) {
      pools.train.push_back(dataset[i]);
    } else if (intervals_contain(eval_region, f)) {
      eval_idx.push_back(static_cast<std::uint32_t>(i));
    }
  }
  if (pools.train.empty()) {
    throw std::invalid_argument("split '" + split.name +
                                "' leaves the train pool empty");
  }
  if (eval_idx.size() < 2) {
    throw std::invalid_argument("split '" + split.name +
                                "' leaves the eval pool too small");
  }
  Rng rng(mix_seed(seed, 0x706f6f6cULL));  // "pool"
  rng.shuffle(eval_idx);
  const std::size_t half = eval_idx.size() / 2;
  for (std::size_t k = 0; k < eval_idx.size(); ++k) {
    (k < half ? pools.val : pools.test).push_back(dataset[eval_idx[k]]);
  }
  pools.scaler = fit_scaler(pools.train);
  return pools;
}

TaskSampler::TaskSampler(const std::vector<Sample>& pool,
                         const SplitSpec& split, TaskPhase phase,
                         const Scaler& scaler)
    : pool_(&pool), scaler_(&scaler) {
  const bool train = phase == TaskPhase::kTrain;
  region_label_ = "split '" + split.name + "' " +
                  (train ? "train" : "eval") + " phase";
  support_idx_ =
      region_indices(pool, train ? split.train_support : split.eval_support);
  query_idx_ =
      region_indices(pool, train ? split.train_query : split.eval_query);
}

namespace {
// Partial Fisher-Yates: deterministically draws k distinct entries, then
// restores the original order so repeated draws match a fresh sampler.
void draw_without_replacement(std::vector<std::uint32_t>& idx, std::size_t k,
                              Rng& rng, std::vector<std::uint32_t>& out) {
  std::vector<std::pair<std::size_t, std::size_t>> swaps;
  swaps.reserve(k);
  out.clear();
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j =
        i + static_cast<std::size_t>(rng.uniform_index(idx.size() - i));
    std::swap(idx[i], idx[j]);
    swaps.emplace_back(i, j);
    out.push_back(idx[i]);
  }
  for (std::size_t s = swaps.size(); s > 0; --s) {
    std::swap(idx[swaps[s - 1].first], idx[swaps[s - 1].second]);
  }
}
}  // namespace

Task TaskSampler::draw(std::size_t n_support, std::size_t n_query, Rng& rng,
                       std::uint64_t id) const {
  if (n_support == 0 || n_query == 0) {
    throw std::invalid_argument("task sizes must be >= 1");
  }
  if (support_idx_.size() < n_support) {
    throw std::invalid_argument(
        region_label_ + ": support region has " +
        std::to_string(support_idx_.size()) + " samples, need " +
        std::to_string(n_support));
  }
  if (query_idx_.size() < n_query) {
    throw std::invalid_argument(
        region_label_ + ": query region has " +
        std::to_string(query_idx_.size()) + " samples, need " +
        std::to_string(n_query));
  }
  Task t;
  t.id = id;
  std::vector<std::uint32_t> picks;
  draw_without_replacement(support_idx_, n_support, rng, picks);
  t.support.reserve(n_support);
  for (std::uint32_t p : picks) {
    const Sample& s = (*pool_)[p];
    t.support.push_back({scaler_->transform(s.x),
                         Triple{s.y.transmittance, s.y.reflectance,
                                s.y.absorbance}});
  }
  draw_without_replacement(query_idx_, n_query, rng, picks);
  t.query.reserve(n_query);
  for (std::uint32_t p : picks) {
    const Sample& s = (*pool_)[p];
    t.query.push_back({scaler_->transform(s.x),
                       Triple{s.y.transmittance, s.y.reflectance,
                              s.y.absorbance}});
  }
  return t;
}

Task sample_task(const std::vector<Sample>& pool, const SplitSpec& split,
                 TaskPhase phase, std::size_t n_support, std::size_t n_query,
                 const Scaler& scaler, Rng& rng, std::uint64_t id) {
  TaskSampler sampler(pool, split, phase, scaler);
  return sampler.draw(n_support, n_query, rng, id);
}

}  // namespace metafap
