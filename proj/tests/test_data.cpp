#include <algorithm>
#include <cmath>
#include <cstdio>
#include <doctest.h>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "metafap/data.hpp"

using namespace metafap;

namespace {

bool same_sample(const Sample& a, const Sample& b) {
  return a.x.freq_ghz == b.x.freq_ghz && a.x.theta_deg == b.x.theta_deg &&
         a.x.spacing_lambda == b.x.spacing_lambda && a.x.cvt_ff == b.x.cvt_ff &&
         a.x.cvb_pf == b.x.cvb_pf && a.x.rv_ohm == b.x.rv_ohm &&
         a.x.lv_ph == b.x.lv_ph && a.x.array_n == b.x.array_n &&
         a.y.transmittance == b.y.transmittance &&
         a.y.reflectance == b.y.reflectance &&
         a.y.absorbance == b.y.absorbance;
}

std::string temp_csv_path(const char* tag) {
  return std::string("/tmp/metafap_test_") + tag + ".csv";
}

}  // namespace

TEST_CASE("interval helpers") {
  std::vector<Interval> iv = {{5.0, 11.0}, {15.0, 25.0}};
  CHECK(intervals_contain(iv, 5.0));
  CHECK(intervals_contain(iv, 11.0));
  CHECK(!intervals_contain(iv, 11.0000001));
  CHECK(!intervals_contain(iv, 14.999999));
  CHECK(intervals_contain(iv, 15.0));
  CHECK(intervals_contain(iv, 25.0));
  CHECK(!intervals_contain(iv, 25.1));
  CHECK(intervals_length(iv) == doctest::Approx(16.0).epsilon(1e-15));
}

TEST_CASE("dataset generation is deterministic") {
  OracleConfig cfg;
  auto a = generate_dataset(100, cfg, 7);
  auto b = generate_dataset(100, cfg, 7);
  REQUIRE(a.size() == 100);
  REQUIRE(b.size() == 100);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same_sample(a[i], b[i]));

  auto c = generate_dataset(100, cfg, 8);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_sample(a[i], c[i])) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("generated designs respect the domain and labels are closed") {
  OracleConfig cfg;
  auto data = generate_dataset(10000, cfg, 1);
  int band_lo = 0, band_hi = 0;
  for (const auto& s : data) {
    CHECK_NOTHROW(s.x.validate());
    const double f = s.x.freq_ghz;
    CHECK(((f >= 5.0 && f <= 11.0) || (f >= 15.0 && f <= 25.0)));
    if (f <= 11.0) ++band_lo; else ++band_hi;
    CHECK(s.y.transmittance + s.y.reflectance + s.y.absorbance == 1.0);
    CHECK(s.y.transmittance >= 0.0);
    CHECK(s.y.reflectance >= 0.0);
    CHECK(s.y.absorbance >= 0.0);
  }
  // Frequency mass proportional to band length: 6 vs 10 GHz.
  CHECK(band_lo > 3200);
  CHECK(band_lo < 4300);
  CHECK(band_hi > 5700);

  CHECK_THROWS_AS(generate_dataset(0, cfg, 1), std::invalid_argument);
}

TEST_CASE("split presets pin the frequency regions") {
  SplitSpec p = preset_split("primary");
  CHECK(p.name == "primary");
  REQUIRE(p.train_support.size() == 2);
  CHECK(p.train_support[0].lo == 5.0);
  CHECK(p.train_support[0].hi == 11.0);
  CHECK(p.train_support[1].lo == 15.0);
  CHECK(p.train_support[1].hi == 16.5);
  REQUIRE(p.train_query.size() == 1);
  CHECK(p.train_query[0].lo == 16.5);
  CHECK(p.train_query[0].hi == 19.0);
  REQUIRE(p.eval_support.size() == 1);
  CHECK(p.eval_support[0].lo == 19.0);
  CHECK(p.eval_support[0].hi == 22.0);
  REQUIRE(p.eval_query.size() == 1);
  CHECK(p.eval_query[0].lo == 22.0);
  CHECK(p.eval_query[0].hi == 25.0);
  CHECK_NOTHROW(p.validate());

  SplitSpec e = preset_split("easy");
  CHECK(e.train_support[1].hi == 17.0);
  CHECK(e.train_query[0].lo == 17.0);
  CHECK(e.train_query[0].hi == 20.0);
  CHECK(e.eval_support[0].lo == 20.0);
  CHECK(e.eval_support[0].hi == 22.5);
  CHECK(e.eval_query[0].lo == 22.5);
  CHECK(e.eval_query[0].hi == 25.0);

  SplitSpec h = preset_split("hard");
  CHECK(h.train_support[1].hi == 16.0);
  CHECK(h.train_query[0].lo == 16.0);
  CHECK(h.train_query[0].hi == 18.0);
  CHECK(h.eval_support[0].lo == 18.0);
  CHECK(h.eval_support[0].hi == 21.5);
  CHECK(h.eval_query[0].lo == 21.5);
  CHECK(h.eval_query[0].hi == 25.0);

  auto names = split_names();
  REQUIRE(names.size() == 3);
  CHECK(std::find(names.begin(), names.end(), "primary") != names.end());

  CHECK_THROWS_WITH_AS(preset_split("bogus"),
                       doctest::Contains("unknown split"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(preset_split("bogus"), doctest::Contains("primary"),
                       std::invalid_argument);
}

TEST_CASE("split validation rejects overlapping or empty regions") {
  SplitSpec s = preset_split("primary");
  s.train_query.clear();
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);

  s = preset_split("primary");
  s.train_query[0] = {26.0, 25.0};
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("design_features puts frequency first and follows column order") {
  DesignVector d;
  d.freq_ghz = 17.5;
  d.theta_deg = 30.0;
  d.spacing_lambda = 0.4;
  d.cvt_ff = 120.0;
  d.cvb_pf = 1.5;
  d.rv_ohm = 2.0;
  d.lv_ph = 700.0;
  d.array_n = 4;
  auto f = design_features(d);
  CHECK(f[0] == 17.5);
  CHECK(f[1] == 30.0);
  CHECK(f[2] == 0.4);
  CHECK(f[3] == 120.0);
  CHECK(f[4] == 1.5);
  CHECK(f[5] == 2.0);
  CHECK(f[6] == 700.0);
  CHECK(f[7] == 4.0);
}

TEST_CASE("scaler normalizes the fit set") {
  OracleConfig cfg;
  auto data = generate_dataset(4000, cfg, 3);
  Scaler sc = fit_scaler(data);

  std::array<double, 8> mean{};
  std::array<double, 8> var{};
  for (const auto& s : data) {
    auto z = sc.transform(s.x);
    for (int j = 0; j < 8; ++j) mean[j] += z[j];
  }
  for (int j = 0; j < 8; ++j) mean[j] /= static_cast<double>(data.size());
  for (const auto& s : data) {
    auto z = sc.transform(s.x);
    for (int j = 0; j < 8; ++j) {
      var[j] += (z[j] - mean[j]) * (z[j] - mean[j]);
    }
  }
  for (int j = 0; j < 8; ++j) {
    var[j] /= static_cast<double>(data.size());
    CHECK(std::abs(mean[j]) < 1e-9);
    CHECK(std::abs(std::sqrt(var[j]) - 1.0) < 1e-9);
  }

  // Refitting on already-scaled data is a no-op up to rounding.
  std::vector<Sample> scaled = data;
  for (auto& s : scaled) {
    auto z = sc.transform(s.x);
    s.x.freq_ghz = z[0];
    s.x.theta_deg = z[1];
    s.x.spacing_lambda = z[2];
    s.x.cvt_ff = z[3];
    s.x.cvb_pf = z[4];
    s.x.rv_ohm = z[5];
    s.x.lv_ph = z[6];
    s.x.array_n = static_cast<int>(z[7]);
  }
  Scaler sc2 = fit_scaler(scaled);
  for (int j = 0; j < 7; ++j) {
    CHECK(std::abs(sc2.mean[j]) < 1e-9);
    CHECK(std::abs(sc2.stdev[j] - 1.0) < 1e-9);
  }
}

TEST_CASE("scaler maps constant features to zero") {
  OracleConfig cfg;
  auto data = generate_dataset(50, cfg, 5);
  for (auto& s : data) s.x.array_n = 4;
  Scaler sc = fit_scaler(data);
  CHECK(sc.stdev[7] == 1.0);
  for (const auto& s : data) {
    auto z = sc.transform(s.x);
    CHECK(z[7] == 0.0);
  }
  CHECK_THROWS_AS(fit_scaler(std::vector<Sample>{}), std::invalid_argument);
}

TEST_CASE("csv round trip is exact") {
  OracleConfig cfg;
  auto data = generate_dataset(1000, cfg, 11);
  std::string text = dataset_to_csv(data);
  auto back = parse_csv(text);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(same_sample(data[i], back[i]));
  }

  const std::string path = temp_csv_path("roundtrip");
  write_csv(path, data);
  auto from_file = read_csv(path);
  REQUIRE(from_file.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(same_sample(data[i], from_file[i]));
  }
  std::remove(path.c_str());
}

TEST_CASE("csv header line is pinned") {
  CHECK(std::string(kCsvHeader) ==
        "freq_ghz,theta_deg,spacing_lambda,cvt_ff,cvb_pf,rv_ohm,lv_ph,"
        "array_n,transmittance,reflectance,absorbance");
  OracleConfig cfg;
  auto data = generate_dataset(2, cfg, 1);
  std::string text = dataset_to_csv(data);
  CHECK(text.rfind(kCsvHeader, 0) == 0);
}

TEST_CASE("csv parse errors carry line numbers") {
  std::string good = std::string(kCsvHeader) +
                     "\n17.5,30,0.4,120,1.5,2,800,4,0.25,0.5,0.25\n";
  CHECK_THROWS_WITH_AS(parse_csv("bogus,header\n1,2\n"),
                       doctest::Contains("csv line 1"), std::invalid_argument);
  CHECK_THROWS_AS(parse_csv(""), std::invalid_argument);

  // Wrong field count.
  std::string short_row = std::string(kCsvHeader) + "\n1,2,3\n";
  CHECK_THROWS_WITH_AS(parse_csv(short_row), doctest::Contains("csv line 2"),
                       std::invalid_argument);

  // Unparsable number.
  std::string bad_num = good + "xx,30,0.4,120,1.5,2,800,4,0.25,0.5,0.25\n";
  CHECK_THROWS_WITH_AS(parse_csv(bad_num), doctest::Contains("csv line 3"),
                       std::invalid_argument);

  // In-gap frequency fails domain validation with the line number.
  std::string gap_row = std::string(kCsvHeader) +
                        "\n13.0,30,0.4,120,1.5,2,800,4,0.25,0.5,0.25\n";
  CHECK_THROWS_WITH_AS(parse_csv(gap_row), doctest::Contains("csv line 2"),
                       std::invalid_argument);
  CHECK_NOTHROW(parse_csv(good));
}

TEST_CASE("pools partition the dataset by region") {
  OracleConfig cfg;
  auto data = generate_dataset(20000, cfg, 2);
  SplitSpec split = preset_split("primary");
  SplitPools pools = make_pools(data, split, 9);

  CHECK(pools.split.name == "primary");
  CHECK(!pools.train.empty());
  CHECK(!pools.val.empty());
  CHECK(!pools.test.empty());

  std::vector<Interval> train_region = split.train_support;
  train_region.insert(train_region.end(), split.train_query.begin(),
                      split.train_query.end());
  std::vector<Interval> eval_region = split.eval_support;
  eval_region.insert(eval_region.end(), split.eval_query.begin(),
                     split.eval_query.end());

  std::size_t eval_total = 0;
  for (const auto& s : data) {
    if (intervals_contain(train_region, s.x.freq_ghz)) continue;
    if (intervals_contain(eval_region, s.x.freq_ghz)) ++eval_total;
  }
  CHECK(pools.val.size() + pools.test.size() == eval_total);
  CHECK(pools.val.size() == eval_total / 2);

  for (const auto& s : pools.train) {
    CHECK(intervals_contain(train_region, s.x.freq_ghz));
  }
  for (const auto& s : pools.val) {
    CHECK(intervals_contain(eval_region, s.x.freq_ghz));
  }
  for (const auto& s : pools.test) {
    CHECK(intervals_contain(eval_region, s.x.freq_ghz));
  }

  // Scaler comes from the train pool alone.
  Scaler ref = fit_scaler(pools.train);
  for (int j = 0; j < 8; ++j) {
    CHECK(pools.scaler.mean[j] == ref.mean[j]);
    CHECK(pools.scaler.stdev[j] == ref.stdev[j]);
  }

  // Same seed reproduces the same halves.
  SplitPools again = make_pools(data, split, 9);
  REQUIRE(again.val.size() == pools.val.size());
  for (std::size_t i = 0; i < pools.val.size(); ++i) {
    CHECK(same_sample(again.val[i], pools.val[i]));
  }
}

TEST_CASE("task sampling draws pure regions deterministically") {
  OracleConfig cfg;
  auto data = generate_dataset(30000, cfg, 4);
  SplitSpec split = preset_split("primary");
  SplitPools pools = make_pools(data, split, 4);

  Rng rng(42);
  Task t = sample_task(pools.train, split, TaskPhase::kTrain, 512, 256,
                       pools.scaler, rng, 77);
  CHECK(t.id == 77);
  REQUIRE(t.support.size() == 512);
  REQUIRE(t.query.size() == 256);
  for (const auto& s : t.support) {
    CHECK(s.y[0] + s.y[1] + s.y[2] == 1.0);
  }

  // Region purity: invert the frequency z-score to recover GHz.
  for (const auto& s : t.support) {
    const double f = s.x[0] * pools.scaler.stdev[0] + pools.scaler.mean[0];
    CHECK(intervals_contain(split.train_support, f));
  }
  for (const auto& s : t.query) {
    const double f = s.x[0] * pools.scaler.stdev[0] + pools.scaler.mean[0];
    CHECK(intervals_contain(split.train_query, f));
  }

  Rng rng_eval(42);
  Task te = sample_task(pools.test, split, TaskPhase::kEval, 64, 128,
                        pools.scaler, rng_eval, 0);
  for (const auto& s : te.support) {
    const double f = s.x[0] * pools.scaler.stdev[0] + pools.scaler.mean[0];
    CHECK(intervals_contain(split.eval_support, f));
  }
  for (const auto& s : te.query) {
    const double f = s.x[0] * pools.scaler.stdev[0] + pools.scaler.mean[0];
    CHECK(intervals_contain(split.eval_query, f));
  }

  // Same rng state, same task.
  Rng r1(123), r2(123);
  Task a = sample_task(pools.train, split, TaskPhase::kTrain, 32, 16,
                       pools.scaler, r1, 5);
  Task b = sample_task(pools.train, split, TaskPhase::kTrain, 32, 16,
                       pools.scaler, r2, 5);
  for (std::size_t i = 0; i < a.support.size(); ++i) {
    CHECK(a.support[i].x == b.support[i].x);
    CHECK(a.support[i].y == b.support[i].y);
  }
  for (std::size_t i = 0; i < a.query.size(); ++i) {
    CHECK(a.query[i].x == b.query[i].x);
    CHECK(a.query[i].y == b.query[i].y);
  }
}

TEST_CASE("task sampler matches sample_task and keeps draws independent") {
  OracleConfig cfg;
  auto data = generate_dataset(20000, cfg, 6);
  SplitSpec split = preset_split("primary");
  SplitPools pools = make_pools(data, split, 6);

  TaskSampler sampler(pools.train, split, TaskPhase::kTrain, pools.scaler);
  CHECK(sampler.support_available() > 0);
  CHECK(sampler.query_available() > 0);

  Rng r1(9), r2(9);
  Task a = sampler.draw(64, 32, r1, 1);
  Task b = sample_task(pools.train, split, TaskPhase::kTrain, 64, 32,
                       pools.scaler, r2, 1);
  REQUIRE(a.support.size() == b.support.size());
  for (std::size_t i = 0; i < a.support.size(); ++i) {
    CHECK(a.support[i].x == b.support[i].x);
  }
  for (std::size_t i = 0; i < a.query.size(); ++i) {
    CHECK(a.query[i].x == b.query[i].x);
  }

  // A second draw from the same sampler matches a fresh sampler given the
  // same rng state: draws must not disturb the index pools.
  Rng r3(9), r4(9);
  Task c1 = sampler.draw(64, 32, r3, 1);
  (void)c1;
  Task c2 = sampler.draw(64, 32, r3, 2);
  TaskSampler fresh(pools.train, split, TaskPhase::kTrain, pools.scaler);
  Task d1 = fresh.draw(64, 32, r4, 1);
  (void)d1;
  Task d2 = fresh.draw(64, 32, r4, 2);
  for (std::size_t i = 0; i < c2.support.size(); ++i) {
    CHECK(c2.support[i].x == d2.support[i].x);
  }

  // Distinct draws should not repeat the exact same support set.
  Rng r5(10);
  Task e1 = sampler.draw(64, 32, r5, 1);
  Task e2 = sampler.draw(64, 32, r5, 2);
  bool any_diff = false;
  for (std::size_t i = 0; i < e1.support.size(); ++i) {
    if (e1.support[i].x != e2.support[i].x) any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("task sampling rejects impossible requests") {
  OracleConfig cfg;
  auto data = generate_dataset(300, cfg, 8);
  SplitSpec split = preset_split("primary");
  SplitPools pools = make_pools(data, split, 8);

  Rng rng(1);
  CHECK_THROWS_WITH_AS(sample_task(pools.train, split, TaskPhase::kTrain, 0,
                                   16, pools.scaler, rng),
                       doctest::Contains(">= 1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(sample_task(pools.train, split, TaskPhase::kTrain, 16,
                                   0, pools.scaler, rng),
                       doctest::Contains(">= 1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      sample_task(pools.train, split, TaskPhase::kTrain, 1000000, 16,
                  pools.scaler, rng),
      doctest::Contains("support region"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      sample_task(pools.train, split, TaskPhase::kTrain, 16, 1000000,
                  pools.scaler, rng),
      doctest::Contains("query region"), std::invalid_argument);

  // Pools with no eval data at all cannot build eval tasks.
  std::vector<Sample> train_only;
  for (const auto& s : data) {
    if (intervals_contain(split.train_support, s.x.freq_ghz)) {
      train_only.push_back(s);
    }
  }
  Rng rng2(1);
  CHECK_THROWS_AS(sample_task(train_only, split, TaskPhase::kEval, 4, 4,
                              pools.scaler, rng2),
                  std::invalid_argument);
}

TEST_CASE("make_pools rejects datasets that empty a pool") {
  SplitSpec split = preset_split("primary");
  OracleConfig cfg;
  auto data = generate_dataset(200, cfg, 3);
  std::vector<Sample> eval_only;
  for (const auto& s : data) {
    if (s.x.freq_ghz >= 19.0) eval_only.push_back(s);
  }
  CHECK_THROWS_WITH_AS(make_pools(eval_only, split, 1),
                       doctest::Contains("train pool"),
                       std::invalid_argument);

  std::vector<Sample> train_only;
  for (const auto& s : data) {
    if (s.x.freq_ghz < 19.0) train_only.push_back(s);
  }
  CHECK_THROWS_WITH_AS(make_pools(train_only, split, 1),
                       doctest::Contains("eval pool"),
                       std::invalid_argument);
}
