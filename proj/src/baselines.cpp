#include "metafap/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "metafap/common.hpp"

namespace metafap {

namespace {

constexpr std::uint64_t kShuffleStream = 0x706c61696e2d7368ULL;
constexpr std::uint64_t kDropoutStream = 0x706c61696e2d6472ULL;

}  // namespace

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::kPlainDnn:
      return "plain_dnn";
    case BaselineKind::kKnn:
      return "knn";
  }
  throw std::invalid_argument("to_string: bad BaselineKind");
}

BaselineKind baseline_from_string(const std::string& s) {
  if (s == "plain_dnn") return BaselineKind::kPlainDnn;
  if (s == "knn") return BaselineKind::kKnn;
  throw std::invalid_argument("baseline_from_string: unknown baseline '" + s +
                              "' (expected plain_dnn or knn)");
}

void BaselineConfig::validate() const {
  if (epochs < 1) {
    throw std::invalid_argument("BaselineConfig: epochs must be >= 1, got " +
                                std::to_string(epochs));
  }
  if (!(lr > 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("BaselineConfig: lr must be positive, got " +
                                format_double(lr));
  }
  if (k < 1) {
    throw std::invalid_argument("BaselineConfig: k must be >= 1, got " +
                                std::to_string(k));
  }
  if (batch < 2) {
    throw std::invalid_argument("BaselineConfig: batch must be >= 2, got " +
                                std::to_string(batch));
  }
  adabelief.validate();
  loss.validate();
}

PlainTrainResult train_plain(const SplitPools& pools, const BaselineConfig& cfg,
                             const Architecture& arch) {
  if (cfg.epochs < 0) {
    throw std::invalid_argument("train_plain: epochs must be >= 0, got " +
                                std::to_string(cfg.epochs));
  }
  if (!(cfg.lr > 0.0) || !std::isfinite(cfg.lr)) {
    throw std::invalid_argument("train_plain: lr must be positive");
  }
  if (cfg.batch < 2) {
    throw std::invalid_argument("train_plain: batch must be >= 2, got " +
                                std::to_string(cfg.batch));
  }
  cfg.adabelief.validate();
  cfg.loss.validate();
  arch.validate();
  if (pools.train.empty()) {
    throw std::invalid_argument("train_plain: train pool is empty");
  }
  const auto t_start = std::chrono::steady_clock::now();

  ModelParams p = init_params(arch, cfg.seed);
  std::vector<ScaledSample> data(pools.train.size());
  for (std::size_t i = 0; i < pools.train.size(); ++i) {
    data[i].x = pools.scaler.transform(design_features(pools.train[i].x));
    data[i].y = {pools.train[i].y.transmittance, pools.train[i].y.reflectance,
                 pools.train[i].y.absorbance};
  }

  Rng shuffle_rng(mix_seed(cfg.seed, kShuffleStream));
  AdaBeliefState state;
  GradWorkspace ws;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<ScaledSample> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch));

  PlainTrainResult out;
  out.rows.reserve(static_cast<std::size_t>(cfg.epochs));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, std::max(cfg.epochs, 1), cfg.lr,
                                  cfg.lr_schedule);
    shuffle_rng.shuffle(order);
    Rng drop_rng(mix_seed(cfg.seed, kDropoutStream,
                          static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch));
      // A trailing singleton cannot carry the correlation term; skip it.
      if (end - start < 2) break;
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(data[order[i]]);
      double loss;
      try {
        loss = loss_and_grad(p, batch, cfg.loss, Mode::kTrain, &drop_rng, ws);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_plain: diverged at epoch " +
                                 std::to_string(epoch) + ": " + e.what());
      }
      adabelief_update(p.values, ws.grad, state, cfg.adabelief, lr);
      loss_sum += loss;
      ++batches;
    }
    PlainEpochRow row;
    row.epoch = epoch;
    row.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    row.lr = lr;
    out.rows.push_back(row);
  }

  out.checkpoint.format_version = kCheckpointFormatVersion;
  out.checkpoint.arch = arch;
  out.checkpoint.scaler = pools.scaler;
  out.checkpoint.params = std::move(p.values);
  out.checkpoint.meta.seed = cfg.seed;
  out.checkpoint.meta.split = pools.split.name;
  out.checkpoint.meta.best_epoch = cfg.epochs - 1;
  out.checkpoint.meta.best_val_loss =
      out.rows.empty() ? 0.0 : out.rows.back().train_loss;
  out.checkpoint.meta.epochs = cfg.epochs;
  out.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

std::string plain_rows_to_csv(const std::vector<PlainEpochRow>& rows) {
  std::string out = "epoch,train_loss,lr\n";
  for (const PlainEpochRow& row : rows) {
    out += std::to_string(row.epoch);
    out += ',';
    out += format_double17(row.train_loss);
    out += ',';
    out += format_double17(row.lr);
    out += '\n';
  }
  return out;
}

std::vector<Sample> filter_by_freq(const std::vector<Sample>& samples,
                                   const std::vector<Interval>& intervals) {
  std::vector<Sample> out;
  for (const Sample& s : samples) {
    if (intervals_contain(intervals, s.x.freq_ghz)) out.push_back(s);
  }
  return out;
}

Metrics zero_shot_metrics(const ModelParams& p, const Scaler& scaler,
                          const std::vector<Sample>& samples) {
  if (samples.empty()) {
    throw std::invalid_argument("zero_shot_metrics: sample set is empty");
  }
  std::vector<std::array<double, 8>> xs(samples.size());
  std::vector<Triple> targets(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    xs[i] = scaler.transform(design_features(samples[i].x));
    targets[i] = {samples[i].y.transmittance, samples[i].y.reflectance,
                  samples[i].y.absorbance};
  }
  std::vector<Triple> preds = predict_batch(p, xs);
  return compute_metrics(preds, targets);
}

ResponseTriple knn_predict(const std::vector<Sample>& train,
                           const Scaler& scaler, const DesignVector& x, int k) {
  if (train.empty()) {
    throw std::invalid_argument("knn_predict: training set is empty");
  }
  if (k < 1) {
    throw std::invalid_argument("knn_predict: k must be >= 1, got " +
                                std::to_string(k));
  }
  if (static_cast<std::size_t>(k) > train.size()) {
    throw std::invalid_argument(
        "knn_predict: k = " + std::to_string(k) + " exceeds training size " +
        std::to_string(train.size()));
  }
  const std::array<double, 8> q = scaler.transform(design_features(x));
  std::vector<std::pair<double, std::size_t>> dist(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::array<double, 8> f =
        scaler.transform(design_features(train[i].x));
    double d2 = 0.0;
    for (std::size_t j = 0; j < 8; ++j) {
      const double diff = f[j] - q[j];
      d2 += diff * diff;
    }
    dist[i] = {d2, i};
  }
  const auto kth = dist.begin() + (k - 1);
  std::nth_element(dist.begin(), kth, dist.end());
  std::sort(dist.begin(), kth + 1);
  double t = 0.0, r = 0.0, a = 0.0;
  for (int i = 0; i < k; ++i) {
    const Sample& s = train[dist[static_cast<std::size_t>(i)].second];
    t += s.y.transmittance;
    r += s.y.reflectance;
    a += s.y.absorbance;
  }
  const double inv = 1.0 / static_cast<double>(k);
  ResponseTriple out;
  out.transmittance = t * inv;
  out.reflectance = r * inv;
  out.absorbance = a * inv;
  return out;
}

Metrics knn_metrics(const std::vector<Sample>& train, const Scaler& scaler,
                    const std::vector<Sample>& eval_set, int k) {
  if (eval_set.empty()) {
    throw std::invalid_argument("knn_metrics: evaluation set is empty");
  }
  std::vector<Triple> preds(eval_set.size());
  std::vector<Triple> targets(eval_set.size());
  parallel_for(eval_set.size(), [&](std::size_t i, int) {
    const ResponseTriple y = knn_predict(train, scaler, eval_set[i].x, k);
    preds[i] = {y.transmittance, y.reflectance, y.absorbance};
    targets[i] = {eval_set[i].y.transmittance, eval_set[i].y.reflectance,
                  eval_set[i].y.absorbance};
  });
  return compute_metrics(preds, targets);
}

}  // namespace metafap
