#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metafap/checkpoint.hpp"
#include "metafap/data.hpp"
#include "metafap/metatrain.hpp"
#include "metafap/net.hpp"
#include "metafap/objective.hpp"

namespace metafap {

enum class BaselineKind { kPlainDnn, kKnn };

std::string to_string(BaselineKind k);
BaselineKind baseline_from_string(const std::string& s);

struct BaselineConfig {
  BaselineKind kind = BaselineKind::kPlainDnn;
  int epochs = 200;
  double lr = 0.0003;
  int k = 5;          // neighbor count for the k-NN regressor
  int batch = 256;    // minibatch size for plain supervised training
  ScheduleKind lr_schedule = ScheduleKind::kCosine;
  AdaBeliefConfig adabelief;
  std::uint64_t seed = 0;
  LossConfig loss;

  void validate() const;
};

struct PlainEpochRow {
  int epoch = 0;
  double train_loss = 0.0;
  double lr = 0.0;
};

struct PlainTrainResult {
  Checkpoint checkpoint;
  std::vector<PlainEpochRow> rows;
  double train_seconds = 0.0;
};

// Conventional supervised training of the same architecture on the whole
// train pool: shuffled minibatches, AdaBelief, the same loss, dropout
// active. epochs == 0 returns the initialization unchanged.
PlainTrainResult train_plain(const SplitPools& pools, const BaselineConfig& cfg,
                             const Architecture& arch);

std::string plain_rows_to_csv(const std::vector<PlainEpochRow>& rows);

// Samples whose excitation frequency lies within the given intervals.
std::vector<Sample> filter_by_freq(const std::vector<Sample>& samples,
                                   const std::vector<Interval>& intervals);

// Direct-prediction metrics with no adaptation.
Metrics zero_shot_metrics(const ModelParams& p, const Scaler& scaler,
                          const std::vector<Sample>& samples);

// Mean of the labels of the k nearest training samples in scaled-feature
// Euclidean distance; distance ties break toward the lower sample index.
ResponseTriple knn_predict(const std::vector<Sample>& train,
                           const Scaler& scaler, const DesignVector& x, int k);

Metrics knn_metrics(const std::vector<Sample>& train, const Scaler& scaler,
                    const std::vector<Sample>& eval_set, int k);

}  // namespace metafap
