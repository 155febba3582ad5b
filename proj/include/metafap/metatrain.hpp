#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "metafap/checkpoint.hpp"
#include "metafap/data.hpp"
#include "metafap/net.hpp"
#include "metafap/objective.hpp"

namespace metafap {

enum class ScheduleKind { kCosine, kStep, kConstant };

std::string to_string(ScheduleKind k);
ScheduleKind schedule_from_string(const std::string& s);

// Per-epoch learning rate. Cosine decays from base to 0.1 * base across
// the horizon; step uses quarter-horizon plateaus {1, 0.5, 0.25, 0.1};
// constant stays at base. All kinds are monotone non-increasing.
double lr_schedule(int epoch, int total_epochs, double base,
                   ScheduleKind kind);

struct AdaBeliefConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

struct AdaBeliefState {
  std::vector<double> m;  // first moment
  std::vector<double> s;  // belief (centered second moment)
  std::int64_t t = 0;
};

// One AdaBelief step with bias correction; state grows lazily on first use.
void adabelief_update(std::vector<double>& params,
                      const std::vector<double>& grad, AdaBeliefState& state,
                      const AdaBeliefConfig& cfg, double lr);

// params -= lr * grad, elementwise.
void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              double lr);

struct MetaConfig {
  double inner_lr = 0.0005;
  double outer_lr = 0.0003;
  int inner_steps = 5;
  int tasks_per_epoch = 64;
  int n_support = 512;
  int n_query = 256;
  int epochs = 100;
  ScheduleKind lr_schedule = ScheduleKind::kCosine;
  AdaBeliefConfig adabelief;
  std::uint64_t seed = 0;
  std::string split = "primary";
  LossConfig loss;

  void validate() const;
};

// Number of validation tasks scored after each epoch and of test tasks
// scored by meta_evaluate.
inline constexpr std::size_t kValidationTasks = 8;
inline constexpr std::size_t kTestTasks = 16;

// Full-batch SGD on the support set; dropout disabled. steps == 0 returns
// the input unchanged (useful in tests). Divergence raises a runtime
// error naming the failing step.
ModelParams inner_adapt(const ModelParams& p,
                        const std::vector<ScaledSample>& support, int steps,
                        double lr, const LossConfig& loss_cfg);
ModelParams inner_adapt(const ModelParams& p,
                        const std::vector<ScaledSample>& support, int steps,
                        double lr, const LossConfig& loss_cfg,
                        GradWorkspace& ws);

struct TaskGrad {
  std::vector<double> grad;       // query gradient at the adapted params
  double support_loss = 0.0;      // support loss after adaptation, eval mode
  double query_loss = 0.0;        // query loss at the adapted params
};

// First-order meta-gradient of one task: adapt on support, then take the
// query-set gradient at the adapted parameters. The query forward runs in
// train mode with a dropout stream keyed by (cfg.seed, task.id).
TaskGrad fomaml_task_gradient(const ModelParams& p, const Task& task,
                              const MetaConfig& cfg, double inner_lr,
                              GradWorkspace& ws);

struct EpochStats {
  double mean_support_loss = 0.0;
  double mean_query_loss = 0.0;
  std::vector<double> mean_grad;  // the averaged meta-gradient applied
};

// One outer update: average the per-task meta-gradients (reduced in task
// id order, so task order does not matter) and apply a single AdaBelief
// step with outer_lr.
EpochStats meta_step(ModelParams& p, const std::vector<Task>& tasks,
                     const MetaConfig& cfg, AdaBeliefState& state,
                     double inner_lr, double outer_lr);

struct EpochRow {
  int epoch = 0;
  double train_support_loss = 0.0;
  double train_query_loss = 0.0;
  double val_loss = 0.0;
  Metrics val;
  double inner_lr = 0.0;
  double outer_lr = 0.0;
};

struct TrainReport {
  std::vector<EpochRow> rows;
  int best_epoch = -1;
  double best_val_loss = 0.0;
  Metrics test;
  // Wall-clock timing; reported through the run manifest rather than the
  // serialized report so identical runs produce identical report files.
  double train_seconds = 0.0;
};

// Deterministic report serializations (timings excluded).
std::string train_report_to_json(const TrainReport& r);
std::string train_report_to_csv(const TrainReport& r);

struct TaskEval {
  std::uint64_t task_id = 0;
  double query_loss = 0.0;
  std::size_t n_query = 0;
  Metrics metrics;
};

struct EvalResult {
  Metrics overall;  // sample-weighted mean across tasks
  std::vector<TaskEval> per_task;
};

// Episodic evaluation on the test pool: adapt on eval-support samples,
// score on eval-query samples. n_support_override of 0 keeps
// cfg.n_support. Uses cfg.inner_lr and cfg.inner_steps for adaptation.
EvalResult meta_evaluate(const ModelParams& p, const SplitPools& pools,
                         const MetaConfig& cfg,
                         std::size_t n_tasks = kTestTasks,
                         std::size_t n_support_override = 0);

struct MetaTrainResult {
  Checkpoint checkpoint;  // parameters of the best validation epoch
  TrainReport report;
};

using EpochCallback = std::function<void(const EpochRow&)>;

// Full training loop: per epoch, one meta_step over freshly sampled
// training tasks, then adaptation-based scoring on a fixed set of
// validation tasks; keeps the parameters of the best validation epoch and
// finishes with meta_evaluate on the test pool.
MetaTrainResult meta_train(const SplitPools& pools, const MetaConfig& cfg,
                           const Architecture& arch,
                           const EpochCallback& on_epoch = nullptr);

}  // namespace metafap
