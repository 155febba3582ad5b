#include "metafap/metatrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "metafap/common.hpp"

namespace metafap {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Stream tags keep the task-sampling rngs for training, validation and
// test decoupled from each other and from the dropout streams.
constexpr std::uint64_t kTrainStream = 0x6d742d747261696eULL;
constexpr std::uint64_t kValStream = 0x6d742d76616c0000ULL;
constexpr std::uint64_t kTestStream = 0x6d742d7465737400ULL;

// Task id ranges; train ids are epoch * tasks_per_epoch + i and stay far
// below these.
constexpr std::uint64_t kValTaskIdBase = 1ULL << 62;
constexpr std::uint64_t kTestTaskIdBase = (1ULL << 62) + (1ULL << 61);

}  // namespace

std::string to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::kCosine:
      return "cosine";
    case ScheduleKind::kStep:
      return "step";
    case ScheduleKind::kConstant:
      return "constant";
  }
  throw std::invalid_argument("to_string: bad ScheduleKind");
}

ScheduleKind schedule_from_string(const std::string& s) {
  if (s == "cosine") return ScheduleKind::kCosine;
  if (s == "step") return ScheduleKind::kStep;
  if (s == "constant") return ScheduleKind::kConstant;
  throw std::invalid_argument("schedule_from_string: unknown schedule '" + s +
                              "' (expected cosine, step or constant)");
}

double lr_schedule(int epoch, int total_epochs, double base,
                   ScheduleKind kind) {
  if (total_epochs < 1) {
    throw std::invalid_argument("lr_schedule: total_epochs must be >= 1, got " +
                                std::to_string(total_epochs));
  }
  if (epoch < 0 || epoch >= total_epochs) {
    throw std::invalid_argument("lr_schedule: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(total_epochs) +
                                ")");
  }
  if (!(base > 0.0) || !std::isfinite(base)) {
    throw std::invalid_argument("lr_schedule: base must be positive");
  }
  if (kind == ScheduleKind::kConstant || total_epochs == 1) return base;
  const double frac =
      static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  switch (kind) {
    case ScheduleKind::kCosine:
      return base * (0.1 + 0.9 * (1.0 + std::cos(kPi * frac)) / 2.0);
    case ScheduleKind::kStep:
      if (frac < 0.25) return base;
      if (frac < 0.5) return base * 0.5;
      if (frac < 0.75) return base * 0.25;
      return base * 0.1;
    case ScheduleKind::kConstant:
      return base;
  }
  throw std::invalid_argument("lr_schedule: bad ScheduleKind");
}

void AdaBeliefConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0)) {
    throw std::invalid_argument("AdaBeliefConfig: beta1 must lie in [0,1), got " +
                                format_double(beta1));
  }
  if (!(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("AdaBeliefConfig: beta2 must lie in [0,1), got " +
                                format_double(beta2));
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("AdaBeliefConfig: epsilon must be positive");
  }
}

void adabelief_update(std::vector<double>& params,
                      const std::vector<double>& grad, AdaBeliefState& state,
                      const AdaBeliefConfig& cfg, double lr) {
  cfg.validate();
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("adabelief_update: lr must be non-negative");
  }
  const std::size_t n = params.size();
  if (grad.size() != n) {
    throw std::invalid_argument("adabelief_update: gradient size " +
                                std::to_string(grad.size()) +
                                " does not match parameter size " +
                                std::to_string(n));
  }
  if (state.m.empty() && state.s.empty() && state.t == 0) {
    state.m.assign(n, 0.0);
    state.s.assign(n, 0.0);
  }
  if (state.m.size() != n || state.s.size() != n) {
    throw std::invalid_argument("adabelief_update: state size mismatch");
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    const double diff = g - state.m[i];
    state.s[i] =
        cfg.beta2 * state.s[i] + (1.0 - cfg.beta2) * diff * diff + cfg.epsilon;
    const double m_hat = state.m[i] / bc1;
    const double s_hat = state.s[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(s_hat) + cfg.epsilon);
  }
}

void sgd_step(std::vector<double>& params, const std::vector<double>& grad,
              double lr) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("sgd_step: gradient size " +
                                std::to_string(grad.size()) +
                                " does not match parameter size " +
                                std::to_string(params.size()));
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("sgd_step: lr must be non-negative");
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
}

void MetaConfig::validate() const {
  if (!(inner_lr > 0.0) || !std::isfinite(inner_lr)) {
    throw std::invalid_argument("MetaConfig: inner_lr must be positive, got " +
                                format_double(inner_lr));
  }
  if (!(outer_lr > 0.0) || !std::isfinite(outer_lr)) {
    throw std::invalid_argument("MetaConfig: outer_lr must be positive, got " +
                                format_double(outer_lr));
  }
  if (inner_steps < 1) {
    throw std::invalid_argument("MetaConfig: inner_steps must be >= 1, got " +
                                std::to_string(inner_steps));
  }
  if (tasks_per_epoch < 1) {
    throw std::invalid_argument("MetaConfig: tasks_per_epoch must be >= 1, got " +
                                std::to_string(tasks_per_epoch));
  }
  if (n_support < 2) {
    throw std::invalid_argument("MetaConfig: n_support must be >= 2, got " +
                                std::to_string(n_support));
  }
  if (n_query < 2) {
    throw std::invalid_argument("MetaConfig: n_query must be >= 2, got " +
                                std::to_string(n_query));
  }
  if (epochs < 1) {
    throw std::invalid_argument("MetaConfig: epochs must be >= 1, got " +
                                std::to_string(epochs));
  }
  adabelief.validate();
  loss.validate();
}

ModelParams inner_adapt(const ModelParams& p,
                        const std::vector<ScaledSample>& support, int steps,
                        double lr, const LossConfig& loss_cfg) {
  GradWorkspace ws;
  return inner_adapt(p, support, steps, lr, loss_cfg, ws);
}

ModelParams inner_adapt(const ModelParams& p,
                        const std::vector<ScaledSample>& support, int steps,
                        double lr, const LossConfig& loss_cfg,
                        GradWorkspace& ws) {
  if (support.empty()) {
    throw std::invalid_argument("inner_adapt: support set is empty");
  }
  if (steps < 0) {
    throw std::invalid_argument("inner_adapt: steps must be >= 0, got " +
                                std::to_string(steps));
  }
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("inner_adapt: lr must be non-negative");
  }
  ModelParams out = p;
  for (int s = 0; s < steps; ++s) {
    try {
      loss_and_grad(out, support, loss_cfg, Mode::kEval, nullptr, ws);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("inner_adapt: diverged at step " +
                               std::to_string(s) + ": " + e.what());
    }
    sgd_step(out.values, ws.grad, lr);
  }
  return out;
}

TaskGrad fomaml_task_gradient(const ModelParams& p, const Task& task,
                              const MetaConfig& cfg, double inner_lr,
                              GradWorkspace& ws) {
  ModelParams adapted =
      inner_adapt(p, task.support, cfg.inner_steps, inner_lr, cfg.loss, ws);
  TaskGrad out;
  out.support_loss = batch_loss(adapted, task.support, cfg.loss);
  // The query pass trains through dropout; the stream is keyed by task id
  // so results are independent of evaluation order.
  Rng rng(mix_seed(cfg.seed, task.id));
  out.query_loss =
      loss_and_grad(adapted, task.query, cfg.loss, Mode::kTrain, &rng, ws);
  out.grad = ws.grad;
  return out;
}

EpochStats meta_step(ModelParams& p, const std::vector<Task>& tasks,
                     const MetaConfig& cfg, AdaBeliefState& state,
                     double inner_lr, double outer_lr) {
  if (tasks.empty()) {
    throw std::invalid_argument("meta_step: task list is empty");
  }
  const std::size_t n_tasks = tasks.size();
  std::vector<TaskGrad> grads(n_tasks);
  int slots = worker_count();
  if (slots > static_cast<int>(n_tasks)) slots = static_cast<int>(n_tasks);
  if (slots < 1) slots = 1;
  std::vector<GradWorkspace> workspaces(static_cast<std::size_t>(slots));
  parallel_for(n_tasks, [&](std::size_t i, int slot) {
    try {
      grads[i] = fomaml_task_gradient(p, tasks[i], cfg, inner_lr,
                                      workspaces[static_cast<std::size_t>(slot)]);
    } catch (const std::runtime_error& e) {
      throw std::runtime_error("meta_step: task " + std::to_string(tasks[i].id) +
                               " failed: " + e.what());
    }
  });

  // Reduce in task id order so the averaged gradient does not depend on
  // the position of tasks in the list or on scheduling.
  std::vector<std::size_t> order(n_tasks);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return tasks[a].id < tasks[b].id;
  });

  EpochStats stats;
  stats.mean_grad.assign(p.values.size(), 0.0);
  for (std::size_t k : order) {
    const TaskGrad& tg = grads[k];
    stats.mean_support_loss += tg.support_loss;
    stats.mean_query_loss += tg.query_loss;
    for (std::size_t j = 0; j < stats.mean_grad.size(); ++j) {
      stats.mean_grad[j] += tg.grad[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(n_tasks);
  stats.mean_support_loss *= inv;
  stats.mean_query_loss *= inv;
  for (double& g : stats.mean_grad) g *= inv;

  adabelief_update(p.values, stats.mean_grad, state, cfg.adabelief, outer_lr);
  return stats;
}

namespace {

struct TaskScore {
  double query_loss = 0.0;
  Metrics metrics;
  std::size_t n_query = 0;
};

// Adapt on the task's support at deployment settings and score its query.
TaskScore score_task(const ModelParams& p, const Task& task,
                     const MetaConfig& cfg, GradWorkspace& ws) {
  ModelParams adapted =
      inner_adapt(p, task.support, cfg.inner_steps, cfg.inner_lr, cfg.loss, ws);
  TaskScore out;
  out.n_query = task.query.size();
  out.query_loss = batch_loss(adapted, task.query, cfg.loss);
  std::vector<Triple> preds = predict_batch(adapted, task.query);
  std::vector<Triple> targets(task.query.size());
  for (std::size_t i = 0; i < task.query.size(); ++i) {
    targets[i] = task.query[i].y;
  }
  out.metrics = compute_metrics(preds, targets);
  return out;
}

}  // namespace

EvalResult meta_evaluate(const ModelParams& p, const SplitPools& pools,
                         const MetaConfig& cfg, std::size_t n_tasks,
                         std::size_t n_support_override) {
  if (n_tasks == 0) {
    throw std::invalid_argument("meta_evaluate: n_tasks must be >= 1");
  }
  const std::size_t n_support = n_support_override != 0
                                    ? n_support_override
                                    : static_cast<std::size_t>(cfg.n_support);
  TaskSampler sampler(pools.test, pools.split, TaskPhase::kEval, pools.scaler);
  Rng rng(mix_seed(cfg.seed, kTestStream));
  GradWorkspace ws;
  EvalResult out;
  out.per_task.reserve(n_tasks);
  double wsum = 0.0, mse_sum = 0.0, mae_sum = 0.0, cc_sum = 0.0;
  for (std::size_t t = 0; t < n_tasks; ++t) {
    Task task = sampler.draw(n_support, static_cast<std::size_t>(cfg.n_query),
                             rng, kTestTaskIdBase + t);
    TaskScore score = score_task(p, task, cfg, ws);
    out.per_task.push_back(
        {task.id, score.query_loss, score.n_query, score.metrics});
    const double w = static_cast<double>(score.n_query);
    wsum += w;
    mse_sum += w * score.metrics.mse;
    mae_sum += w * score.metrics.mae;
    cc_sum += w * score.metrics.cc;
  }
  out.overall.mse = mse_sum / wsum;
  out.overall.mae = mae_sum / wsum;
  out.overall.cc = cc_sum / wsum;
  return out;
}

MetaTrainResult meta_train(const SplitPools& pools, const MetaConfig& cfg,
                           const Architecture& arch,
                           const EpochCallback& on_epoch) {
  cfg.validate();
  arch.validate();
  const auto t_start = std::chrono::steady_clock::now();

  ModelParams p = init_params(arch, cfg.seed);
  TaskSampler train_sampler(pools.train, pools.split, TaskPhase::kTrain,
                            pools.scaler);
  TaskSampler val_sampler(pools.val, pools.split, TaskPhase::kEval,
                          pools.scaler);

  const auto n_support = static_cast<std::size_t>(cfg.n_support);
  const auto n_query = static_cast<std::size_t>(cfg.n_query);

  // Validation tasks are drawn once and reused so the selection signal is
  // comparable across epochs.
  Rng val_rng(mix_seed(cfg.seed, kValStream));
  std::vector<Task> val_tasks;
  val_tasks.reserve(kValidationTasks);
  for (std::size_t i = 0; i < kValidationTasks; ++i) {
    val_tasks.push_back(
        val_sampler.draw(n_support, n_query, val_rng, kValTaskIdBase + i));
  }

  Rng train_rng(mix_seed(cfg.seed, kTrainStream));
  AdaBeliefState state;
  TrainReport report;
  report.rows.reserve(static_cast<std::size_t>(cfg.epochs));
  std::vector<double> best_values;
  double best_val = std::numeric_limits<double>::infinity();
  int best_epoch = -1;
  GradWorkspace val_ws;
  std::vector<Task> tasks(static_cast<std::size_t>(cfg.tasks_per_epoch));

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double inner =
        lr_schedule(epoch, cfg.epochs, cfg.inner_lr, cfg.lr_schedule);
    const double outer =
        lr_schedule(epoch, cfg.epochs, cfg.outer_lr, cfg.lr_schedule);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      const std::uint64_t id =
          static_cast<std::uint64_t>(epoch) *
              static_cast<std::uint64_t>(cfg.tasks_per_epoch) +
          i;
      tasks[i] = train_sampler.draw(n_support, n_query, train_rng, id);
    }
    EpochStats stats = meta_step(p, tasks, cfg, state, inner, outer);

    // Validation uses deployment adaptation: base inner rate, full steps.
    double val_loss = 0.0;
    Metrics val_metrics;
    for (const Task& vt : val_tasks) {
      TaskScore score = score_task(p, vt, cfg, val_ws);
      val_loss += score.query_loss;
      val_metrics.mse += score.metrics.mse;
      val_metrics.mae += score.metrics.mae;
      val_metrics.cc += score.metrics.cc;
    }
    const double inv = 1.0 / static_cast<double>(val_tasks.size());
    val_loss *= inv;
    val_metrics.mse *= inv;
    val_metrics.mae *= inv;
    val_metrics.cc *= inv;

    EpochRow row;
    row.epoch = epoch;
    row.train_support_loss = stats.mean_support_loss;
    row.train_query_loss = stats.mean_query_loss;
    row.val_loss = val_loss;
    row.val = val_metrics;
    row.inner_lr = inner;
    row.outer_lr = outer;
    report.rows.push_back(row);
    if (on_epoch) on_epoch(row);

    if (val_loss < best_val) {
      best_val = val_loss;
      best_epoch = epoch;
      best_values = p.values;
    }
  }

  report.best_epoch = best_epoch;
  report.best_val_loss = best_val;

  ModelParams best_params{arch, best_values};
  EvalResult test = meta_evaluate(best_params, pools, cfg, kTestTasks, 0);
  report.test = test.overall;
  report.train_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();

  MetaTrainResult out;
  out.checkpoint.format_version = kCheckpointFormatVersion;
  out.checkpoint.arch = arch;
  out.checkpoint.scaler = pools.scaler;
  out.checkpoint.params = std::move(best_values);
  out.checkpoint.meta.seed = cfg.seed;
  out.checkpoint.meta.split = pools.split.name;
  out.checkpoint.meta.best_epoch = best_epoch;
  out.checkpoint.meta.best_val_loss = best_val;
  out.checkpoint.meta.epochs = cfg.epochs;
  out.report = std::move(report);
  return out;
}

std::string train_report_to_json(const TrainReport& r) {
  JsonWriter w;
  w.begin_object();
  w.key("epochs");
  w.begin_array();
  for (const EpochRow& row : r.rows) {
    w.begin_object();
    w.key("epoch").value(row.epoch);
    w.key("train_support_loss").value(row.train_support_loss);
    w.key("train_query_loss").value(row.train_query_loss);
    w.key("val_loss").value(row.val_loss);
    w.key("val_mse").value(row.val.mse);
    w.key("val_mae").value(row.val.mae);
    w.key("val_cc_percent").value(100.0 * row.val.cc);
    w.key("inner_lr").value(row.inner_lr);
    w.key("outer_lr").value(row.outer_lr);
    w.end_object();
  }
  w.end_array();
  w.key("best_epoch").value(r.best_epoch);
  w.key("best_val_loss").value(r.best_val_loss);
  w.key("test").raw(metrics_to_json(r.test));
  w.end_object();
  return w.str();
}

std::string train_report_to_csv(const TrainReport& r) {
  std::string out = "epoch,train_loss,val_mse,val_mae,val_cc,inner_lr,outer_lr\n";
  for (const EpochRow& row : r.rows) {
    out += std::to_string(row.epoch);
    out += ',';
    out += format_double17(row.train_query_loss);
    out += ',';
    out += format_double17(row.val.mse);
    out += ',';
    out += format_double17(row.val.mae);
    out += ',';
    out += format_double17(100.0 * row.val.cc);
    out += ',';
    out += format_double17(row.inner_lr);
    out += ',';
    out += format_double17(row.outer_lr);
    out += '\n';
  }
  return out;
}

}  // namespace metafap
