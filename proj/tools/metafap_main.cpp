#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "metafap/baselines.hpp"
#include "metafap/checkpoint.hpp"
#include "metafap/common.hpp"
#include "metafap/data.hpp"
#include "metafap/metatrain.hpp"
#include "metafap/net.hpp"
#include "metafap/objective.hpp"
#include "metafap/oracle.hpp"

namespace {

using namespace metafap;

constexpr int kExitUsage = 2;
constexpr int kExitValidation = 3;
constexpr int kExitRuntime = 4;

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  std::string config_json = "{}";
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings;
};

void write_manifest(const std::string& dir, const Manifest& m) {
  JsonWriter w;
  w.begin_object();
  w.key("command").value(m.command);
  w.key("seed").value(m.seed);
  w.key("config").raw(m.config_json);
  w.key("inputs").begin_array();
  for (const std::string& path : m.inputs) {
    w.begin_object();
    w.key("path").value(path);
    w.key("fnv1a64").value(hash_hex(fnv1a64_file(path)));
    w.end_object();
  }
  w.end_array();
  w.key("outputs").begin_array();
  for (const std::string& path : m.outputs) {
    w.begin_object();
    w.key("path").value(path);
    w.key("fnv1a64").value(hash_hex(fnv1a64_file(path)));
    w.end_object();
  }
  w.end_array();
  w.key("timings").begin_object();
  for (const auto& [name, sec] : m.timings) w.key(name).value(sec);
  w.end_object();
  w.end_object();
  write_text_file(dir + "/manifest.json", w.str());
}

std::string ensure_out_dir(const std::string& out) {
  if (out.empty()) throw std::invalid_argument("--out must not be empty");
  std::filesystem::create_directories(out);
  return out;
}

std::string oracle_config_to_json(const OracleConfig& c) {
  JsonWriter w;
  w.begin_object();
  w.key("wavelength_mm").value(c.wavelength_mm);
  w.key("substrate_er").value(c.substrate_er);
  w.key("substrate_tand").value(c.substrate_tand);
  w.key("substrate_thickness_mm").value(c.substrate_thickness_mm);
  w.key("bottom_l_ph").value(c.bottom_l_ph);
  w.key("bottom_r_ohm").value(c.bottom_r_ohm);
  w.key("coupling_kappa_spacing").value(c.coupling_kappa_spacing);
  w.key("coupling_kappa_array").value(c.coupling_kappa_array);
  w.key("polarization").value(to_string(c.polarization));
  w.key("lossless_override").value(c.lossless_override);
  w.end_object();
  return w.str();
}

std::string loss_config_to_json(const LossConfig& c) {
  JsonWriter w;
  w.begin_object();
  w.key("huber_delta").value(c.huber_delta);
  w.key("corr_weight").value(c.corr_weight);
  w.key("corr_degenerate_value").value(c.corr_degenerate_value);
  w.end_object();
  return w.str();
}

std::string adabelief_config_to_json(const AdaBeliefConfig& c) {
  JsonWriter w;
  w.begin_object();
  w.key("beta1").value(c.beta1);
  w.key("beta2").value(c.beta2);
  w.key("epsilon").value(c.epsilon);
  w.end_object();
  return w.str();
}

std::string meta_config_to_json(const MetaConfig& c) {
  JsonWriter w;
  w.begin_object();
  w.key("inner_lr").value(c.inner_lr);
  w.key("outer_lr").value(c.outer_lr);
  w.key("inner_steps").value(c.inner_steps);
  w.key("tasks_per_epoch").value(c.tasks_per_epoch);
  w.key("n_support").value(c.n_support);
  w.key("n_query").value(c.n_query);
  w.key("epochs").value(c.epochs);
  w.key("lr_schedule").value(to_string(c.lr_schedule));
  w.key("adabelief").raw(adabelief_config_to_json(c.adabelief));
  w.key("seed").value(c.seed);
  w.key("split").value(c.split);
  w.key("loss").raw(loss_config_to_json(c.loss));
  w.end_object();
  return w.str();
}

void require_keys(const nlohmann::json& j, const char* where,
                  const std::vector<std::string>& allowed) {
  for (const auto& item : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), item.key()) ==
        allowed.end()) {
      std::string msg = std::string(where) + ": unknown key '" + item.key() +
                        "' (allowed:";
      for (const std::string& k : allowed) msg += " " + k;
      msg += ")";
      throw std::invalid_argument(msg);
    }
  }
}

LossConfig parse_loss_config(const nlohmann::json& j) {
  require_keys(j, "config.loss",
               {"huber_delta", "corr_weight", "corr_degenerate_value"});
  LossConfig c;
  if (j.contains("huber_delta")) c.huber_delta = j.at("huber_delta").get<double>();
  if (j.contains("corr_weight")) c.corr_weight = j.at("corr_weight").get<double>();
  if (j.contains("corr_degenerate_value")) {
    c.corr_degenerate_value = j.at("corr_degenerate_value").get<double>();
  }
  return c;
}

AdaBeliefConfig parse_adabelief_config(const nlohmann::json& j) {
  require_keys(j, "config.adabelief", {"beta1", "beta2", "epsilon"});
  AdaBeliefConfig c;
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  return c;
}

MetaConfig parse_meta_config(const nlohmann::json& j) {
  require_keys(j, "config",
               {"inner_lr", "outer_lr", "inner_steps", "tasks_per_epoch",
                "n_support", "n_query", "epochs", "lr_schedule", "adabelief",
                "seed", "split", "loss"});
  MetaConfig c;
  if (j.contains("inner_lr")) c.inner_lr = j.at("inner_lr").get<double>();
  if (j.contains("outer_lr")) c.outer_lr = j.at("outer_lr").get<double>();
  if (j.contains("inner_steps")) c.inner_steps = j.at("inner_steps").get<int>();
  if (j.contains("tasks_per_epoch")) {
    c.tasks_per_epoch = j.at("tasks_per_epoch").get<int>();
  }
  if (j.contains("n_support")) c.n_support = j.at("n_support").get<int>();
  if (j.contains("n_query")) c.n_query = j.at("n_query").get<int>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("lr_schedule")) {
    c.lr_schedule = schedule_from_string(j.at("lr_schedule").get<std::string>());
  }
  if (j.contains("adabelief")) {
    c.adabelief = parse_adabelief_config(j.at("adabelief"));
  }
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("split")) c.split = j.at("split").get<std::string>();
  if (j.contains("loss")) c.loss = parse_loss_config(j.at("loss"));
  return c;
}

MetaConfig load_meta_config(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config file " + path +
                                " is not valid JSON: " + e.what());
  }
  try {
    return parse_meta_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("config file " + path + ": " + e.what());
  }
}

std::string metrics_row(const Metrics& m) {
  return "mse " + format_double(m.mse) + "  mae " + format_double(m.mae) +
         "  cc " + format_double(100.0 * m.cc) + "%";
}

std::string eval_result_to_json(const EvalResult& r, std::size_t n_support) {
  JsonWriter w;
  w.begin_object();
  w.key("n_support").value(static_cast<std::uint64_t>(n_support));
  w.key("overall").raw(metrics_to_json(r.overall));
  w.key("per_task").begin_array();
  for (const TaskEval& t : r.per_task) {
    w.begin_object();
    w.key("task_id").value(t.task_id);
    w.key("query_loss").value(t.query_loss);
    w.key("n_query").value(static_cast<std::uint64_t>(t.n_query));
    w.key("mse").value(t.metrics.mse);
    w.key("mae").value(t.metrics.mae);
    w.key("cc_percent").value(100.0 * t.metrics.cc);
    w.end_object();
  }
  w.end_array();
  w.end_object();
  return w.str();
}

Architecture ablation_variant(const std::string& name) {
  Architecture a;
  if (name == "complete") return a;
  if (name == "no_freq_branch") {
    a.use_freq_branch = false;
    return a;
  }
  if (name == "no_other_branch") {
    a.use_other_branch = false;
    return a;
  }
  throw std::invalid_argument("unknown ablation variant '" + name + "'");
}

// generate

struct GenerateArgs {
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t sweep_points = 0;
  OracleConfig oracle;
  std::string pol = "TE";
};

int cmd_generate(const GenerateArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  OracleConfig oracle = args.oracle;
  oracle.polarization = polarization_from_string(args.pol);
  oracle.validate();
  const std::string out = ensure_out_dir(args.out);
  std::cout << "generate: samples=" << args.samples << " seed=" << args.seed
            << " out=" << out << std::endl;

  std::vector<Sample> samples = generate_dataset(args.samples, oracle, args.seed);
  const std::string csv_path = out + "/dataset.csv";
  write_csv(csv_path, samples);

  Manifest m;
  m.command = "generate";
  m.seed = args.seed;
  {
    JsonWriter w;
    w.begin_object();
    w.key("samples").value(static_cast<std::uint64_t>(args.samples));
    w.key("sweep_points").value(static_cast<std::uint64_t>(args.sweep_points));
    w.key("oracle").raw(oracle_config_to_json(oracle));
    w.end_object();
    m.config_json = w.str();
  }
  m.outputs.push_back(csv_path);

  if (args.sweep_points > 0) {
    // Frequency sweep of the default design, plot-ready.
    std::string sweep = "freq_ghz,transmittance,reflectance,absorbance\n";
    const double low_len = domain::kFreqHi1 - domain::kFreqLo1;
    const double total_len = low_len + (domain::kFreqHi2 - domain::kFreqLo2);
    for (std::size_t i = 0; i < args.sweep_points; ++i) {
      const double u = args.sweep_points == 1
                           ? 0.0
                           : static_cast<double>(i) /
                                 static_cast<double>(args.sweep_points - 1);
      const double pos = u * total_len;
      const double f = pos <= low_len ? domain::kFreqLo1 + pos
                                      : domain::kFreqLo2 + (pos - low_len);
      DesignVector d;
      d.freq_ghz = f;
      const ResponseTriple y = unit_cell_response(d, oracle);
      sweep += format_double17(f);
      sweep += ',';
      sweep += format_double17(y.transmittance);
      sweep += ',';
      sweep += format_double17(y.reflectance);
      sweep += ',';
      sweep += format_double17(y.absorbance);
      sweep += '\n';
    }
    const std::string sweep_path = out + "/sweep.csv";
    write_text_file(sweep_path, sweep);
    m.outputs.push_back(sweep_path);
  }

  m.timings.emplace_back("total_seconds", seconds_since(t0));
  write_manifest(out, m);
  std::cout << "wrote " << csv_path << " (" << samples.size() << " rows)"
            << std::endl;
  return 0;
}

// train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string split;
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int epochs = 0;
  bool epochs_set = false;
  int progress_every = 10;
};

MetaConfig resolve_meta_config(const std::string& config_path,
                               const std::string& split, std::uint64_t seed,
                               bool seed_set, int epochs, bool epochs_set) {
  MetaConfig cfg;
  if (!config_path.empty()) cfg = load_meta_config(config_path);
  if (!split.empty()) cfg.split = split;
  if (seed_set) cfg.seed = seed;
  if (epochs_set) cfg.epochs = epochs;
  return cfg;
}

int cmd_train(const TrainArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  MetaConfig cfg = resolve_meta_config(args.config, args.split, args.seed,
                                       args.seed_set, args.epochs,
                                       args.epochs_set);
  cfg.validate();
  const SplitSpec split = preset_split(cfg.split);
  const std::string out = ensure_out_dir(args.out);
  std::cout << "train: split=" << split.name << " seed=" << cfg.seed
            << " epochs=" << cfg.epochs << " tasks_per_epoch="
            << cfg.tasks_per_epoch << " n_support=" << cfg.n_support
            << " n_query=" << cfg.n_query << std::endl;

  std::vector<Sample> dataset = read_csv(args.data);
  SplitPools pools = make_pools(dataset, split, cfg.seed);
  std::cout << "pools: train=" << pools.train.size() << " val="
            << pools.val.size() << " test=" << pools.test.size() << std::endl;

  Architecture arch;
  const int every = std::max(args.progress_every, 1);
  MetaTrainResult result =
      meta_train(pools, cfg, arch, [&](const EpochRow& row) {
        if (row.epoch % every == 0 || row.epoch + 1 == cfg.epochs) {
          std::cout << "epoch " << row.epoch + 1 << "/" << cfg.epochs
                    << "  train " << format_double(row.train_query_loss)
                    << "  val " << format_double(row.val_loss) << std::endl;
        }
      });

  const std::string ck_path = out + "/checkpoint.json";
  const std::string report_path = out + "/report.json";
  const std::string csv_path = out + "/epochs.csv";
  write_checkpoint(ck_path, result.checkpoint);
  write_text_file(report_path, train_report_to_json(result.report));
  write_text_file(csv_path, train_report_to_csv(result.report));

  Manifest m;
  m.command = "train";
  m.seed = cfg.seed;
  m.config_json = meta_config_to_json(cfg);
  m.inputs.push_back(args.data);
  if (!args.config.empty()) m.inputs.push_back(args.config);
  m.outputs = {ck_path, report_path, csv_path};
  m.timings.emplace_back("train_seconds", result.report.train_seconds);
  m.timings.emplace_back("total_seconds", seconds_since(t0));
  write_manifest(out, m);

  std::cout << "best epoch " << result.report.best_epoch << "  val loss "
            << format_double(result.report.best_val_loss) << std::endl;
  std::cout << "meta-test: " << metrics_row(result.report.test) << std::endl;
  return 0;
}

// eval

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::string split;
  std::string config;
  std::size_t n_support = 0;
  std::size_t tasks = kTestTasks;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_eval(const EvalArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = read_checkpoint(args.checkpoint);
  MetaConfig cfg;
  if (!args.config.empty()) cfg = load_meta_config(args.config);
  cfg.split = args.split.empty() ? ck.meta.split : args.split;
  cfg.seed = args.seed_set ? args.seed : ck.meta.seed;
  const SplitSpec split = preset_split(cfg.split);
  const std::string out = ensure_out_dir(args.out);
  const std::size_t n_support =
      args.n_support != 0 ? args.n_support
                          : static_cast<std::size_t>(cfg.n_support);
  std::cout << "eval: split=" << split.name << " seed=" << cfg.seed
            << " n_support=" << n_support << " tasks=" << args.tasks
            << std::endl;

  std::vector<Sample> dataset = read_csv(args.data);
  SplitPools pools = make_pools(dataset, split, cfg.seed);
  // Features must be scaled exactly as during training.
  pools.scaler = ck.scaler;

  ModelParams model = checkpoint_model(ck);
  EvalResult res = meta_evaluate(model, pools, cfg, args.tasks, n_support);

  const std::string metrics_path = out + "/metrics.json";
  write_text_file(metrics_path, eval_result_to_json(res, n_support));

  Manifest m;
  m.command = "eval";
  m.seed = cfg.seed;
  {
    JsonWriter w;
    w.begin_object();
    w.key("n_support").value(static_cast<std::uint64_t>(n_support));
    w.key("tasks").value(static_cast<std::uint64_t>(args.tasks));
    w.key("meta").raw(meta_config_to_json(cfg));
    w.end_object();
    m.config_json = w.str();
  }
  m.inputs = {args.checkpoint, args.data};
  if (!args.config.empty()) m.inputs.push_back(args.config);
  m.outputs = {metrics_path};
  m.timings.emplace_back("total_seconds", seconds_since(t0));
  write_manifest(out, m);

  std::cout << "meta-test: " << metrics_row(res.overall) << std::endl;
  return 0;
}

// ablate

int cmd_ablate(const TrainArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  MetaConfig cfg = resolve_meta_config(args.config, args.split, args.seed,
                                       args.seed_set, args.epochs,
                                       args.epochs_set);
  cfg.validate();
  const SplitSpec split = preset_split(cfg.split);
  const std::string out = ensure_out_dir(args.out);

  std::vector<Sample> dataset = read_csv(args.data);
  SplitPools pools = make_pools(dataset, split, cfg.seed);

  const std::vector<std::string> variants = {"complete", "no_freq_branch",
                                             "no_other_branch"};
  Manifest m;
  m.command = "ablate";
  m.seed = cfg.seed;
  m.config_json = meta_config_to_json(cfg);
  m.inputs.push_back(args.data);
  if (!args.config.empty()) m.inputs.push_back(args.config);

  JsonWriter summary;
  summary.begin_object();
  for (const std::string& name : variants) {
    std::cout << "ablate: training variant " << name << std::endl;
    const Architecture arch = ablation_variant(name);
    MetaTrainResult result = meta_train(pools, cfg, arch, nullptr);
    const std::string vdir = ensure_out_dir(out + "/" + name);
    const std::string ck_path = vdir + "/checkpoint.json";
    const std::string report_path = vdir + "/report.json";
    write_checkpoint(ck_path, result.checkpoint);
    write_text_file(report_path, train_report_to_json(result.report));
    m.outputs.push_back(ck_path);
    m.outputs.push_back(report_path);
    summary.key(name).raw(metrics_to_json(result.report.test));
    std::cout << name << ": " << metrics_row(result.report.test) << std::endl;
  }
  summary.end_object();
  const std::string summary_path = out + "/ablation.json";
  write_text_file(summary_path, summary.str());
  m.outputs.push_back(summary_path);
  m.timings.emplace_back("total_seconds", seconds_since(t0));
  write_manifest(out, m);
  return 0;
}

// baseline

struct BaselineArgs {
  std::string data;
  std::string out;
  std::string split = "primary";
  std::string kind = "plain_dnn";
  std::uint64_t seed = 0;
  int epochs = 0;
  bool epochs_set = false;
  double lr = 0.0;
  bool lr_set = false;
  int k = 0;
  bool k_set = false;
  int batch = 0;
  bool batch_set = false;
};

std::string baseline_config_to_json(const BaselineConfig& c) {
  JsonWriter w;
  w.begin_object();
  w.key("kind").value(to_string(c.kind));
  w.key("epochs").value(c.epochs);
  w.key("lr").value(c.lr);
  w.key("k").value(c.k);
  w.key("batch").value(c.batch);
  w.key("lr_schedule").value(to_string(c.lr_schedule));
  w.key("adabelief").raw(adabelief_config_to_json(c.adabelief));
  w.key("seed").value(c.seed);
  w.key("loss").raw(loss_config_to_json(c.loss));
  w.end_object();
  return w.str();
}

int cmd_baseline(const BaselineArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  BaselineConfig cfg;
  cfg.kind = baseline_from_string(args.kind);
  cfg.seed = args.seed;
  if (args.epochs_set) cfg.epochs = args.epochs;
  if (args.lr_set) cfg.lr = args.lr;
  if (args.k_set) cfg.k = args.k;
  if (args.batch_set) cfg.batch = args.batch;
  cfg.validate();
  const SplitSpec split = preset_split(args.split);
  const std::string out = ensure_out_dir(args.out);
  std::cout << "baseline: kind=" << to_string(cfg.kind) << " split="
            << split.name << " seed=" << cfg.seed << std::endl;

  std::vector<Sample> dataset = read_csv(args.data);
  SplitPools pools = make_pools(dataset, split, cfg.seed);
  const std::vector<Sample> eval_query =
      filter_by_freq(pools.test, split.eval_query);
  if (eval_query.empty()) {
    throw std::invalid_argument("baseline: no test samples in the eval-query "
                                "region");
  }

  Manifest m;
  m.command = "baseline";
  m.seed = cfg.seed;
  m.config_json = baseline_config_to_json(cfg);
  m.inputs.push_back(args.data);

  Metrics metrics;
  if (cfg.kind == BaselineKind::kPlainDnn) {
    Architecture arch;
    PlainTrainResult result = train_plain(pools, cfg, arch);
    metrics = zero_shot_metrics(checkpoint_model(result.checkpoint),
                                result.checkpoint.scaler, eval_query);
    const std::string ck_path = out + "/checkpoint.json";
    const std::string csv_path = out + "/epochs.csv";
    write_checkpoint(ck_path, result.checkpoint);
    write_text_file(csv_path, plain_rows_to_csv(result.rows));
    m.outputs.push_back(ck_path);
    m.outputs.push_back(csv_path);
    m.timings.emplace_back("train_seconds", result.train_seconds);
  } else {
    metrics = knn_metrics(pools.train, pools.scaler, eval_query, cfg.k);
  }

  const std::string metrics_path = out + "/metrics.json";
  {
    JsonWriter w;
    w.begin_object();
    w.key("kind").value(to_string(cfg.kind));
    w.key("zero_shot_eval_query").raw(metrics_to_json(metrics));
    w.key("eval_query_samples")
        .value(static_cast<std::uint64_t>(eval_query.size()));
    w.end_object();
    write_text_file(metrics_path, w.str());
  }
  m.outputs.push_back(metrics_path);
  m.timings.emplace_back("total_seconds", seconds_since(t0));
  write_manifest(out, m);

  std::cout << "zero-shot eval-query: " << metrics_row(metrics) << std::endl;
  return 0;
}

// bench

struct BenchArgs {
  std::string out;
  std::size_t iterations = 10000;
  std::uint64_t seed = 0;
};

double mean_latency_us(const ModelParams& p,
                       const std::vector<std::array<double, 8>>& xs,
                       std::size_t iterations,
                       std::vector<double>* per_iter_us) {
  double total_us = 0.0;
  for (std::size_t i = 0; i < iterations; ++i) {
    const auto& x = xs[i % xs.size()];
    const auto t0 = std::chrono::steady_clock::now();
    volatile double sink = predict(p, x).transmittance;
    const auto t1 = std::chrono::steady_clock::now();
    (void)sink;
    const double us =
        std::chrono::duration<double, std::micro>(t1 - t0).count();
    total_us += us;
    if (per_iter_us) per_iter_us->push_back(us);
  }
  return total_us / static_cast<double>(iterations);
}

int cmd_bench(const BenchArgs& args) {
  const auto t0 = std::chrono::steady_clock::now();
  if (args.iterations == 0) {
    throw std::invalid_argument("bench: --iterations must be >= 1");
  }
  Architecture arch;
  ModelParams p = init_params(arch, args.seed);
  std::cout << "bench: parameters=" << arch.param_count() << " iterations="
            << args.iterations << " seed=" << args.seed << std::endl;

  OracleConfig oracle;
  std::vector<Sample> samples = generate_dataset(1024, oracle, args.seed);
  Scaler scaler = fit_scaler(samples);
  std::vector<std::array<double, 8>> xs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    xs[i] = scaler.transform(samples[i].x);
  }

  std::vector<double> per_iter;
  per_iter.reserve(args.iterations);
  const double mean_us = mean_latency_us(p, xs, args.iterations, &per_iter);
  std::sort(per_iter.begin(), per_iter.end());
  const double p50 = per_iter[per_iter.size() / 2];
  const double p99 = per_iter[std::min(per_iter.size() - 1,
                                       per_iter.size() * 99 / 100)];

  // Same designs with only the array size changed; latency must not
  // depend on it.
  std::vector<std::array<double, 8>> xs2 = xs, xs6 = xs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs2[i][7] = scaler.transform(std::array<double, 8>{0, 0, 0, 0, 0, 0, 0, 2})[7];
    xs6[i][7] = scaler.transform(std::array<double, 8>{0, 0, 0, 0, 0, 0, 0, 6})[7];
  }
  const double mean2 = mean_latency_us(p, xs2, args.iterations, nullptr);
  const double mean6 = mean_latency_us(p, xs6, args.iterations, nullptr);

  std::cout << "latency: mean " << format_double(mean_us) << " us, p50 "
            << format_double(p50) << " us, p99 " << format_double(p99)
            << " us" << std::endl;
  std::cout << "array_n=2 mean " << format_double(mean2)
            << " us, array_n=6 mean " << format_double(mean6) << " us"
            << std::endl;

  if (!args.out.empty()) {
    const std::string out = ensure_out_dir(args.out);
    JsonWriter w;
    w.begin_object();
    w.key("param_count").value(arch.param_count());
    w.key("iterations").value(static_cast<std::uint64_t>(args.iterations));
    w.key("mean_us").value(mean_us);
    w.key("p50_us").value(p50);
    w.key("p99_us").value(p99);
    w.key("array_n_2_mean_us").value(mean2);
    w.key("array_n_6_mean_us").value(mean6);
    w.end_object();
    const std::string bench_path = out + "/bench.json";
    write_text_file(bench_path, w.str());

    Manifest m;
    m.command = "bench";
    m.seed = args.seed;
    {
      JsonWriter cw;
      cw.begin_object();
      cw.key("iterations").value(static_cast<std::uint64_t>(args.iterations));
      cw.end_object();
      m.config_json = cw.str();
    }
    m.outputs.push_back(bench_path);
    m.timings.emplace_back("total_seconds", seconds_since(t0));
    write_manifest(out, m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metasurface response surrogate pipeline"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* sub_gen = app.add_subcommand("generate", "generate a labeled dataset");
  sub_gen->add_option("--samples", gen.samples, "number of samples")->required();
  sub_gen->add_option("--seed", gen.seed, "rng seed");
  sub_gen->add_option("--out", gen.out, "output directory")->required();
  sub_gen->add_option("--sweep-points", gen.sweep_points,
                      "also write a frequency sweep with this many points");
  sub_gen->add_option("--wavelength-mm", gen.oracle.wavelength_mm, "");
  sub_gen->add_option("--er", gen.oracle.substrate_er, "substrate permittivity");
  sub_gen->add_option("--tand", gen.oracle.substrate_tand, "substrate loss tangent");
  sub_gen->add_option("--thickness-mm", gen.oracle.substrate_thickness_mm, "");
  sub_gen->add_option("--bottom-l-ph", gen.oracle.bottom_l_ph, "");
  sub_gen->add_option("--bottom-r-ohm", gen.oracle.bottom_r_ohm, "");
  sub_gen->add_option("--kappa-spacing", gen.oracle.coupling_kappa_spacing, "");
  sub_gen->add_option("--kappa-array", gen.oracle.coupling_kappa_array, "");
  sub_gen->add_option("--pol", gen.pol, "polarization, TE or TM");
  sub_gen->add_flag("--lossless", gen.oracle.lossless_override,
                    "zero all dissipative elements");

  TrainArgs train;
  CLI::App* sub_train = app.add_subcommand("train", "meta-train a surrogate");
  sub_train->add_option("--data", train.data, "dataset CSV")->required();
  sub_train->add_option("--out", train.out, "output directory")->required();
  sub_train->add_option("--split", train.split, "primary, easy or hard");
  sub_train->add_option("--config", train.config, "JSON config file");
  auto* train_seed = sub_train->add_option("--seed", train.seed, "rng seed");
  auto* train_epochs = sub_train->add_option("--epochs", train.epochs, "");
  sub_train->add_option("--progress-every", train.progress_every,
                        "progress print stride");

  EvalArgs eval;
  CLI::App* sub_eval = app.add_subcommand("eval", "episodic evaluation of a checkpoint");
  sub_eval->add_option("--checkpoint", eval.checkpoint, "checkpoint file")->required();
  sub_eval->add_option("--data", eval.data, "dataset CSV")->required();
  sub_eval->add_option("--out", eval.out, "output directory")->required();
  sub_eval->add_option("--split", eval.split, "primary, easy or hard");
  sub_eval->add_option("--config", eval.config, "JSON config file");
  sub_eval->add_option("--n-support", eval.n_support, "support samples per task");
  sub_eval->add_option("--tasks", eval.tasks, "number of test tasks");
  auto* eval_seed = sub_eval->add_option("--seed", eval.seed, "rng seed");

  TrainArgs ablate;
  CLI::App* sub_ablate = app.add_subcommand(
      "ablate", "train and score complete and branch-removed variants");
  sub_ablate->add_option("--data", ablate.data, "dataset CSV")->required();
  sub_ablate->add_option("--out", ablate.out, "output directory")->required();
  sub_ablate->add_option("--split", ablate.split, "primary, easy or hard");
  sub_ablate->add_option("--config", ablate.config, "JSON config file");
  auto* ablate_seed = sub_ablate->add_option("--seed", ablate.seed, "rng seed");
  auto* ablate_epochs = sub_ablate->add_option("--epochs", ablate.epochs, "");

  BaselineArgs baseline;
  CLI::App* sub_baseline = app.add_subcommand("baseline", "comparison methods");
  sub_baseline->add_option("--data", baseline.data, "dataset CSV")->required();
  sub_baseline->add_option("--out", baseline.out, "output directory")->required();
  sub_baseline->add_option("--split", baseline.split, "primary, easy or hard");
  sub_baseline->add_option("--kind", baseline.kind, "plain_dnn or knn");
  sub_baseline->add_option("--seed", baseline.seed, "rng seed");
  auto* bl_epochs = sub_baseline->add_option("--epochs", baseline.epochs, "");
  auto* bl_lr = sub_baseline->add_option("--lr", baseline.lr, "");
  auto* bl_k = sub_baseline->add_option("--k", baseline.k, "neighbor count");
  auto* bl_batch = sub_baseline->add_option("--batch", baseline.batch, "");

  BenchArgs bench;
  CLI::App* sub_bench = app.add_subcommand("bench", "latency and size report");
  sub_bench->add_option("--out", bench.out, "output directory (optional)");
  sub_bench->add_option("--iterations", bench.iterations, "");
  sub_bench->add_option("--seed", bench.seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  train.seed_set = train_seed->count() > 0;
  train.epochs_set = train_epochs->count() > 0;
  eval.seed_set = eval_seed->count() > 0;
  ablate.seed_set = ablate_seed->count() > 0;
  ablate.epochs_set = ablate_epochs->count() > 0;
  baseline.epochs_set = bl_epochs->count() > 0;
  baseline.lr_set = bl_lr->count() > 0;
  baseline.k_set = bl_k->count() > 0;
  baseline.batch_set = bl_batch->count() > 0;

  try {
    if (sub_gen->parsed()) return cmd_generate(gen);
    if (sub_train->parsed()) return cmd_train(train);
    if (sub_eval->parsed()) return cmd_eval(eval);
    if (sub_ablate->parsed()) return cmd_ablate(ablate);
    if (sub_baseline->parsed()) return cmd_baseline(baseline);
    if (sub_bench->parsed()) return cmd_bench(bench);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << std::endl;
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  std::cerr << "no command selected" << std::endl;
  return kExitUsage;
}
