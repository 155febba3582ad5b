#include "metafap/checkpoint.hpp"

#include <stdexcept>

#include <json.hpp>

namespace metafap {

namespace {
void write_arch_fields(JsonWriter& w, const Architecture& a) {
  w.begin_object();
  w.key("gating_hidden").value(a.gating_hidden);
  w.key("gating_out").value(a.gating_out);
  w.key("other_hidden").value(a.other_hidden);
  w.key("other_out").value(a.other_out);
  w.key("freq_hidden").value(a.freq_hidden);
  w.key("freq_out").value(a.freq_out);
  w.key("head_hidden1").value(a.head_hidden1);
  w.key("head_hidden2").value(a.head_hidden2);
  w.key("dropout_rate").value(a.dropout_rate);
  w.key("use_freq_branch").value(a.use_freq_branch);
  w.key("use_other_branch").value(a.use_other_branch);
  w.key("multiplicative_gating").value(a.multiplicative_gating);
  w.end_object();
}

Architecture parse_arch(const nlohmann::json& j) {
  Architecture a;
  a.gating_hidden = j.at("gating_hidden").get<int>();
  a.gating_out = j.at("gating_out").get<int>();
  a.other_hidden = j.at("other_hidden").get<int>();
  a.other_out = j.at("other_out").get<int>();
  a.freq_hidden = j.at("freq_hidden").get<int>();
  a.freq_out = j.at("freq_out").get<int>();
  a.head_hidden1 = j.at("head_hidden1").get<int>();
  a.head_hidden2 = j.at("head_hidden2").get<int>();
  a.dropout_rate = j.at("dropout_rate").get<double>();
  a.use_freq_branch = j.at("use_freq_branch").get<bool>();
  a.use_other_branch = j.at("use_other_branch").get<bool>();
  a.multiplicative_gating = j.at("multiplicative_gating").get<bool>();
  a.validate();
  return a;
}
}  // namespace

std::string architecture_to_json(const Architecture& a) {
  JsonWriter w;
  write_arch_fields(w, a);
  return w.str();
}

std::string checkpoint_to_json(const Checkpoint& c) {
  JsonWriter w;
  w.begin_object();
  w.key("format_version").value(c.format_version);
  w.key("architecture");
  write_arch_fields(w, c.arch);
  w.key("scaler").begin_object();
  w.key("mean").begin_array();
  for (double v : c.scaler.mean) w.value(v);
  w.end_array();
  w.key("stdev").begin_array();
  for (double v : c.scaler.stdev) w.value(v);
  w.end_array();
  w.end_object();
  w.key("params").begin_array();
  for (double v : c.params) w.value(v);
  w.end_array();
  w.key("metadata").begin_object();
  w.key("seed").value(static_cast<std::uint64_t>(c.meta.seed));
  w.key("split").value(c.meta.split);
  w.key("best_epoch").value(c.meta.best_epoch);
  w.key("best_val_loss").value(c.meta.best_val_loss);
  w.key("epochs").value(c.meta.epochs);
  w.end_object();
  w.end_object();
  return w.str() + "\n";
}

Checkpoint checkpoint_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid JSON: ") +
                             e.what());
  }
  Checkpoint c;
  try {
    c.format_version = j.at("format_version").get<int>();
    if (c.format_version != kCheckpointFormatVersion) {
      throw std::runtime_error("checkpoint: unsupported format_version " +
                               std::to_string(c.format_version));
    }
    c.arch = parse_arch(j.at("architecture"));
    const auto& sc = j.at("scaler");
    const auto mean = sc.at("mean").get<std::vector<double>>();
    const auto stdev = sc.at("stdev").get<std::vector<double>>();
    if (mean.size() != 8 || stdev.size() != 8) {
      throw std::runtime_error("checkpoint: scaler must have 8 entries");
    }
    for (int i = 0; i < 8; ++i) {
      c.scaler.mean[i] = mean[i];
      c.scaler.stdev[i] = stdev[i];
    }
    c.params = j.at("params").get<std::vector<double>>();
    const auto& m = j.at("metadata");
    c.meta.seed = m.at("seed").get<std::uint64_t>();
    c.meta.split = m.at("split").get<std::string>();
    c.meta.best_epoch = m.at("best_epoch").get<int>();
    c.meta.best_val_loss = m.at("best_val_loss").get<double>();
    c.meta.epochs = m.at("epochs").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: missing or bad field: ") +
                             e.what());
  }
  const auto expected =
      static_cast<std::size_t>(c.arch.param_count());
  if (c.params.size() != expected) {
    throw std::runtime_error(
        "checkpoint: parameter count " + std::to_string(c.params.size()) +
        " does not match architecture (" + std::to_string(expected) + ")");
  }
  return c;
}

void write_checkpoint(const std::string& path, const Checkpoint& c) {
  write_text_file(path, checkpoint_to_json(c));
}

Checkpoint read_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_text_file(path));
}

void require_architecture(const Checkpoint& c, const Architecture& expected) {
  if (!(c.arch == expected)) {
    throw std::runtime_error(
        "checkpoint architecture does not match the expected architecture");
  }
}

ModelParams checkpoint_model(const Checkpoint& c) {
  ModelParams p;
  p.arch = c.arch;
  p.values = c.params;
  return p;
}

}  // namespace metafap
