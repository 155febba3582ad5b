#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metafap/data.hpp"
#include "metafap/net.hpp"

namespace metafap {

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::string split = "primary";
  int best_epoch = -1;
  double best_val_loss = 0.0;
  int epochs = 0;
};

// Model snapshot: architecture descriptor, the feature scaler it was
// trained with, the flat parameter vector, and training metadata.
// Parameters are written as decimal literals with 17 significant digits,
// which reload to bit-identical doubles.
struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  Architecture arch;
  Scaler scaler;
  std::vector<double> params;
  CheckpointMeta meta;
};

std::string checkpoint_to_json(const Checkpoint& c);
Checkpoint checkpoint_from_json(const std::string& text);

void write_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint read_checkpoint(const std::string& path);

// Throws std::runtime_error if the checkpoint's architecture differs
// from the expected one.
void require_architecture(const Checkpoint& c, const Architecture& expected);

ModelParams checkpoint_model(const Checkpoint& c);

std::string architecture_to_json(const Architecture& a);

}  // namespace metafap
