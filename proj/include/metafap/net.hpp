#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "metafap/common.hpp"
#include "metafap/data.hpp"
#include "metafap/objective.hpp"
#include "metafap/oracle.hpp"

namespace metafap {

// Branched regression network over 8 scaled design features:
//   gating branch:  8 -> gating_hidden (relu) -> gating_out (sigmoid)
//   other branch:   7 -> other_hidden (relu) -> layer-norm -> dropout
//                     -> other_out (relu)           (features 1..7)
//   freq branch:    1 -> freq_hidden (relu) -> freq_out (relu) (feature 0)
//   head: concat -> head_hidden1 (relu) -> layer-norm -> dropout
//                -> head_hidden2 (relu) -> 3 -> softmax
// Disabled branches contribute zeros of matching width; their parameters
// stay in the flat vector and receive zero gradient.
struct Architecture {
  int gating_hidden = 12;
  int gating_out = 8;
  int other_hidden = 24;
  int other_out = 16;
  int freq_hidden = 8;
  int freq_out = 8;
  int head_hidden1 = 48;
  int head_hidden2 = 24;
  double dropout_rate = 0.1;
  bool use_freq_branch = true;
  bool use_other_branch = true;
  // Gating output multiplies the raw input features elementwise instead
  // of entering the concat directly; requires gating_out == 8.
  bool multiplicative_gating = false;

  bool operator==(const Architecture&) const = default;
  void validate() const;
  int concat_width() const { return gating_out + other_out + freq_out; }
  std::int64_t param_count() const;
};

struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  int rows = 0;  // rows x cols for matrices, cols == 1 for vectors
  int cols = 0;
  char kind = 'w';  // 'w' weight, 'b' bias, 'g' ln gain, 'o' ln offset
};

// Canonical flat layout; init, checkpoints and the optimizer all share it.
std::vector<ParamSlice> param_layout(const Architecture& a);

struct ModelParams {
  Architecture arch;
  std::vector<double> values;
};

// Glorot-uniform weights (half-width sqrt(6/(fan_in+fan_out))), zero
// biases, unit layer-norm gains, zero layer-norm offsets.
ModelParams init_params(const Architecture& a, std::uint64_t seed);

enum class Mode { kEval, kTrain };

// Everything backward needs. Dropout masks hold the inverted-dropout
// scale (0 or 1/(1-rate)); in eval mode they are all ones.
struct ForwardCache {
  std::array<double, 8> x{};
  bool train_mode = false;
  std::vector<double> g_z1, g_out;
  std::vector<double> o_z1, o_xhat, o_mask, o_dropped, o_z2;
  double o_inv_sigma = 0.0;
  std::vector<double> f_z1, f_z2;
  std::vector<double> concat;
  std::vector<double> h_z1, h_xhat, h_mask, h_dropped, h_z2;
  double h_inv_sigma = 0.0;
  Triple y{};
};

// Single forward pass. rng supplies dropout draws and is required in
// train mode when dropout_rate > 0. Non-finite inputs are rejected.
void forward(const ModelParams& p, const std::array<double, 8>& x, Mode mode,
             Rng* rng, ForwardCache& cache);
ResponseTriple forward(const ModelParams& p, const std::array<double, 8>& x,
                       Mode mode, Rng* rng);

void forward_batch(const ModelParams& p, const std::vector<ScaledSample>& batch,
                   Mode mode, Rng* rng, std::vector<ForwardCache>& caches,
                   std::vector<Triple>& preds);

// Batch loss plus parameter gradient from caches produced by matching
// forward calls. grad has param_count entries.
double backward(const ModelParams& p, const std::vector<ForwardCache>& caches,
                const std::vector<Triple>& preds,
                const std::vector<Triple>& targets, const LossConfig& loss_cfg,
                std::vector<double>& grad);

// Reusable buffers for loss_and_grad; keeps hot loops allocation-free.
struct GradWorkspace {
  std::vector<ForwardCache> caches;
  std::vector<Triple> preds;
  std::vector<double> grad;
};

double loss_and_grad(const ModelParams& p, const std::vector<ScaledSample>& batch,
                     const LossConfig& loss_cfg, Mode mode, Rng* rng,
                     GradWorkspace& ws);

// Loss only (no gradient); eval-mode forwards.
double batch_loss(const ModelParams& p, const std::vector<ScaledSample>& batch,
                  const LossConfig& loss_cfg);

ResponseTriple predict(const ModelParams& p, const std::array<double, 8>& x);
std::vector<Triple> predict_batch(const ModelParams& p,
                                  const std::vector<std::array<double, 8>>& xs);
std::vector<Triple> predict_batch(const ModelParams& p,
                                  const std::vector<ScaledSample>& batch);

}  // namespace metafap
