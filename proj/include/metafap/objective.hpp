#pragma once

#include <array>
#include <string>
#include <vector>

namespace metafap {

using Triple = std::array<double, 3>;

struct LossConfig {
  double huber_delta = 0.1;
  double corr_weight = 0.5;
  // Substituted for a channel's Pearson r when either side of that
  // channel has zero variance; such channels carry no gradient.
  double corr_degenerate_value = 0.0;

  void validate() const;
};

// Robust regression loss: elementwise Huber averaged over all 3N entries
// plus corr_weight * (1 - mean per-channel Pearson correlation).
// If grad_out is non-null it receives dLoss/dPred, same shape as pred.
// Batches must have >= 2 rows when corr_weight > 0.
double hubcor_loss(const std::vector<Triple>& pred,
                   const std::vector<Triple>& target, const LossConfig& cfg,
                   std::vector<Triple>* grad_out = nullptr);

// Mean squared / absolute error over all 3N entries.
double mse(const std::vector<Triple>& pred, const std::vector<Triple>& target);
double mae(const std::vector<Triple>& pred, const std::vector<Triple>& target);

// Pearson correlation of two equal-length series (n >= 2). A zero-variance
// side makes the value degenerate; degenerate_value is returned instead.
double pearson(const std::vector<double>& x, const std::vector<double>& y,
               double degenerate_value = 0.0);

// Mean of the three per-channel Pearson correlations.
double pearson_cc(const std::vector<Triple>& pred,
                  const std::vector<Triple>& target,
                  double degenerate_value = 0.0);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  double cc = 0.0;  // mean per-channel Pearson r, in [-1, 1]
};

Metrics compute_metrics(const std::vector<Triple>& pred,
                        const std::vector<Triple>& target);

// Flat document {mse, mae, cc_percent}.
std::string metrics_to_json(const Metrics& m);

}  // namespace metafap
