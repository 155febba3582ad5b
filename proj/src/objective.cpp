#include "metafap/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "metafap/common.hpp"

namespace metafap {

namespace {
void check_shapes(const std::vector<Triple>& pred,
                  const std::vector<Triple>& target) {
  if (pred.size() != target.size()) {
    throw std::invalid_argument("prediction/target batch sizes differ: " +
                                std::to_string(pred.size()) + " vs " +
                                std::to_string(target.size()));
  }
  if (pred.empty()) throw std::invalid_argument("empty batch");
}

double huber(double e, double delta) {
  const double ae = std::fabs(e);
  if (ae <= delta) return 0.5 * e * e;
  return delta * (ae - 0.5 * delta);
}

double huber_grad(double e, double delta) {
  if (e > delta) return delta;
  if (e < -delta) return -delta;
  return e;
}
}  // namespace

void LossConfig::validate() const {
  if (!(huber_delta > 0.0) || !std::isfinite(huber_delta)) {
    throw std::invalid_argument("huber_delta must be > 0");
  }
  if (!(corr_weight >= 0.0) || !std::isfinite(corr_weight)) {
    throw std::invalid_argument("corr_weight must be >= 0");
  }
  if (!std::isfinite(corr_degenerate_value)) {
    throw std::invalid_argument("corr_degenerate_value must be finite");
  }
}

double hubcor_loss(const std::vector<Triple>& pred,
                   const std::vector<Triple>& target, const LossConfig& cfg,
                   std::vector<Triple>* grad_out) {
  check_shapes(pred, target);
  const std::size_t n = pred.size();
  if (cfg.corr_weight > 0.0 && n < 2) {
    throw std::invalid_argument(
        "hubcor_loss: batch of size >= 2 required when corr_weight > 0");
  }
  const double inv_count = 1.0 / (3.0 * static_cast<double>(n));

  if (grad_out) {
    grad_out->assign(n, Triple{0.0, 0.0, 0.0});
  }

  double huber_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const double e = pred[i][ch] - target[i][ch];
      huber_sum += huber(e, cfg.huber_delta);
      if (grad_out) (*grad_out)[i][ch] = huber_grad(e, cfg.huber_delta) * inv_count;
    }
  }
  double loss = huber_sum * inv_count;

  if (cfg.corr_weight > 0.0) {
    double r_sum = 0.0;
    const double dn = static_cast<double>(n);
    for (int ch = 0; ch < 3; ++ch) {
      double pm = 0.0, tm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        pm += pred[i][ch];
        tm += target[i][ch];
      }
      pm /= dn;
      tm /= dn;
      double sp = 0.0, st = 0.0, spt = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double pc = pred[i][ch] - pm;
        const double tc = target[i][ch] - tm;
        sp += pc * pc;
        st += tc * tc;
        spt += pc * tc;
      }
      if (sp == 0.0 || st == 0.0) {
        r_sum += cfg.corr_degenerate_value;
        continue;
      }
      const double denom = std::sqrt(sp * st);
      const double r = spt / denom;
      r_sum += r;
      if (grad_out) {
        // d(1 - mean r)/dpred picks up -(corr_weight/3) * dr/dpred.
        const double scale = -cfg.corr_weight / 3.0;
        const double ratio = spt / sp;
        for (std::size_t i = 0; i < n; ++i) {
          const double pc = pred[i][ch] - pm;
          const double tc = target[i][ch] - tm;
          (*grad_out)[i][ch] += scale * (tc - ratio * pc) / denom;
        }
      }
    }
    loss += cfg.corr_weight * (1.0 - r_sum / 3.0);
  }
  if (!std::isfinite(loss)) {
    throw std::runtime_error("hubcor_loss: non-finite loss");
  }
  return loss;
}

double mse(const std::vector<Triple>& pred, const std::vector<Triple>& target) {
  check_shapes(pred, target);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      const double e = pred[i][ch] - target[i][ch];
      s += e * e;
    }
  }
  return s / (3.0 * static_cast<double>(pred.size()));
}

double mae(const std::vector<Triple>& pred, const std::vector<Triple>& target) {
  check_shapes(pred, target);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (int ch = 0; ch < 3; ++ch) {
      s += std::fabs(pred[i][ch] - target[i][ch]);
    }
  }
  return s / (3.0 * static_cast<double>(pred.size()));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y,
               double degenerate_value) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("pearson: series lengths differ");
  }
  if (x.size() < 2) {
    throw std::invalid_argument("pearson: need at least 2 samples");
  }
  const double dn = static_cast<double>(x.size());
  double xm = 0.0, ym = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xm += x[i];
    ym += y[i];
  }
  xm /= dn;
  ym /= dn;
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xc = x[i] - xm;
    const double yc = y[i] - ym;
    sx += xc * xc;
    sy += yc * yc;
    sxy += xc * yc;
  }
  if (sx == 0.0 || sy == 0.0) return degenerate_value;
  return sxy / std::sqrt(sx * sy);
}

double pearson_cc(const std::vector<Triple>& pred,
                  const std::vector<Triple>& target, double degenerate_value) {
  check_shapes(pred, target);
  if (pred.size() < 2) {
    throw std::invalid_argument("pearson_cc: need at least 2 samples");
  }
  double sum = 0.0;
  std::vector<double> p(pred.size()), t(pred.size());
  for (int ch = 0; ch < 3; ++ch) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      p[i] = pred[i][ch];
      t[i] = target[i][ch];
    }
    sum += pearson(p, t, degenerate_value);
  }
  return sum / 3.0;
}

Metrics compute_metrics(const std::vector<Triple>& pred,
                        const std::vector<Triple>& target) {
  Metrics m;
  m.mse = mse(pred, target);
  m.mae = mae(pred, target);
  m.cc = pearson_cc(pred, target);
  return m;
}

std::string metrics_to_json(const Metrics& m) {
  JsonWriter w;
  w.begin_object();
  w.key("mse").value(m.mse);
  w.key("mae").value(m.mae);
  w.key("cc_percent").value(100.0 * m.cc);
  w.end_object();
  return w.str() + "\n";
}

}  // namespace metafap
