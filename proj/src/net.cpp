#include "metafap/net.hpp"

#include <cmath>
#include <stdexcept>

namespace metafap {

namespace {
constexpr double kLayerNormEps = 1e-5;
constexpr int kMaxWidth = 256;

enum SliceId {
  kGW1, kGB1, kGW2, kGB2,
  kOW1, kOB1, kOLnG, kOLnB, kOW2, kOB2,
  kFW1, kFB1, kFW2, kFB2,
  kHW1, kHB1, kHLnG, kHLnB, kHW2, kHB2, kHW3, kHB3,
  kSliceCount
};

struct Offsets {
  std::size_t at[kSliceCount];
  std::size_t total;
};

Offsets make_offsets(const Architecture& a) {
  Offsets o{};
  const auto layout = param_layout(a);
  for (int i = 0; i < kSliceCount; ++i) o.at[i] = layout[i].offset;
  o.total = layout.back().offset + layout.back().size;
  return o;
}

inline void matvec(const double* w, const double* b, const double* x, int rows,
                   int cols, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double acc = b[r];
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] = acc;
  }
}

// dW += dy x^T, db += dy, dx = W^T dy (dx may be null).
inline void matvec_backward(const double* w, const double* x, const double* dy,
                            int rows, int cols, double* dw, double* db,
                            double* dx) {
  if (dx) {
    for (int c = 0; c < cols; ++c) dx[c] = 0.0;
  }
  for (int r = 0; r < rows; ++r) {
    const double g = dy[r];
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double* drow = dw + static_cast<std::size_t>(r) * cols;
    db[r] += g;
    for (int c = 0; c < cols; ++c) {
      drow[c] += g * x[c];
      if (dx) dx[c] += row[c] * g;
    }
  }
}

inline double relu(double v) { return v > 0.0 ? v : 0.0; }

inline void layer_norm_forward(const double* a, int w, const double* gain,
                               const double* offset, double* xhat, double* out,
                               double* inv_sigma_out) {
  double mu = 0.0;
  for (int j = 0; j < w; ++j) mu += a[j];
  mu /= w;
  double var = 0.0;
  for (int j = 0; j < w; ++j) {
    const double c = a[j] - mu;
    var += c * c;
  }
  var /= w;
  const double inv_sigma = 1.0 / std::sqrt(var + kLayerNormEps);
  for (int j = 0; j < w; ++j) {
    xhat[j] = (a[j] - mu) * inv_sigma;
    out[j] = gain[j] * xhat[j] + offset[j];
  }
  *inv_sigma_out = inv_sigma;
}

// dout -> da; accumulates dgain/doffset.
inline void layer_norm_backward(const double* xhat, double inv_sigma,
                                const double* gain, const double* dout, int w,
                                double* dgain, double* doffset, double* da) {
  double m1 = 0.0, m2 = 0.0;
  for (int j = 0; j < w; ++j) {
    dgain[j] += dout[j] * xhat[j];
    doffset[j] += dout[j];
    const double dxhat = dout[j] * gain[j];
    da[j] = dxhat;  // reuse as dxhat scratch
    m1 += dxhat;
    m2 += dxhat * xhat[j];
  }
  m1 /= w;
  m2 /= w;
  for (int j = 0; j < w; ++j) {
    da[j] = inv_sigma * (da[j] - m1 - xhat[j] * m2);
  }
}

inline void dropout_mask(Rng& rng, double rate, int w, double* mask) {
  const double inv_keep = 1.0 / (1.0 - rate);
  for (int j = 0; j < w; ++j) {
    mask[j] = rng.uniform() < rate ? 0.0 : inv_keep;
  }
}

void resize_cache(ForwardCache& c, const Architecture& a) {
  c.g_z1.resize(a.gating_hidden);
  c.g_out.resize(a.gating_out);
  c.o_z1.resize(a.other_hidden);
  c.o_xhat.resize(a.other_hidden);
  c.o_mask.resize(a.other_hidden);
  c.o_dropped.resize(a.other_hidden);
  c.o_z2.resize(a.other_out);
  c.f_z1.resize(a.freq_hidden);
  c.f_z2.resize(a.freq_out);
  c.concat.resize(a.concat_width());
  c.h_z1.resize(a.head_hidden1);
  c.h_xhat.resize(a.head_hidden1);
  c.h_mask.resize(a.head_hidden1);
  c.h_dropped.resize(a.head_hidden1);
  c.h_z2.resize(a.head_hidden2);
}

struct Scratch {
  std::vector<double> buf1, buf2, buf3, dconcat;
  void resize(const Architecture& a) {
    int m = a.head_hidden1;
    for (int w : {a.gating_hidden, a.gating_out, a.other_hidden, a.other_out,
                  a.freq_hidden, a.freq_out, a.head_hidden2}) {
      if (w > m) m = w;
    }
    buf1.resize(m);
    buf2.resize(m);
    buf3.resize(m);
    dconcat.resize(a.concat_width());
  }
};

void backward_sample(const ModelParams& p, const Offsets& off,
                     const ForwardCache& c, const Triple& dpred, double* g,
                     Scratch& s) {
  const Architecture& a = p.arch;
  const double* v = p.values.data();

  // softmax jacobian
  double dz3[3];
  {
    const double dot =
        dpred[0] * c.y[0] + dpred[1] * c.y[1] + dpred[2] * c.y[2];
    for (int k = 0; k < 3; ++k) dz3[k] = c.y[k] * (dpred[k] - dot);
  }

  // head output layer (3 x head_hidden2); inputs a2 = relu(h_z2)
  double* a2 = s.buf1.data();
  for (int j = 0; j < a.head_hidden2; ++j) a2[j] = relu(c.h_z2[j]);
  double* da2 = s.buf2.data();
  matvec_backward(v + off.at[kHW3], a2, dz3, 3, a.head_hidden2,
                  g + off.at[kHW3], g + off.at[kHB3], da2);

  // head hidden 2
  double* dz2 = s.buf1.data();
  for (int j = 0; j < a.head_hidden2; ++j) {
    dz2[j] = c.h_z2[j] > 0.0 ? da2[j] : 0.0;
  }
  double* ddrop = s.buf3.data();
  matvec_backward(v + off.at[kHW2], c.h_dropped.data(), dz2, a.head_hidden2,
                  a.head_hidden1, g + off.at[kHW2], g + off.at[kHB2], ddrop);

  // head dropout + layer norm
  double* dln = s.buf1.data();
  for (int j = 0; j < a.head_hidden1; ++j) dln[j] = ddrop[j] * c.h_mask[j];
  double* da1 = s.buf2.data();
  layer_norm_backward(c.h_xhat.data(), c.h_inv_sigma, v + off.at[kHLnG], dln,
                      a.head_hidden1, g + off.at[kHLnG], g + off.at[kHLnB],
                      da1);

  // head hidden 1
  double* dz1 = s.buf1.data();
  for (int j = 0; j < a.head_hidden1; ++j) {
    dz1[j] = c.h_z1[j] > 0.0 ? da1[j] : 0.0;
  }
  matvec_backward(v + off.at[kHW1], c.concat.data(), dz1, a.head_hidden1,
                  a.concat_width(), g + off.at[kHW1], g + off.at[kHB1],
                  s.dconcat.data());

  const double* dcat = s.dconcat.data();
  const double* dg = dcat;
  const double* dother = dcat + a.gating_out;
  const double* dfreq = dcat + a.gating_out + a.other_out;

  // gating branch
  {
    double* dgout = s.buf1.data();
    if (a.multiplicative_gating) {
      for (int j = 0; j < a.gating_out; ++j) dgout[j] = dg[j] * c.x[j];
    } else {
      for (int j = 0; j < a.gating_out; ++j) dgout[j] = dg[j];
    }
    double* ds2 = s.buf2.data();
    for (int j = 0; j < a.gating_out; ++j) {
      ds2[j] = dgout[j] * c.g_out[j] * (1.0 - c.g_out[j]);
    }
    double* ga1 = s.buf1.data();
    for (int j = 0; j < a.gating_hidden; ++j) ga1[j] = relu(c.g_z1[j]);
    double* da1g = s.buf3.data();
    matvec_backward(v + off.at[kGW2], ga1, ds2, a.gating_out, a.gating_hidden,
                    g + off.at[kGW2], g + off.at[kGB2], da1g);
    double* dz1g = s.buf2.data();
    for (int j = 0; j < a.gating_hidden; ++j) {
      dz1g[j] = c.g_z1[j] > 0.0 ? da1g[j] : 0.0;
    }
    matvec_backward(v + off.at[kGW1], c.x.data(), dz1g, a.gating_hidden, 8,
                    g + off.at[kGW1], g + off.at[kGB1], nullptr);
  }

  // other branch
  if (a.use_other_branch) {
    double* dz2o = s.buf1.data();
    for (int j = 0; j < a.other_out; ++j) {
      dz2o[j] = c.o_z2[j] > 0.0 ? dother[j] : 0.0;
    }
    double* ddropo = s.buf2.data();
    matvec_backward(v + off.at[kOW2], c.o_dropped.data(), dz2o, a.other_out,
                    a.other_hidden, g + off.at[kOW2], g + off.at[kOB2], ddropo);
    double* dlno = s.buf1.data();
    for (int j = 0; j < a.other_hidden; ++j) dlno[j] = ddropo[j] * c.o_mask[j];
    double* da1o = s.buf3.data();
    layer_norm_backward(c.o_xhat.data(), c.o_inv_sigma, v + off.at[kOLnG],
                        dlno, a.other_hidden, g + off.at[kOLnG],
                        g + off.at[kOLnB], da1o);
    double* dz1o = s.buf1.data();
    for (int j = 0; j < a.other_hidden; ++j) {
      dz1o[j] = c.o_z1[j] > 0.0 ? da1o[j] : 0.0;
    }
    matvec_backward(v + off.at[kOW1], c.x.data() + 1, dz1o, a.other_hidden, 7,
                    g + off.at[kOW1], g + off.at[kOB1], nullptr);
  }

  // frequency branch
  if (a.use_freq_branch) {
    double* dz2f = s.buf1.data();
    for (int j = 0; j < a.freq_out; ++j) {
      dz2f[j] = c.f_z2[j] > 0.0 ? dfreq[j] : 0.0;
    }
    double* fa1 = s.buf2.data();
    for (int j = 0; j < a.freq_hidden; ++j) fa1[j] = relu(c.f_z1[j]);
    double* da1f = s.buf3.data();
    matvec_backward(v + off.at[kFW2], fa1, dz2f, a.freq_out, a.freq_hidden,
                    g + off.at[kFW2], g + off.at[kFB2], da1f);
    for (int j = 0; j < a.freq_hidden; ++j) {
      const double dz = c.f_z1[j] > 0.0 ? da1f[j] : 0.0;
      g[off.at[kFW1] + j] += dz * c.x[0];
      g[off.at[kFB1] + j] += dz;
    }
  }
}
}  // namespace

void Architecture::validate() const {
  for (int w : {gating_hidden, gating_out, other_hidden, other_out,
                freq_hidden, freq_out, head_hidden1, head_hidden2}) {
    if (w < 1 || w > kMaxWidth) {
      throw std::invalid_argument("architecture widths must lie in [1, 256]");
    }
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw std::invalid_argument("dropout_rate must lie in [0, 1)");
  }
  if (multiplicative_gating && gating_out != 8) {
    throw std::invalid_argument(
        "multiplicative gating requires gating_out == 8");
  }
}

std::vector<ParamSlice> param_layout(const Architecture& a) {
  std::vector<ParamSlice> layout;
  layout.reserve(kSliceCount);
  std::size_t offset = 0;
  auto add = [&](const char* name, int rows, int cols, char kind) {
    const std::size_t size =
        static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    layout.push_back({name, offset, size, rows, cols, kind});
    offset += size;
  };
  add("gating.w1", a.gating_hidden, 8, 'w');
  add("gating.b1", a.gating_hidden, 1, 'b');
  add("gating.w2", a.gating_out, a.gating_hidden, 'w');
  add("gating.b2", a.gating_out, 1, 'b');
  add("other.w1", a.other_hidden, 7, 'w');
  add("other.b1", a.other_hidden, 1, 'b');
  add("other.ln_gain", a.other_hidden, 1, 'g');
  add("other.ln_offset", a.other_hidden, 1, 'o');
  add("other.w2", a.other_out, a.other_hidden, 'w');
  add("other.b2", a.other_out, 1, 'b');
  add("freq.w1", a.freq_hidden, 1, 'w');
  add("freq.b1", a.freq_hidden, 1, 'b');
  add("freq.w2", a.freq_out, a.freq_hidden, 'w');
  add("freq.b2", a.freq_out, 1, 'b');
  add("head.w1", a.head_hidden1, a.concat_width(), 'w');
  add("head.b1", a.head_hidden1, 1, 'b');
  add("head.ln_gain", a.head_hidden1, 1, 'g');
  add("head.ln_offset", a.head_hidden1, 1, 'o');
  add("head.w2", a.head_hidden2, a.head_hidden1, 'w');
  add("head.b2", a.head_hidden2, 1, 'b');
  add("head.w3", 3, a.head_hidden2, 'w');
  add("head.b3", 3, 1, 'b');
  return layout;
}

std::int64_t Architecture::param_count() const {
  std::int64_t total = 0;
  for (const ParamSlice& s : param_layout(*this)) {
    total += static_cast<std::int64_t>(s.size);
  }
  return total;
}

ModelParams init_params(const Architecture& a, std::uint64_t seed) {
  a.validate();
  ModelParams p;
  p.arch = a;
  const auto layout = param_layout(a);
  p.values.assign(layout.back().offset + layout.back().size, 0.0);
  Rng rng(seed);
  for (const ParamSlice& s : layout) {
    if (s.kind == 'w') {
      const double hw = std::sqrt(6.0 / (s.rows + s.cols));
      for (std::size_t i = 0; i < s.size; ++i) {
        p.values[s.offset + i] = rng.uniform(-hw, hw);
      }
    } else if (s.kind == 'g') {
      for (std::size_t i = 0; i < s.size; ++i) p.values[s.offset + i] = 1.0;
    }
    // biases and ln offsets stay zero
  }
  return p;
}

namespace {
void forward_impl(const ModelParams& p, const Offsets& off,
                  const std::array<double, 8>& x, Mode mode, Rng* rng,
                  ForwardCache& cache) {
  const Architecture& a = p.arch;
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("forward: non-finite input feature");
    }
  }
  const bool train = mode == Mode::kTrain;
  if (train && a.dropout_rate > 0.0 && rng == nullptr) {
    throw std::invalid_argument("forward: train mode requires an rng");
  }
  const double* v = p.values.data();
  resize_cache(cache, a);
  cache.x = x;
  cache.train_mode = train;

  // gating branch
  matvec(v + off.at[kGW1], v + off.at[kGB1], x.data(), a.gating_hidden, 8,
         cache.g_z1.data());
  {
    std::vector<double>& z1 = cache.g_z1;
    double a1[kMaxWidth];
    for (int j = 0; j < a.gating_hidden; ++j) a1[j] = relu(z1[j]);
    double z2[kMaxWidth];
    matvec(v + off.at[kGW2], v + off.at[kGB2], a1, a.gating_out,
           a.gating_hidden, z2);
    for (int j = 0; j < a.gating_out; ++j) {
      cache.g_out[j] = 1.0 / (1.0 + std::exp(-z2[j]));
    }
  }

  // other branch over features 1..7
  if (a.use_other_branch) {
    matvec(v + off.at[kOW1], v + off.at[kOB1], x.data() + 1, a.other_hidden, 7,
           cache.o_z1.data());
    double act[kMaxWidth];
    for (int j = 0; j < a.other_hidden; ++j) act[j] = relu(cache.o_z1[j]);
    double ln_out[kMaxWidth];
    layer_norm_forward(act, a.other_hidden, v + off.at[kOLnG],
                       v + off.at[kOLnB], cache.o_xhat.data(), ln_out,
                       &cache.o_inv_sigma);
    if (train) {
      dropout_mask(*rng, a.dropout_rate, a.other_hidden, cache.o_mask.data());
    } else {
      for (int j = 0; j < a.other_hidden; ++j) cache.o_mask[j] = 1.0;
    }
    for (int j = 0; j < a.other_hidden; ++j) {
      cache.o_dropped[j] = ln_out[j] * cache.o_mask[j];
    }
    matvec(v + off.at[kOW2], v + off.at[kOB2], cache.o_dropped.data(),
           a.other_out, a.other_hidden, cache.o_z2.data());
  }

  // frequency branch over feature 0
  if (a.use_freq_branch) {
    for (int j = 0; j < a.freq_hidden; ++j) {
      cache.f_z1[j] = v[off.at[kFW1] + j] * x[0] + v[off.at[kFB1] + j];
    }
    double a1[kMaxWidth];
    for (int j = 0; j < a.freq_hidden; ++j) a1[j] = relu(cache.f_z1[j]);
    matvec(v + off.at[kFW2], v + off.at[kFB2], a1, a.freq_out, a.freq_hidden,
           cache.f_z2.data());
  }

  // concat: gating | other | freq
  {
    double* cat = cache.concat.data();
    if (a.multiplicative_gating) {
      for (int j = 0; j < a.gating_out; ++j) cat[j] = cache.g_out[j] * x[j];
    } else {
      for (int j = 0; j < a.gating_out; ++j) cat[j] = cache.g_out[j];
    }
    cat += a.gating_out;
    for (int j = 0; j < a.other_out; ++j) {
      cat[j] = a.use_other_branch ? relu(cache.o_z2[j]) : 0.0;
    }
    cat += a.other_out;
    for (int j = 0; j < a.freq_out; ++j) {
      cat[j] = a.use_freq_branch ? relu(cache.f_z2[j]) : 0.0;
    }
  }

  // head
  matvec(v + off.at[kHW1], v + off.at[kHB1], cache.concat.data(),
         a.head_hidden1, a.concat_width(), cache.h_z1.data());
  {
    double act[kMaxWidth];
    for (int j = 0; j < a.head_hidden1; ++j) act[j] = relu(cache.h_z1[j]);
    double ln_out[kMaxWidth];
    layer_norm_forward(act, a.head_hidden1, v + off.at[kHLnG],
                       v + off.at[kHLnB], cache.h_xhat.data(), ln_out,
                       &cache.h_inv_sigma);
    if (train) {
      dropout_mask(*rng, a.dropout_rate, a.head_hidden1, cache.h_mask.data());
    } else {
      for (int j = 0; j < a.head_hidden1; ++j) cache.h_mask[j] = 1.0;
    }
    for (int j = 0; j < a.head_hidden1; ++j) {
      cache.h_dropped[j] = ln_out[j] * cache.h_mask[j];
    }
  }
  matvec(v + off.at[kHW2], v + off.at[kHB2], cache.h_dropped.data(),
         a.head_hidden2, a.head_hidden1, cache.h_z2.data());
  {
    double a2[kMaxWidth];
    for (int j = 0; j < a.head_hidden2; ++j) a2[j] = relu(cache.h_z2[j]);
    double z3[3];
    matvec(v + off.at[kHW3], v + off.at[kHB3], a2, 3, a.head_hidden2, z3);
    double m = z3[0];
    if (z3[1] > m) m = z3[1];
    if (z3[2] > m) m = z3[2];
    const double e0 = std::exp(z3[0] - m);
    const double e1 = std::exp(z3[1] - m);
    const double e2 = std::exp(z3[2] - m);
    const double inv = 1.0 / (e0 + e1 + e2);
    cache.y = {e0 * inv, e1 * inv, e2 * inv};
  }
}

Offsets checked_offsets(const ModelParams& p) {
  const Offsets off = make_offsets(p.arch);
  if (p.values.size() != off.total) {
    throw std::invalid_argument("parameter vector size does not match architecture");
  }
  return off;
}
}  // namespace

void forward(const ModelParams& p, const std::array<double, 8>& x, Mode mode,
             Rng* rng, ForwardCache& cache) {
  forward_impl(p, checked_offsets(p), x, mode, rng, cache);
}

ResponseTriple forward(const ModelParams& p, const std::array<double, 8>& x,
                       Mode mode, Rng* rng) {
  ForwardCache cache;
  forward(p, x, mode, rng, cache);
  return {cache.y[0], cache.y[1], cache.y[2]};
}

void forward_batch(const ModelParams& p, const std::vector<ScaledSample>& batch,
                   Mode mode, Rng* rng, std::vector<ForwardCache>& caches,
                   std::vector<Triple>& preds) {
  const Offsets off = checked_offsets(p);
  if (caches.size() < batch.size()) caches.resize(batch.size());
  preds.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_impl(p, off, batch[i].x, mode, rng, caches[i]);
    preds[i] = caches[i].y;
  }
}

double backward(const ModelParams& p, const std::vector<ForwardCache>& caches,
                const std::vector<Triple>& preds,
                const std::vector<Triple>& targets, const LossConfig& loss_cfg,
                std::vector<double>& grad) {
  if (caches.size() < preds.size()) {
    throw std::invalid_argument("backward: cache/prediction size mismatch");
  }
  const Offsets off = checked_offsets(p);
  grad.assign(off.total, 0.0);
  std::vector<Triple> dpred;
  const double loss = hubcor_loss(preds, targets, loss_cfg, &dpred);
  Scratch scratch;
  scratch.resize(p.arch);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    backward_sample(p, off, caches[i], dpred[i], grad.data(), scratch);
  }
  return loss;
}

double loss_and_grad(const ModelParams& p, const std::vector<ScaledSample>& batch,
                     const LossConfig& loss_cfg, Mode mode, Rng* rng,
                     GradWorkspace& ws) {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  forward_batch(p, batch, mode, rng, ws.caches, ws.preds);
  std::vector<Triple> targets(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = batch[i].y;
  return backward(p, ws.caches, ws.preds, targets, loss_cfg, ws.grad);
}

double batch_loss(const ModelParams& p, const std::vector<ScaledSample>& batch,
                  const LossConfig& loss_cfg) {
  if (batch.empty()) throw std::invalid_argument("batch_loss: empty batch");
  const Offsets off = checked_offsets(p);
  std::vector<Triple> preds(batch.size()), targets(batch.size());
  ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_impl(p, off, batch[i].x, Mode::kEval, nullptr, cache);
    preds[i] = cache.y;
    targets[i] = batch[i].y;
  }
  return hubcor_loss(preds, targets, loss_cfg, nullptr);
}

ResponseTriple predict(const ModelParams& p, const std::array<double, 8>& x) {
  return forward(p, x, Mode::kEval, nullptr);
}

std::vector<Triple> predict_batch(const ModelParams& p,
                                  const std::vector<std::array<double, 8>>& xs) {
  const Offsets off = checked_offsets(p);
  std::vector<Triple> out(xs.size());
  ForwardCache cache;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    forward_impl(p, off, xs[i], Mode::kEval, nullptr, cache);
    out[i] = cache.y;
  }
  return out;
}

std::vector<Triple> predict_batch(const ModelParams& p,
                                  const std::vector<ScaledSample>& batch) {
  const Offsets off = checked_offsets(p);
  std::vector<Triple> out(batch.size());
  ForwardCache cache;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    forward_impl(p, off, batch[i].x, Mode::kEval, nullptr, cache);
    out[i] = cache.y;
  }
  return out;
}

}  // namespace metafap
