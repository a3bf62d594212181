// SPDX-License-Identifier: Apache-2.0

#include "oass/cam_core.hpp"

#include <algorithm>
#include <cmath>

#include "oass/common.hpp"

namespace oass {

namespace {

inline int ceil_div(int a, int b) { return (a + b - 1) / b; }

// 3x3 stride-2 pad-1 convolution. Output is ceil(h/2) x ceil(w/2).
void conv3x3s2_forward(const Tensor& in, const double* w, const double* b,
                       int out_ch, Tensor& out) {
  const int ih = in.h, iw = in.w, ic = in.c;
  const int oh = ceil_div(ih, 2), ow = ceil_div(iw, 2);
  out = Tensor(out_ch, oh, ow);
  for (int oc = 0; oc < out_ch; ++oc) {
    const double bias = b[oc];
    for (int oy = 0; oy < oh; ++oy) {
      double* orow = out.row(oc, oy);
      for (int ox = 0; ox < ow; ++ox) orow[ox] = bias;
      for (int ci = 0; ci < ic; ++ci) {
        const double* wk = w + (static_cast<size_t>(oc) * ic + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= ih) continue;
          const double* irow = in.row(ci, iy);
          const double w0 = wk[ky * 3 + 0], w1 = wk[ky * 3 + 1], w2 = wk[ky * 3 + 2];
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = 2 * ox - 1;
            double acc = 0.0;
            if (ix >= 0) acc += w0 * irow[ix];
            acc += w1 * irow[ix + 1];
            if (ix + 2 < iw) acc += w2 * irow[ix + 2];
            orow[ox] += acc;
          }
        }
      }
    }
  }
}

// Backward of conv3x3s2 + ReLU fused at the caller: grad_out already gated.
void conv3x3s2_backward(const Tensor& in, const Tensor& grad_out,
                        const double* w, double* gw, double* gb,
                        Tensor* grad_in, int out_ch) {
  const int ih = in.h, iw = in.w, ic = in.c;
  const int oh = grad_out.h, ow = grad_out.w;
  for (int oc = 0; oc < out_ch; ++oc) {
    double gbias = 0.0;
    for (int oy = 0; oy < oh; ++oy) {
      const double* grow = grad_out.row(oc, oy);
      for (int ox = 0; ox < ow; ++ox) gbias += grow[ox];
      for (int ci = 0; ci < ic; ++ci) {
        double* gwk = gw + (static_cast<size_t>(oc) * ic + ci) * 9;
        const double* wk = w + (static_cast<size_t>(oc) * ic + ci) * 9;
        for (int ky = 0; ky < 3; ++ky) {
          const int iy = 2 * oy + ky - 1;
          if (iy < 0 || iy >= ih) continue;
          const double* irow = in.row(ci, iy);
          double* girow = grad_in ? grad_in->row(ci, iy) : nullptr;
          for (int kx = 0; kx < 3; ++kx) {
            double gacc = 0.0;
            const double wv = wk[ky * 3 + kx];
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = 2 * ox + kx - 1;
              if (ix < 0 || ix >= iw) continue;
              const double g = grow[ox];
              gacc += g * irow[ix];
              if (girow) girow[ix] += g * wv;
            }
            gwk[ky * 3 + kx] += gacc;
          }
        }
      }
    }
    gb[oc] += gbias;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// TinyCnnEncoder

TinyCnnEncoder::TinyCnnEncoder(int in_channels, int depth, int stride) {
  require(depth >= 1, "tiny_cnn: depth must be >= 1");
  int n_stages = 0;
  for (int s = stride; s > 1; s /= 2) {
    require(s % 2 == 0, "tiny_cnn: stride must be a power of two");
    ++n_stages;
  }
  require(n_stages >= 1, "tiny_cnn: stride must be >= 2");
  stride_ = stride;

  int prev = in_channels;
  int off = 0;
  for (int i = 0; i < n_stages; ++i) {
    int out_ch = std::max(1, depth * (i + 1) / n_stages);
    if (i == n_stages - 1) out_ch = depth;
    Stage st{prev, out_ch, off, 0};
    off += out_ch * prev * 9;
    st.b_off = off;
    off += out_ch;
    stages_.push_back(st);
    prev = out_ch;
  }
  param_count_ = off;
}

void TinyCnnEncoder::init_params(std::span<double> p, Rng& rng) const {
  require(static_cast<int>(p.size()) >= param_count_, "tiny_cnn: param span too small");
  for (const Stage& st : stages_) {
    const double stddev = std::sqrt(2.0 / (st.in_ch * 9));
    for (int i = 0; i < st.out_ch * st.in_ch * 9; ++i)
      p[st.w_off + i] = rng.normal(0.0, stddev);
    for (int i = 0; i < st.out_ch; ++i) p[st.b_off + i] = 0.0;
  }
}

Tensor TinyCnnEncoder::forward(const Tensor& image, std::span<const double> p,
                               EncoderTrace* trace) const {
  Tensor cur = image;
  if (trace) {
    trace->acts.clear();
    trace->acts.push_back(cur);
  }
  for (const Stage& st : stages_) {
    Tensor out;
    conv3x3s2_forward(cur, p.data() + st.w_off, p.data() + st.b_off, st.out_ch, out);
    for (double& x : out.v) x = x > 0.0 ? x : 0.0;
    cur = std::move(out);
    if (trace) trace->acts.push_back(cur);
  }
  return cur;
}

void TinyCnnEncoder::backward(const EncoderTrace& trace, const Tensor& grad_out,
                              std::span<const double> p,
                              std::span<double> grad_p) const {
  require(trace.acts.size() == stages_.size() + 1, "tiny_cnn: trace size mismatch");
  Tensor g = grad_out;
  for (int i = static_cast<int>(stages_.size()) - 1; i >= 0; --i) {
    const Stage& st = stages_[i];
    const Tensor& act = trace.acts[i + 1];
    require(g.same_shape(act), "tiny_cnn: gradient shape mismatch");
    // ReLU gate
    for (size_t j = 0; j < g.v.size(); ++j)
      if (act.v[j] <= 0.0) g.v[j] = 0.0;
    const Tensor& in = trace.acts[i];
    Tensor grad_in;
    Tensor* gin = nullptr;
    if (i > 0) {
      grad_in = Tensor(in.c, in.h, in.w);
      gin = &grad_in;
    }
    conv3x3s2_backward(in, g, p.data() + st.w_off, grad_p.data() + st.w_off,
                       grad_p.data() + st.b_off, gin, st.out_ch);
    if (i > 0) g = std::move(grad_in);
  }
}

Tensor IdentityEncoder::forward(const Tensor& image, std::span<const double>,
                                EncoderTrace* trace) const {
  if (trace) {
    trace->acts.clear();
    trace->acts.push_back(image);
  }
  return image;
}

// ---------------------------------------------------------------------------
// Model

ParamLayout ParamLayout::build(int encoder_count, int num_classes, int depth) {
  ParamLayout l;
  l.encoder_count = encoder_count;
  l.num_classes = num_classes;
  l.depth = depth;
  int off = encoder_count;
  l.head_w = off;
  off += num_classes * depth;
  l.head_b = off;
  off += num_classes;
  l.csi_proj = off;
  off += num_classes * depth;
  l.csi_mixer = off;
  off += num_classes * num_classes;
  l.csi_bias = off;
  off += num_classes;
  l.total = off;
  return l;
}

std::shared_ptr<const Encoder> make_encoder(const ModelConfig& cfg) {
  if (cfg.encoder == "tiny_cnn")
    return std::make_shared<TinyCnnEncoder>(3, cfg.depth, cfg.stride);
  if (cfg.encoder == "identity") return std::make_shared<IdentityEncoder>(3);
  throw ConfigError("unknown encoder: " + cfg.encoder);
}

Model Model::create(const ModelConfig& cfg, Rng& rng) {
  Model m;
  m.encoder = make_encoder(cfg);
  m.num_classes = cfg.num_classes;
  m.csi_enabled = cfg.csi;
  m.layout = ParamLayout::build(m.encoder->param_count(), cfg.num_classes,
                                m.encoder->out_depth());
  m.params.assign(m.layout.total, 0.0);
  m.encoder->init_params(m.encoder_params(), rng);
  const int C = cfg.num_classes, D = m.layout.depth;
  for (int i = 0; i < C * D; ++i)
    m.params[m.layout.head_w + i] = rng.normal(0.0, 0.01);
  for (int i = 0; i < C * D; ++i)
    m.params[m.layout.csi_proj + i] = rng.normal(0.0, 0.01);
  // mixer starts as identity so CSI logits begin as the per-class responses
  for (int i = 0; i < C; ++i) m.params[m.layout.csi_mixer + i * C + i] = 1.0;
  return m;
}

// ---------------------------------------------------------------------------
// Operations

FeatureMap extract_features_with(const Model& model, const ImageTensor& image,
                                 std::span<const double> encoder_params,
                                 EncoderTrace* trace) {
  require(image.channels() == 3, "extract_features: expected a 3-channel image");
  require(image.data.all_finite(), "extract_features: non-finite image values");
  const int mn = model.encoder->min_input();
  if (image.height() < mn || image.width() < mn)
    throw ShapeError(strf("extract_features: image %dx%d below encoder minimum %d",
                          image.width(), image.height(), mn));
  FeatureMap f;
  f.data = model.encoder->forward(image.data, encoder_params, trace);
  f.stride = model.encoder->stride();
  return f;
}

FeatureMap extract_features(const Model& model, const ImageTensor& image,
                            EncoderTrace* trace) {
  return extract_features_with(model, image, model.encoder_params(), trace);
}

Tensor project_cams(const FeatureMap& features, const Model& model) {
  const int D = features.depth();
  require(D == model.layout.depth, "project_cams: feature depth mismatch");
  const int C = model.num_classes, h = features.data.h, w = features.data.w;
  Tensor cams(C, h, w);
  const size_t plane = static_cast<size_t>(h) * w;
  for (int c = 0; c < C; ++c) {
    std::span<const double> wc = model.head_w(c);
    double* dst = cams.v.data() + static_cast<size_t>(c) * plane;
    for (int d = 0; d < D; ++d) {
      const double wv = wc[d];
      const double* src = features.data.v.data() + static_cast<size_t>(d) * plane;
      for (size_t i = 0; i < plane; ++i) dst[i] += wv * src[i];
    }
  }
  return cams;
}

ClassActivationMaps compute_cams(const FeatureMap& features, const Model& model) {
  ClassActivationMaps out;
  out.data = project_cams(features, model);
  for (double& x : out.data.v) x = x > 0.0 ? x : 0.0;
  return out;
}

Map2D merge_cams(const ClassActivationMaps& cams) {
  require(cams.num_classes() >= 1, "merge_cams: need at least one channel");
  const int h = cams.data.h, w = cams.data.w;
  Map2D m(h, w);
  const size_t plane = static_cast<size_t>(h) * w;
  std::copy(cams.data.v.begin(), cams.data.v.begin() + plane, m.v.begin());
  for (int c = 1; c < cams.num_classes(); ++c) {
    const double* src = cams.data.v.data() + static_cast<size_t>(c) * plane;
    for (size_t i = 0; i < plane; ++i)
      if (src[i] > m.v[i]) m.v[i] = src[i];
  }
  return m;
}

std::vector<double> classify(const FeatureMap& features, const Model& model) {
  const int D = features.depth();
  require(D == model.layout.depth, "classify: feature depth mismatch");
  std::vector<double> pooled = global_average_pool(features.data);
  std::vector<double> logits(model.num_classes, 0.0);
  for (int c = 0; c < model.num_classes; ++c) {
    std::span<const double> wc = model.head_w(c);
    double z = model.head_b(c);
    for (int d = 0; d < D; ++d) z += wc[d] * pooled[d];
    logits[c] = z;
  }
  return logits;
}

}  // namespace oass
