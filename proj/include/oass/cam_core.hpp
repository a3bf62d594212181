// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "oass/rng.hpp"
#include "oass/tensor.hpp"

namespace oass {

// ---------------------------------------------------------------------------
// Domain types

// RGB image, values expected in [0, 1].
struct ImageTensor {
  Tensor data;  // channels x H x W

  int channels() const { return data.c; }
  int height() const { return data.h; }
  int width() const { return data.w; }
};

// Encoder output activation A with the spatial downscale factor s,
// so data.h == ceil(H / s) for an H-pixel-tall input.
struct FeatureMap {
  Tensor data;  // D x h x w
  int stride = 1;

  int depth() const { return data.c; }
};

// Per-class spatial response maps A_c, clamped to be non-negative.
struct ClassActivationMaps {
  Tensor data;  // C x h x w

  int num_classes() const { return data.c; }
};

struct LabelVector {
  std::vector<uint8_t> bits;

  int size() const { return static_cast<int>(bits.size()); }
  bool positive(int c) const { return bits[c] != 0; }
  int num_positive() const {
    int n = 0;
    for (uint8_t b : bits) n += (b != 0);
    return n;
  }
};

// ---------------------------------------------------------------------------
// Encoder abstraction

// Intermediate activations kept for the backward pass. acts[0] is the input
// image, acts[i] the post-activation output of stage i.
struct EncoderTrace {
  std::vector<Tensor> acts;
};

// Stateless architecture descriptor. Parameters live in a flat vector owned
// by the model; the encoder only knows how to interpret and use them, which
// keeps the EMA teacher a plain parameter copy.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual const char* name() const = 0;
  virtual int stride() const = 0;
  virtual int out_depth() const = 0;
  virtual int min_input() const = 0;
  virtual int param_count() const = 0;
  virtual void init_params(std::span<double> p, Rng& rng) const = 0;
  virtual Tensor forward(const Tensor& image, std::span<const double> p,
                         EncoderTrace* trace = nullptr) const = 0;
  virtual void backward(const EncoderTrace& trace, const Tensor& grad_out,
                        std::span<const double> p,
                        std::span<double> grad_p) const = 0;
};

// Stack of 3x3 stride-2 conv + ReLU stages; log2(stride) stages, channel
// count ramping linearly up to `depth`.
class TinyCnnEncoder final : public Encoder {
 public:
  TinyCnnEncoder(int in_channels, int depth, int stride);

  const char* name() const override { return "tiny_cnn"; }
  int stride() const override { return stride_; }
  int out_depth() const override { return stages_.back().out_ch; }
  int min_input() const override { return stride_; }
  int param_count() const override { return param_count_; }
  void init_params(std::span<double> p, Rng& rng) const override;
  Tensor forward(const Tensor& image, std::span<const double> p,
                 EncoderTrace* trace) const override;
  void backward(const EncoderTrace& trace, const Tensor& grad_out,
                std::span<const double> p,
                std::span<double> grad_p) const override;

 private:
  struct Stage {
    int in_ch, out_ch;
    int w_off, b_off;  // offsets into the flat parameter vector
  };
  std::vector<Stage> stages_;
  int stride_ = 0;
  int param_count_ = 0;
};

// Features are the image itself; used by round-trip tests and debugging.
class IdentityEncoder final : public Encoder {
 public:
  explicit IdentityEncoder(int channels = 3) : channels_(channels) {}

  const char* name() const override { return "identity"; }
  int stride() const override { return 1; }
  int out_depth() const override { return channels_; }
  int min_input() const override { return 1; }
  int param_count() const override { return 0; }
  void init_params(std::span<double>, Rng&) const override {}
  Tensor forward(const Tensor& image, std::span<const double>,
                 EncoderTrace* trace) const override;
  void backward(const EncoderTrace&, const Tensor&, std::span<const double>,
                std::span<double>) const override {}

 private:
  int channels_ = 3;
};

// ---------------------------------------------------------------------------
// Model = encoder + multi-label head (+ CSI head parameters)

struct ModelConfig {
  std::string encoder = "tiny_cnn";
  int depth = 64;
  int stride = 16;
  int num_classes = 20;
  bool csi = false;
};

// Offsets of each parameter group within the flat vector.
struct ParamLayout {
  int encoder_count = 0;
  int num_classes = 0, depth = 0;
  int head_w = 0, head_b = 0;
  int csi_proj = 0, csi_mixer = 0, csi_bias = 0;
  int total = 0;

  static ParamLayout build(int encoder_count, int num_classes, int depth);
};

struct Model {
  std::shared_ptr<const Encoder> encoder;
  int num_classes = 0;
  bool csi_enabled = false;
  ParamLayout layout;
  std::vector<double> params;  // single flat vector: optimizer/EMA friendly

  static Model create(const ModelConfig& cfg, Rng& rng);

  std::span<const double> encoder_params() const {
    return {params.data(), static_cast<size_t>(layout.encoder_count)};
  }
  std::span<double> encoder_params() {
    return {params.data(), static_cast<size_t>(layout.encoder_count)};
  }
  // per-class head weight vector w_c (length D)
  std::span<const double> head_w(int c) const {
    return {params.data() + layout.head_w + static_cast<size_t>(c) * layout.depth,
            static_cast<size_t>(layout.depth)};
  }
  double head_b(int c) const { return params[layout.head_b + c]; }
  std::span<const double> csi_proj(int c) const {
    return {params.data() + layout.csi_proj + static_cast<size_t>(c) * layout.depth,
            static_cast<size_t>(layout.depth)};
  }
  // C x C mixer, row-major
  const double* csi_mixer() const { return params.data() + layout.csi_mixer; }
  const double* csi_bias() const { return params.data() + layout.csi_bias; }
};

std::shared_ptr<const Encoder> make_encoder(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Operations

// Deterministic evaluation-mode feature extraction. Rejects images below the
// encoder's minimum spatial size.
FeatureMap extract_features(const Model& model, const ImageTensor& image,
                            EncoderTrace* trace = nullptr);

// Same, but with explicit encoder parameters (the EMA teacher path).
FeatureMap extract_features_with(const Model& model, const ImageTensor& image,
                                 std::span<const double> encoder_params,
                                 EncoderTrace* trace = nullptr);

// Raw per-class projection <w_c, A[:, i, j]>, before the non-negativity clamp.
Tensor project_cams(const FeatureMap& features, const Model& model);

// Standard CAM: projection followed by clamping negatives to zero. The head
// bias is excluded so peak locations are not shifted uniformly.
ClassActivationMaps compute_cams(const FeatureMap& features, const Model& model);

// Pixel-wise max over channels.
Map2D merge_cams(const ClassActivationMaps& cams);

// logits[c] = <w_c, GAP(A)> + b_c. Equals the spatial mean of the raw CAM
// channel plus bias.
std::vector<double> classify(const FeatureMap& features, const Model& model);

}  // namespace oass
