#pragma once

// Layer primitives: dilated causal convolution, relu, weight normalization,
// spatial dropout, dense, global average pooling, softmax cross-entropy.
// Each op has a pure forward function and, where the training path needs it,
// a backward kernel computing input/parameter gradients from the output
// gradient. Backward kernels are exercised directly by finite-difference
// tests and indirectly through the autodiff graph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "tcdetect/errors.hpp"
#include "tcdetect/rng.hpp"
#include "tcdetect/tensor.hpp"

namespace tcdetect {

enum class Mode { kTrain, kEval };

// Dilated causal convolution weights: [out_channels, in_channels, K].
template <typename S>
struct ConvKernel {
  Tensor<S> weights;
  std::size_t dilation = 1;

  ConvKernel(Tensor<S> w, std::size_t d) : weights(std::move(w)), dilation(d) {
    if (weights.rank() != 3) {
      throw ShapeError("conv kernel must be [out_channels, in_channels, K], got " +
                       shape_to_string(weights.shape()));
    }
    if (dilation < 1) throw ParameterError("conv dilation must be >= 1");
  }

  std::size_t out_channels() const { return weights.extent(0); }
  std::size_t in_channels() const { return weights.extent(1); }
  std::size_t kernel_size() const { return weights.extent(2); }
};

namespace ops {

// y[n,o,t] = sum_c sum_k x[n,c,t - d*k] * w[o,c,k], x read as 0 left of t=0.
// w[0] multiplies the current step; larger k reaches further into the past.
template <typename S>
Tensor<S> conv1d_causal_batch(const Tensor<S>& x, const Tensor<S>& w, std::size_t dilation) {
  if (x.rank() != 3 || w.rank() != 3) {
    throw ShapeError("conv expects x [N,C,T] and w [O,C,K]");
  }
  const std::size_t n = x.extent(0), c_in = x.extent(1), t_len = x.extent(2);
  const std::size_t c_out = w.extent(0), k_len = w.extent(2);
  if (w.extent(1) != c_in) {
    throw ShapeError("conv channel mismatch: input has " + std::to_string(c_in) +
                     " channels, kernel expects " + std::to_string(w.extent(1)));
  }
  Tensor<S> y({n, c_out, t_len});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < c_out; ++o) {
      S* yrow = y.data() + (b * c_out + o) * t_len;
      for (std::size_t c = 0; c < c_in; ++c) {
        const S* xrow = x.data() + (b * c_in + c) * t_len;
        const S* wrow = w.data() + (o * c_in + c) * k_len;
        for (std::size_t k = 0; k < k_len; ++k) {
          const std::size_t back = dilation * k;
          if (back >= t_len) break;  // taps entirely in the zero padding
          const S wk = wrow[k];
          for (std::size_t t = back; t < t_len; ++t) {
            yrow[t] += xrow[t - back] * wk;
          }
        }
      }
    }
  }
  return y;
}

// Gradients of conv1d_causal_batch w.r.t. input and weights.
template <typename S>
void conv1d_causal_backward(const Tensor<S>& x, const Tensor<S>& w, std::size_t dilation,
                            const Tensor<S>& grad_y, Tensor<S>& grad_x, Tensor<S>& grad_w) {
  const std::size_t n = x.extent(0), c_in = x.extent(1), t_len = x.extent(2);
  const std::size_t c_out = w.extent(0), k_len = w.extent(2);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t o = 0; o < c_out; ++o) {
      const S* grow = grad_y.data() + (b * c_out + o) * t_len;
      for (std::size_t c = 0; c < c_in; ++c) {
        const S* xrow = x.data() + (b * c_in + c) * t_len;
        S* gxrow = grad_x.data() + (b * c_in + c) * t_len;
        const S* wrow = w.data() + (o * c_in + c) * k_len;
        S* gwrow = grad_w.data() + (o * c_in + c) * k_len;
        for (std::size_t k = 0; k < k_len; ++k) {
          const std::size_t back = dilation * k;
          if (back >= t_len) break;
          const S wk = wrow[k];
          S acc = S(0);
          for (std::size_t t = back; t < t_len; ++t) {
            gxrow[t - back] += grow[t] * wk;
            acc += grow[t] * xrow[t - back];
          }
          gwrow[k] += acc;
        }
      }
    }
  }
}

// Single-sample form of the dilated causal convolution: x [C,T] -> [C_out,T].
template <typename S>
Tensor<S> conv1d_dilated_causal(const Tensor<S>& x, const ConvKernel<S>& kernel) {
  if (x.rank() != 2) throw ShapeError("conv input must be [C,T], got " + shape_to_string(x.shape()));
  Tensor<S> batched({1, x.extent(0), x.extent(1)}, std::vector<S>(x.values()));
  Tensor<S> y = conv1d_causal_batch(batched, kernel.weights, kernel.dilation);
  return Tensor<S>({kernel.out_channels(), x.extent(1)}, std::vector<S>(y.values()));
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > S(0) ? x[i] : S(0);
  return y;
}

template <typename S>
Tensor<S> tanh_op(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
  return y;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
  Tensor<S> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = S(1) / (S(1) + std::exp(-x[i]));
  return y;
}

// L2 weight normalization, applied per output-channel filter (slices along
// axis 0): w_hat = gain * w / ||w||_2. A filter with zero norm has no
// direction to rescale and is rejected.
template <typename S>
Tensor<S> weight_normalize(const Tensor<S>& w, S gain = S(1)) {
  const std::size_t filters = w.rank() == 1 ? 1 : w.extent(0);
  const std::size_t stride = w.size() / filters;
  Tensor<S> out(w.shape());
  for (std::size_t f = 0; f < filters; ++f) {
    const S* src = w.data() + f * stride;
    S* dst = out.data() + f * stride;
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < stride; ++i) norm_sq += double(src[i]) * double(src[i]);
    if (norm_sq == 0.0) {
      throw ParameterError("weight_normalize: filter " + std::to_string(f) + " has zero L2 norm");
    }
    const S inv = static_cast<S>(gain / std::sqrt(norm_sq));
    for (std::size_t i = 0; i < stride; ++i) dst[i] = src[i] * inv;
  }
  return out;
}

// Layer-internal variant: a zero filter maps to a zero filter instead of
// raising, so zero-initialized compositions stay well-defined.
template <typename S>
Tensor<S> weight_norm_safe(const Tensor<S>& w) {
  const std::size_t filters = w.rank() == 1 ? 1 : w.extent(0);
  const std::size_t stride = w.size() / filters;
  Tensor<S> out(w.shape());
  for (std::size_t f = 0; f < filters; ++f) {
    const S* src = w.data() + f * stride;
    S* dst = out.data() + f * stride;
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < stride; ++i) norm_sq += double(src[i]) * double(src[i]);
    if (norm_sq == 0.0) continue;
    const S inv = static_cast<S>(1.0 / std::sqrt(norm_sq));
    for (std::size_t i = 0; i < stride; ++i) dst[i] = src[i] * inv;
  }
  return out;
}

// d(w_hat)/dv pullback for the safe normalization with gain 1:
//   grad_v = (grad_w - (grad_w . w_hat) w_hat) / ||v||
template <typename S>
Tensor<S> weight_norm_backward(const Tensor<S>& v, const Tensor<S>& grad_out) {
  const std::size_t filters = v.rank() == 1 ? 1 : v.extent(0);
  const std::size_t stride = v.size() / filters;
  Tensor<S> grad_v(v.shape());
  for (std::size_t f = 0; f < filters; ++f) {
    const S* src = v.data() + f * stride;
    const S* g = grad_out.data() + f * stride;
    S* out = grad_v.data() + f * stride;
    double norm_sq = 0.0;
    for (std::size_t i = 0; i < stride; ++i) norm_sq += double(src[i]) * double(src[i]);
    if (norm_sq == 0.0) continue;  // subgradient 0 at the degenerate point
    const double norm = std::sqrt(norm_sq);
    double dot = 0.0;
    for (std::size_t i = 0; i < stride; ++i) dot += double(g[i]) * double(src[i]) / norm;
    for (std::size_t i = 0; i < stride; ++i) {
      out[i] = static_cast<S>((double(g[i]) - dot * double(src[i]) / norm) / norm);
    }
  }
  return grad_v;
}

// Channel mask for spatial dropout on a batch [N,C,T]: each (sample, channel)
// pair is zeroed independently with probability p; survivors carry the
// inverted scale 1/(1-p) so eval mode is an exact identity.
template <typename S>
Tensor<S> spatial_dropout_mask(std::size_t n, std::size_t channels, double p, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("spatial_dropout: p must be in [0,1), got " + std::to_string(p));
  }
  Tensor<S> mask({n, channels});
  Rng rng(seed);
  const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.next_double() < p ? S(0) : keep_scale;
  }
  return mask;
}

template <typename S>
Tensor<S> apply_channel_mask(const Tensor<S>& x, const Tensor<S>& mask) {
  const std::size_t n = x.extent(0), c = x.extent(1), t_len = x.extent(2);
  Tensor<S> y(x.shape());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const S m = mask.at(b, ch);
      const S* src = x.data() + (b * c + ch) * t_len;
      S* dst = y.data() + (b * c + ch) * t_len;
      for (std::size_t t = 0; t < t_len; ++t) dst[t] = src[t] * m;
    }
  }
  return y;
}

// Spatial dropout on one sample [C,T].
template <typename S>
Tensor<S> spatial_dropout(const Tensor<S>& x, double p, Mode mode, std::uint64_t seed) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("spatial_dropout: p must be in [0,1), got " + std::to_string(p));
  }
  if (x.rank() != 2) throw ShapeError("spatial_dropout input must be [C,T]");
  if (mode == Mode::kEval || p == 0.0) return x;
  Tensor<S> batched({1, x.extent(0), x.extent(1)}, std::vector<S>(x.values()));
  Tensor<S> mask = spatial_dropout_mask<S>(1, x.extent(0), p, seed);
  Tensor<S> y = apply_channel_mask(batched, mask);
  return Tensor<S>(x.shape(), std::vector<S>(y.values()));
}

// y = x W + b, x [N,F], W [F,G], b [G].
template <typename S>
Tensor<S> dense(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || b.rank() != 1) {
    throw ShapeError("dense expects x [N,F], W [F,G], b [G]");
  }
  const std::size_t n = x.extent(0), f = x.extent(1), g = w.extent(1);
  if (w.extent(0) != f || b.extent(0) != g) {
    throw ShapeError("dense shape mismatch: x " + shape_to_string(x.shape()) + " W " +
                     shape_to_string(w.shape()) + " b " + shape_to_string(b.shape()));
  }
  Tensor<S> y({n, g});
  for (std::size_t i = 0; i < n; ++i) {
    const S* xrow = x.data() + i * f;
    S* yrow = y.data() + i * g;
    for (std::size_t j = 0; j < g; ++j) yrow[j] = b[j];
    for (std::size_t k = 0; k < f; ++k) {
      const S xv = xrow[k];
      const S* wrow = w.data() + k * g;
      for (std::size_t j = 0; j < g; ++j) yrow[j] += xv * wrow[j];
    }
  }
  return y;
}

template <typename S>
void dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& grad_y,
                    Tensor<S>& grad_x, Tensor<S>& grad_w, Tensor<S>& grad_b) {
  const std::size_t n = x.extent(0), f = x.extent(1), g = w.extent(1);
  for (std::size_t i = 0; i < n; ++i) {
    const S* xrow = x.data() + i * f;
    const S* grow = grad_y.data() + i * g;
    S* gxrow = grad_x.data() + i * f;
    for (std::size_t j = 0; j < g; ++j) grad_b[j] += grow[j];
    for (std::size_t k = 0; k < f; ++k) {
      const S* wrow = w.data() + k * g;
      S* gwrow = grad_w.data() + k * g;
      S acc = S(0);
      for (std::size_t j = 0; j < g; ++j) {
        acc += grow[j] * wrow[j];
        gwrow[j] += xrow[k] * grow[j];
      }
      gxrow[k] += acc;
    }
  }
}

// Per-channel mean over time: [N,C,T] -> [N,C].
template <typename S>
Tensor<S> global_avg_pool_batch(const Tensor<S>& x) {
  if (x.rank() != 3) throw ShapeError("global_avg_pool expects [N,C,T]");
  const std::size_t n = x.extent(0), c = x.extent(1), t_len = x.extent(2);
  Tensor<S> y({n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const S* row = x.data() + (b * c + ch) * t_len;
      S acc = S(0);
      for (std::size_t t = 0; t < t_len; ++t) acc += row[t];
      y.at(b, ch) = acc / static_cast<S>(t_len);
    }
  }
  return y;
}

// Single-sample form: [C,T] -> [C].
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
  if (x.rank() != 2) throw ShapeError("global_avg_pool expects [C,T]");
  if (x.extent(1) < 1) throw DataError("global_avg_pool: empty time axis");
  Tensor<S> batched({1, x.extent(0), x.extent(1)}, std::vector<S>(x.values()));
  Tensor<S> y = global_avg_pool_batch(batched);
  return Tensor<S>({x.extent(0)}, std::vector<S>(y.values()));
}

template <typename S>
struct SoftmaxLoss {
  S loss = S(0);
  Tensor<S> probs;
};

// Mean negative log-likelihood with max-subtracted softmax. Probability rows
// sum to 1 up to rounding; labels index classes in [0, C).
template <typename S>
SoftmaxLoss<S> softmax_cross_entropy(const Tensor<S>& logits, const std::vector<std::size_t>& labels) {
  if (logits.rank() != 2) throw ShapeError("softmax_cross_entropy expects logits [N,C]");
  const std::size_t n = logits.extent(0), classes = logits.extent(1);
  if (labels.size() != n) {
    throw DataError("softmax_cross_entropy: " + std::to_string(n) + " rows but " +
                    std::to_string(labels.size()) + " labels");
  }
  SoftmaxLoss<S> out;
  out.probs = Tensor<S>({n, classes});
  double loss_acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes) {
      throw ParameterError("softmax_cross_entropy: label " + std::to_string(labels[i]) +
                           " out of range for " + std::to_string(classes) + " classes");
    }
    const S* row = logits.data() + i * classes;
    S* prow = out.probs.data() + i * classes;
    S max_logit = row[0];
    for (std::size_t j = 1; j < classes; ++j) max_logit = std::max(max_logit, row[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < classes; ++j) {
      const double e = std::exp(double(row[j] - max_logit));
      prow[j] = static_cast<S>(e);
      denom += e;
    }
    for (std::size_t j = 0; j < classes; ++j) prow[j] = static_cast<S>(double(prow[j]) / denom);
    loss_acc += -(double(row[labels[i]] - max_logit) - std::log(denom));
  }
  out.loss = static_cast<S>(loss_acc / double(n));
  return out;
}

// d(loss)/d(logits) = (probs - onehot) / N, scaled by the incoming loss grad.
template <typename S>
Tensor<S> softmax_cross_entropy_backward(const Tensor<S>& probs,
                                         const std::vector<std::size_t>& labels, S grad_loss) {
  const std::size_t n = probs.extent(0), classes = probs.extent(1);
  Tensor<S> grad(probs.shape());
  const S scale = grad_loss / static_cast<S>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S* prow = probs.data() + i * classes;
    S* grow = grad.data() + i * classes;
    for (std::size_t j = 0; j < classes; ++j) {
      grow[j] = (prow[j] - (labels[i] == j ? S(1) : S(0))) * scale;
    }
  }
  return grad;
}

// Frame-wise affine map: x [N,C,T], W [C,G] -> y [N,G,T], treating each time
// step as a feature row.
template <typename S>
Tensor<S> frame_dense(const Tensor<S>& x, const Tensor<S>& w) {
  if (x.rank() != 3 || w.rank() != 2) throw ShapeError("frame_dense expects x [N,C,T], W [C,G]");
  const std::size_t n = x.extent(0), c = x.extent(1), t_len = x.extent(2), g = w.extent(1);
  if (w.extent(0) != c) {
    throw ShapeError("frame_dense: input has " + std::to_string(c) + " features, W expects " +
                     std::to_string(w.extent(0)));
  }
  Tensor<S> y({n, g, t_len});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      const S* xrow = x.data() + (b * c + k) * t_len;
      const S* wrow = w.data() + k * g;
      for (std::size_t j = 0; j < g; ++j) {
        S* yrow = y.data() + (b * g + j) * t_len;
        const S wv = wrow[j];
        for (std::size_t t = 0; t < t_len; ++t) yrow[t] += xrow[t] * wv;
      }
    }
  }
  return y;
}

template <typename S>
void frame_dense_backward(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& grad_y,
                          Tensor<S>& grad_x, Tensor<S>& grad_w) {
  const std::size_t n = x.extent(0), c = x.extent(1), t_len = x.extent(2), g = w.extent(1);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      const S* xrow = x.data() + (b * c + k) * t_len;
      S* gxrow = grad_x.data() + (b * c + k) * t_len;
      const S* wrow = w.data() + k * g;
      S* gwrow = grad_w.data() + k * g;
      for (std::size_t j = 0; j < g; ++j) {
        const S* grow = grad_y.data() + (b * g + j) * t_len;
        const S wv = wrow[j];
        S acc = S(0);
        for (std::size_t t = 0; t < t_len; ++t) {
          gxrow[t] += grow[t] * wv;
          acc += grow[t] * xrow[t];
        }
        gwrow[j] += acc;
      }
    }
  }
}

}  // namespace ops
}  // namespace tcdetect
