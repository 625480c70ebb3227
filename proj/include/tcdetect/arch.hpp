#pragma once

// The five detection architectures, built on the shared tape. A Network owns
// its parameters (created in a fixed, documented order from a seeded stream)
// and wires a fresh tape per forward call, so training and inference run the
// same code path; evaluation simply never calls backward and skips the
// stochastic pieces.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tcdetect/autodiff.hpp"
#include "tcdetect/errors.hpp"
#include "tcdetect/graph.hpp"
#include "tcdetect/ops.hpp"
#include "tcdetect/rng.hpp"
#include "tcdetect/tensor.hpp"

namespace tcdetect {

enum class Family { kCtcn, kWaveNet, kInceptionTime, kConvTasNet, kTagn };

inline const std::vector<Family>& all_families() {
  static const std::vector<Family> kAll = {Family::kCtcn, Family::kWaveNet, Family::kInceptionTime,
                                           Family::kConvTasNet, Family::kTagn};
  return kAll;
}

inline std::string family_name(Family f) {
  switch (f) {
    case Family::kCtcn: return "ctcn";
    case Family::kWaveNet: return "wavenet";
    case Family::kInceptionTime: return "inception_time";
    case Family::kConvTasNet: return "conv_tasnet";
    case Family::kTagn: return "tagn";
  }
  throw ParameterError("unknown architecture family value");
}

inline Family family_from_name(const std::string& name) {
  for (Family f : all_families()) {
    if (family_name(f) == name) return f;
  }
  throw ConfigError("unknown architecture family \"" + name + "\"");
}

struct ArchitectureSpec {
  Family family = Family::kCtcn;
  std::size_t in_channels = 1;
  std::size_t classes = 2;
  std::size_t channels = 16;   // hidden width
  std::size_t blocks = 2;      // family-specific repeat count
  std::size_t kernel_size = 3; // inception branches stay fixed at 1/3/5
  std::vector<std::size_t> dilations;  // per block; empty = family default
  double dropout = 0.1;        // channel dropout probability
  double noise_sigma = 0.05;   // train-time additive noise (conv_tasnet only)
};

// Kernel sizes of the three parallel inception branches.
inline const std::vector<std::size_t>& inception_kernels() {
  static const std::vector<std::size_t> kSizes = {1, 3, 5};
  return kSizes;
}

// Span of a serial stack of dilated causal convolutions:
// R = 1 + (K - 1) * sum(dilations).
inline std::size_t receptive_field(std::size_t kernel_size,
                                   const std::vector<std::size_t>& dilations) {
  if (kernel_size == 0) throw ParameterError("kernel size must be positive");
  std::size_t total = 0;
  for (std::size_t d : dilations) {
    if (d == 0) throw ParameterError("dilation must be positive");
    total += d;
  }
  return 1 + (kernel_size - 1) * total;
}

// Compact table-style defaults for quick experiments and tests.
inline ArchitectureSpec desk_spec(Family f, std::size_t in_channels, std::size_t classes = 2) {
  ArchitectureSpec spec;
  spec.family = f;
  spec.in_channels = in_channels;
  spec.classes = classes;
  switch (f) {
    case Family::kCtcn:
      spec.channels = 16; spec.blocks = 2; spec.kernel_size = 3;
      spec.dilations = {1, 2}; spec.dropout = 0.1;
      break;
    case Family::kWaveNet:
      spec.channels = 16; spec.blocks = 3; spec.kernel_size = 2;
      spec.dilations = {1, 2, 4}; spec.dropout = 0.1;
      break;
    case Family::kInceptionTime:
      spec.channels = 16; spec.blocks = 2; spec.kernel_size = 5;
      spec.dilations = {1, 1}; spec.dropout = 0.1;
      break;
    case Family::kConvTasNet:
      spec.channels = 16; spec.blocks = 3; spec.kernel_size = 3;
      spec.dilations = {1, 1, 1}; spec.dropout = 0.0; spec.noise_sigma = 0.05;
      break;
    case Family::kTagn:
      spec.channels = 16; spec.blocks = 2; spec.kernel_size = 3;
      spec.dilations = {1, 1}; spec.dropout = 0.1;
      break;
  }
  return spec;
}

// Full-size configurations matching the published depth of each family:
//   ctcn           13 residual blocks -> 2*13 convs + 1 entry skip + head = 28
//   wavenet        14 gated blocks   -> 1 encoder + 4*14 + head          = 58
//   inception_time 19 inception blocks -> 3*19 branches + head           = 58
//   conv_tasnet    36 mixing layers  -> 1 encoder + 36 + head            = 38
//   tagn           36 graph layers   -> 1 encoder + 36 + head            = 38
inline ArchitectureSpec paper_profile(Family f, std::size_t in_channels, std::size_t classes = 2) {
  ArchitectureSpec spec;
  spec.family = f;
  spec.in_channels = in_channels;
  spec.classes = classes;
  spec.channels = 64;
  spec.dropout = 0.1;
  switch (f) {
    case Family::kCtcn:
      spec.blocks = 13; spec.kernel_size = 3;
      for (std::size_t i = 0; i < spec.blocks; ++i) spec.dilations.push_back(std::size_t{1} << i);
      break;
    case Family::kWaveNet:
      spec.blocks = 14; spec.kernel_size = 2;
      for (std::size_t i = 0; i < spec.blocks; ++i) spec.dilations.push_back(std::size_t{1} << i);
      break;
    case Family::kInceptionTime:
      spec.blocks = 19; spec.kernel_size = 5;
      spec.dilations.assign(spec.blocks, 1);
      break;
    case Family::kConvTasNet:
      spec.blocks = 36; spec.kernel_size = 3;
      spec.dilations.assign(spec.blocks, 1);
      spec.dropout = 0.0; spec.noise_sigma = 0.05;
      break;
    case Family::kTagn:
      spec.blocks = 36; spec.kernel_size = 3;
      spec.dilations.assign(spec.blocks, 1);
      break;
  }
  return spec;
}

inline nlohmann::json spec_to_json(const ArchitectureSpec& spec) {
  nlohmann::json j;
  j["family"] = family_name(spec.family);
  j["in_channels"] = spec.in_channels;
  j["classes"] = spec.classes;
  j["channels"] = spec.channels;
  j["blocks"] = spec.blocks;
  j["kernel_size"] = spec.kernel_size;
  j["dilations"] = spec.dilations;
  j["dropout"] = spec.dropout;
  j["noise_sigma"] = spec.noise_sigma;
  return j;
}

inline ArchitectureSpec spec_from_json(const nlohmann::json& j) {
  for (const char* key : {"family", "in_channels", "classes", "channels", "blocks", "kernel_size",
                          "dilations", "dropout", "noise_sigma"}) {
    if (!j.contains(key)) throw ConfigError(std::string("architecture spec missing field \"") + key + "\"");
  }
  ArchitectureSpec spec;
  spec.family = family_from_name(j.at("family").get<std::string>());
  spec.in_channels = j.at("in_channels").get<std::size_t>();
  spec.classes = j.at("classes").get<std::size_t>();
  spec.channels = j.at("channels").get<std::size_t>();
  spec.blocks = j.at("blocks").get<std::size_t>();
  spec.kernel_size = j.at("kernel_size").get<std::size_t>();
  spec.dilations = j.at("dilations").get<std::vector<std::size_t>>();
  spec.dropout = j.at("dropout").get<double>();
  spec.noise_sigma = j.at("noise_sigma").get<double>();
  return spec;
}

template <typename S>
class Network {
 public:
  Network(ArchitectureSpec spec, std::uint64_t init_seed) : spec_(std::move(spec)) {
    validate_spec_();
    Rng rng(mix_seed(init_seed, 0x696e6974));  // one stream, params drawn in creation order
    build_params_(rng);
  }

  const ArchitectureSpec& spec() const { return spec_; }

  std::vector<std::string> param_names() const {
    std::vector<std::string> names;
    names.reserve(params_.size());
    for (const auto& p : params_) names.push_back(p.first);
    return names;
  }

  Tensor<S>& param(const std::string& name) { return params_[index_of_(name)].second; }
  const Tensor<S>& param(const std::string& name) const { return params_[index_of_(name)].second; }

  void set_param(const std::string& name, Tensor<S> value) {
    Tensor<S>& dst = params_[index_of_(name)].second;
    if (!dst.same_shape(value)) {
      throw ShapeError("parameter \"" + name + "\" expects shape " + shape_to_string(dst.shape()) +
                       ", got " + shape_to_string(value.shape()));
    }
    dst = std::move(value);
  }

  // Total scalar parameters.
  std::size_t param_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.second.size();
    return n;
  }

  // Individually parameterized layers (every weight tensor; biases ride along).
  std::size_t layer_count() const { return layer_count_; }

  // Dilations of the serial causal convolutions in path order (pointwise
  // layers appear with dilation 1 and kernel 1, contributing no extra span).
  std::vector<std::size_t> conv_layer_dilations() const {
    std::vector<std::size_t> out;
    out.reserve(serial_convs_.size());
    for (const auto& kd : serial_convs_) out.push_back(kd.second);
    return out;
  }

  // (kernel, dilation) of each serial causal convolution in path order.
  const std::vector<std::pair<std::size_t, std::size_t>>& serial_conv_schedule() const {
    return serial_convs_;
  }

  // Span of the causal convolutional path: 1 + sum_l (K_l - 1) * d_l. For the
  // graph family this covers only the causal encoder; the graph stages mix
  // both directions and are reported by is_causal().
  std::size_t receptive_field() const {
    std::size_t r = 1;
    for (const auto& [k, d] : serial_convs_) r += (k - 1) * d;
    return r;
  }

  bool is_causal() const { return spec_.family != Family::kTagn; }

  struct Wired {
    typename Graph<S>::Var logits;
    typename Graph<S>::Var features;  // pre-pool activations [N, channels, T]
    std::vector<typename Graph<S>::Var> params;  // parallel to param_names()
  };

  // Builds one forward pass on the caller's tape. `seed` fixes every
  // stochastic choice (dropout masks, injected noise) for the call, so the
  // same (inputs, mode, seed) triple always produces the same outputs.
  Wired wire(Graph<S>& g, const Tensor<S>& x, Mode mode, std::uint64_t seed) const {
    check_input_(x);
    Wired w;
    w.params.reserve(params_.size());
    for (const auto& p : params_) w.params.push_back(g.param(p.second));
    auto pv = [&](const std::string& name) { return w.params[index_of_(name)]; };

    const std::size_t n = x.extent(0);
    const std::size_t t_len = x.extent(2);
    std::uint64_t site = 0;
    auto dropout = [&](typename Graph<S>::Var v) {
      ++site;
      if (mode == Mode::kEval || spec_.dropout == 0.0) return v;
      Tensor<S> mask = ops::spatial_dropout_mask<S>(n, spec_.channels, spec_.dropout,
                                                    mix_seed(seed, 0x64726f70, site));
      return g.channel_mask(v, std::move(mask));
    };

    typename Graph<S>::Var input = g.constant(x);
    typename Graph<S>::Var feat{};

    switch (spec_.family) {
      case Family::kCtcn: {
        typename Graph<S>::Var h = input;
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::string base = "block" + std::to_string(b) + ".";
          auto s1 = dropout(g.relu(g.conv1d(h, g.weight_norm(pv(base + "conv1.w")), spec_.dilations[b])));
          auto s2 = dropout(g.relu(g.conv1d(s1, g.weight_norm(pv(base + "conv2.w")), spec_.dilations[b])));
          auto skip = (b == 0 && spec_.in_channels != spec_.channels)
                          ? g.conv1d(h, pv(base + "skip.w"), 1)
                          : h;
          h = g.add(s2, skip);
        }
        feat = h;
        break;
      }
      case Family::kWaveNet: {
        typename Graph<S>::Var h = g.conv1d(input, pv("encode.w"), 1);
        typename Graph<S>::Var skip_sum{};
        bool have_skip = false;
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::string base = "block" + std::to_string(b) + ".";
          auto f = g.conv1d(h, g.weight_norm(pv(base + "filter.w")), spec_.dilations[b]);
          auto gate = g.conv1d(h, g.weight_norm(pv(base + "gate.w")), spec_.dilations[b]);
          auto z = dropout(g.mul(g.tanh(f), g.sigmoid(gate)));
          h = g.add(h, g.conv1d(z, pv(base + "res.w"), 1));
          auto s = g.conv1d(z, pv(base + "skip.w"), 1);
          skip_sum = have_skip ? g.add(skip_sum, s) : s;
          have_skip = true;
        }
        feat = g.relu(skip_sum);
        break;
      }
      case Family::kInceptionTime: {
        typename Graph<S>::Var h = input;
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::string base = "block" + std::to_string(b) + ".";
          // three parallel causal branches summed elementwise
          auto y = g.conv1d(h, pv(base + "k1.w"), 1);
          y = g.add(y, g.conv1d(h, pv(base + "k3.w"), 1));
          y = g.add(y, g.conv1d(h, pv(base + "k5.w"), 1));
          h = dropout(g.relu(y));
        }
        feat = h;
        break;
      }
      case Family::kConvTasNet: {
        typename Graph<S>::Var h = g.relu(g.conv1d(input, pv("encode.w"), 1));
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          auto z = g.frame_dense(h, pv("mix" + std::to_string(b) + ".w"));
          ++site;
          if (mode == Mode::kTrain && spec_.noise_sigma > 0.0) {
            Rng noise_rng(mix_seed(seed, 0x6e6f6973, site));
            Tensor<S> noise({n, spec_.channels, t_len});
            for (std::size_t i = 0; i < noise.size(); ++i) {
              noise[i] = static_cast<S>(spec_.noise_sigma * noise_rng.next_normal());
            }
            z = g.add(z, g.constant(std::move(noise)));
          }
          h = g.relu(z);
        }
        feat = h;
        break;
      }
      case Family::kTagn: {
        auto adj = adjacency_for_(t_len);
        typename Graph<S>::Var h = dropout(g.relu(g.conv1d(input, pv("encode.w"), 1)));
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          h = g.graph_conv(h, adj, pv("graph" + std::to_string(b) + ".w"));
        }
        feat = h;
        break;
      }
    }

    w.features = feat;
    auto pooled = g.global_avg_pool(feat);
    w.logits = g.dense(pooled, pv("head.w"), pv("head.b"));
    return w;
  }

  struct StepResult {
    S loss = S(0);
    Tensor<S> probs;
    GradientRecord<S> grads;
  };

  // One training-style pass: forward in the given mode, loss, full backward.
  StepResult loss_and_gradients(const Tensor<S>& x, const std::vector<std::size_t>& labels,
                                Mode mode, std::uint64_t seed) const {
    Graph<S> g;
    Wired w = wire(g, x, mode, seed);
    auto ce = g.softmax_ce(w.logits, labels);
    g.backward(ce);
    StepResult out;
    out.loss = g.value(ce)[0];
    out.probs = g.probs_of(ce);
    out.grads.loss = out.loss;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      out.grads.grads.emplace(params_[i].first, g.grad(w.params[i]));
    }
    return out;
  }

  struct EvalResult {
    S loss = S(0);
    Tensor<S> probs;
  };

  EvalResult evaluate_batch(const Tensor<S>& x, const std::vector<std::size_t>& labels) const {
    Graph<S> g;
    Wired w = wire(g, x, Mode::kEval, 0);
    auto ce = g.softmax_ce(w.logits, labels);
    EvalResult out;
    out.loss = g.value(ce)[0];
    out.probs = g.probs_of(ce);
    return out;
  }

  // Class probabilities in evaluation mode, [N, classes].
  Tensor<S> predict_probs(const Tensor<S>& x) const {
    Graph<S> g;
    Wired w = wire(g, x, Mode::kEval, 0);
    return g.value(g.softmax(w.logits));
  }

  // Pre-pool activations in evaluation mode, [N, channels, T].
  Tensor<S> features(const Tensor<S>& x) const {
    Graph<S> g;
    Wired w = wire(g, x, Mode::kEval, 0);
    return g.value(w.features);
  }

 private:
  void validate_spec_() {
    if (spec_.in_channels == 0) throw ParameterError("network needs at least one input channel");
    if (spec_.classes < 2) throw ParameterError("network needs at least two classes");
    if (spec_.channels == 0) throw ParameterError("hidden width must be positive");
    if (spec_.blocks == 0) throw ParameterError("block count must be positive");
    if (spec_.kernel_size == 0) throw ParameterError("kernel size must be positive");
    if (!(spec_.dropout >= 0.0 && spec_.dropout < 1.0)) {
      throw ParameterError("dropout must lie in [0, 1)");
    }
    if (spec_.noise_sigma < 0.0) throw ParameterError("noise sigma must be non-negative");
    if (spec_.dilations.empty()) {
      switch (spec_.family) {
        case Family::kCtcn:
        case Family::kWaveNet:
          // doubling schedule 1, 2, 4, ...
          for (std::size_t i = 0; i < spec_.blocks; ++i) {
            spec_.dilations.push_back(std::size_t{1} << i);
          }
          break;
        default:
          spec_.dilations.assign(spec_.blocks, 1);
          break;
      }
    }
    if (spec_.dilations.size() != spec_.blocks) {
      throw ParameterError("dilation schedule must list one dilation per block");
    }
    for (std::size_t d : spec_.dilations) {
      if (d == 0) throw ParameterError("dilation must be positive");
    }
    if (spec_.family == Family::kConvTasNet || spec_.family == Family::kTagn) {
      for (std::size_t d : spec_.dilations) {
        if (d != 1) throw ParameterError("pointwise-mixing families use dilation 1 only");
      }
    }
  }

  Tensor<S> glorot_(Rng& rng, const Shape& shape, std::size_t fan_in, std::size_t fan_out) {
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    Tensor<S> t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = static_cast<S>(rng.next_uniform(-bound, bound));
    }
    return t;
  }

  void add_conv_(Rng& rng, const std::string& name, std::size_t out_ch, std::size_t in_ch,
                 std::size_t k) {
    add_param_(name, glorot_(rng, {out_ch, in_ch, k}, in_ch * k, out_ch * k));
    ++layer_count_;
  }

  void add_matrix_(Rng& rng, const std::string& name, std::size_t rows, std::size_t cols) {
    add_param_(name, glorot_(rng, {rows, cols}, rows, cols));
    ++layer_count_;
  }

  void add_param_(const std::string& name, Tensor<S> value) {
    if (index_.count(name)) throw StateError("duplicate parameter name " + name);
    index_.emplace(name, params_.size());
    params_.emplace_back(name, std::move(value));
  }

  void build_params_(Rng& rng) {
    const std::size_t c = spec_.channels;
    const std::size_t k = spec_.kernel_size;
    switch (spec_.family) {
      case Family::kCtcn:
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::size_t in_ch = b == 0 ? spec_.in_channels : c;
          const std::string base = "block" + std::to_string(b) + ".";
          add_conv_(rng, base + "conv1.w", c, in_ch, k);
          add_conv_(rng, base + "conv2.w", c, c, k);
          if (b == 0 && spec_.in_channels != c) add_conv_(rng, base + "skip.w", c, in_ch, 1);
          serial_convs_.emplace_back(k, spec_.dilations[b]);
          serial_convs_.emplace_back(k, spec_.dilations[b]);
        }
        break;
      case Family::kWaveNet:
        add_conv_(rng, "encode.w", c, spec_.in_channels, 1);
        serial_convs_.emplace_back(1, 1);
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::string base = "block" + std::to_string(b) + ".";
          add_conv_(rng, base + "filter.w", c, c, k);
          add_conv_(rng, base + "gate.w", c, c, k);
          add_conv_(rng, base + "res.w", c, c, 1);
          add_conv_(rng, base + "skip.w", c, c, 1);
          // filter and gate sit in parallel at the same dilation; the
          // pointwise res/skip projections add no span
          serial_convs_.emplace_back(k, spec_.dilations[b]);
        }
        break;
      case Family::kInceptionTime:
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          const std::size_t in_ch = b == 0 ? spec_.in_channels : c;
          const std::string base = "block" + std::to_string(b) + ".";
          for (std::size_t ks : inception_kernels()) {
            add_conv_(rng, base + "k" + std::to_string(ks) + ".w", c, in_ch, ks);
          }
          // the widest branch bounds the block's span
          serial_convs_.emplace_back(inception_kernels().back(), 1);
        }
        break;
      case Family::kConvTasNet:
        add_conv_(rng, "encode.w", c, spec_.in_channels, k);
        serial_convs_.emplace_back(k, 1);
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          add_matrix_(rng, "mix" + std::to_string(b) + ".w", c, c);
        }
        break;
      case Family::kTagn:
        add_conv_(rng, "encode.w", c, spec_.in_channels, k);
        serial_convs_.emplace_back(k, 1);
        for (std::size_t b = 0; b < spec_.blocks; ++b) {
          add_matrix_(rng, "graph" + std::to_string(b) + ".w", c, c);
        }
        break;
    }
    add_param_("head.w", glorot_(rng, {c, spec_.classes}, c, spec_.classes));
    ++layer_count_;
    add_param_("head.b", Tensor<S>({spec_.classes}));
  }

  void check_input_(const Tensor<S>& x) const {
    if (x.rank() != 3) throw ShapeError("network input must be [N, channels, T]");
    if (x.extent(1) != spec_.in_channels) {
      throw ShapeError("network expects " + std::to_string(spec_.in_channels) +
                       " input channels, got " + std::to_string(x.extent(1)));
    }
  }

  std::size_t index_of_(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ParameterError("unknown parameter \"" + name + "\"");
    return it->second;
  }

  std::shared_ptr<const AdjacencySpec<S>> adjacency_for_(std::size_t t_len) const {
    auto it = adjacency_cache_.find(t_len);
    if (it == adjacency_cache_.end()) {
      auto adj = std::make_shared<AdjacencySpec<S>>(path_adjacency<S>(t_len));
      it = adjacency_cache_.emplace(t_len, std::move(adj)).first;
    }
    return it->second;
  }

  ArchitectureSpec spec_;
  std::vector<std::pair<std::string, Tensor<S>>> params_;
  std::map<std::string, std::size_t> index_;
  std::vector<std::pair<std::size_t, std::size_t>> serial_convs_;  // (kernel, dilation)
  std::size_t layer_count_ = 0;
  mutable std::map<std::size_t, std::shared_ptr<const AdjacencySpec<S>>> adjacency_cache_;
};

template <typename S>
Network<S> build_network(const ArchitectureSpec& spec, std::uint64_t init_seed) {
  return Network<S>(spec, init_seed);
}

}  // namespace tcdetect
