#pragma once

// Reverse-mode differentiation over a per-call tape. Nodes are appended in
// forward order (inputs of an op always precede it), so the backward sweep
// is a single reverse iteration seeded with d(loss) = 1. One Graph belongs
// to one forward pass and must not be shared between threads.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tcdetect/errors.hpp"
#include "tcdetect/graph.hpp"
#include "tcdetect/ops.hpp"
#include "tcdetect/tensor.hpp"

namespace tcdetect {

// Per-parameter gradients plus the scalar loss they came from.
template <typename S>
struct GradientRecord {
  S loss = S(0);
  std::map<std::string, Tensor<S>> grads;
};

template <typename S>
class Graph {
 public:
  struct Var {
    std::size_t id = 0;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor<S> v) { return push_full(std::move(v), nullptr); }
  Var param(Tensor<S> v) { return push_full(std::move(v), nullptr); }

  const Tensor<S>& value(Var v) const { return nodes_.at(v.id).value; }
  const Tensor<S>& grad(Var v) const {
    if (!ran_backward_) throw StateError("gradient requested before backward");
    return nodes_.at(v.id).grad;
  }

  // a*ca + b*cb, same shapes.
  Var add(Var a, Var b, S ca = S(1), S cb = S(1)) {
    const Tensor<S>& ta = value(a);
    const Tensor<S>& tb = value(b);
    if (!ta.same_shape(tb)) {
      throw ShapeError("add: shape mismatch " + shape_to_string(ta.shape()) + " vs " +
                       shape_to_string(tb.shape()));
    }
    Tensor<S> out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca * ta[i] + cb * tb[i];
    return push(std::move(out), [this, a, b, ca, cb](const Tensor<S>& g) {
      Tensor<S>& ga = nodes_[a.id].grad;
      Tensor<S>& gb = nodes_[b.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += ca * g[i];
        gb[i] += cb * g[i];
      }
    });
  }

  Var mul(Var a, Var b) {
    const Tensor<S>& ta = value(a);
    const Tensor<S>& tb = value(b);
    if (!ta.same_shape(tb)) throw ShapeError("mul: shape mismatch");
    Tensor<S> out(ta.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ta[i] * tb[i];
    return push(std::move(out), [this, a, b](const Tensor<S>& g) {
      const Tensor<S>& ta = nodes_[a.id].value;
      const Tensor<S>& tb = nodes_[b.id].value;
      Tensor<S>& ga = nodes_[a.id].grad;
      Tensor<S>& gb = nodes_[b.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        ga[i] += g[i] * tb[i];
        gb[i] += g[i] * ta[i];
      }
    });
  }

  Var relu(Var x) {
    Tensor<S> out = ops::relu(value(x));
    return push(std::move(out), [this, x](const Tensor<S>& g, const Tensor<S>& y) {
      Tensor<S>& gx = nodes_[x.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] > S(0) ? g[i] : S(0);
    });
  }

  Var tanh(Var x) {
    Tensor<S> out = ops::tanh_op(value(x));
    return push(std::move(out), [this, x](const Tensor<S>& g, const Tensor<S>& y) {
      Tensor<S>& gx = nodes_[x.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (S(1) - y[i] * y[i]);
    });
  }

  Var sigmoid(Var x) {
    Tensor<S> out = ops::sigmoid(value(x));
    return push(std::move(out), [this, x](const Tensor<S>& g, const Tensor<S>& y) {
      Tensor<S>& gx = nodes_[x.id].grad;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (S(1) - y[i]);
    });
  }

  // Sum of all elements -> scalar of shape [1].
  Var sum(Var x) {
    const Tensor<S>& tx = value(x);
    S acc = S(0);
    for (std::size_t i = 0; i < tx.size(); ++i) acc += tx[i];
    return push(Tensor<S>({1}, {acc}), [this, x](const Tensor<S>& g) {
      Tensor<S>& gx = nodes_[x.id].grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
    });
  }

  // Dilated causal convolution, x [N,C,T], w [O,C,K].
  Var conv1d(Var x, Var w, std::size_t dilation) {
    Tensor<S> out = ops::conv1d_causal_batch(value(x), value(w), dilation);
    return push(std::move(out), [this, x, w, dilation](const Tensor<S>& g) {
      ops::conv1d_causal_backward(nodes_[x.id].value, nodes_[w.id].value, dilation, g,
                                  nodes_[x.id].grad, nodes_[w.id].grad);
    });
  }

  // Per-filter L2 normalization with gain 1 (zero filters stay zero).
  Var weight_norm(Var v) {
    Tensor<S> out = ops::weight_norm_safe(value(v));
    return push(std::move(out), [this, v](const Tensor<S>& g) {
      Tensor<S> gv = ops::weight_norm_backward(nodes_[v.id].value, g);
      Tensor<S>& dst = nodes_[v.id].grad;
      for (std::size_t i = 0; i < gv.size(); ++i) dst[i] += gv[i];
    });
  }

  // Multiplies x [N,C,T] by a constant per-(sample,channel) mask [N,C].
  Var channel_mask(Var x, Tensor<S> mask) {
    Tensor<S> out = ops::apply_channel_mask(value(x), mask);
    auto shared = std::make_shared<Tensor<S>>(std::move(mask));
    return push(std::move(out), [this, x, shared](const Tensor<S>& g) {
      Tensor<S> gx = ops::apply_channel_mask(g, *shared);
      Tensor<S>& dst = nodes_[x.id].grad;
      for (std::size_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
    });
  }

  Var dense(Var x, Var w, Var b) {
    Tensor<S> out = ops::dense(value(x), value(w), value(b));
    return push(std::move(out), [this, x, w, b](const Tensor<S>& g) {
      ops::dense_backward(nodes_[x.id].value, nodes_[w.id].value, g, nodes_[x.id].grad,
                          nodes_[w.id].grad, nodes_[b.id].grad);
    });
  }

  Var frame_dense(Var x, Var w) {
    Tensor<S> out = ops::frame_dense(value(x), value(w));
    return push(std::move(out), [this, x, w](const Tensor<S>& g) {
      ops::frame_dense_backward(nodes_[x.id].value, nodes_[w.id].value, g, nodes_[x.id].grad,
                                nodes_[w.id].grad);
    });
  }

  // Batched graph convolution with internal relu: x [N,C,T] with T graph
  // nodes of C features each, w [C,G] -> [N,G,T].
  Var graph_conv(Var x, std::shared_ptr<const AdjacencySpec<S>> adj, Var w) {
    const Tensor<S>& tx = value(x);
    const Tensor<S>& tw = value(w);
    if (tx.rank() != 3) throw ShapeError("graph_conv expects [N,C,T]");
    const std::size_t n = tx.extent(0), c = tx.extent(1), t_len = tx.extent(2), g_out = tw.extent(1);
    if (adj->nodes() != t_len) throw ShapeError("graph_conv: node count must equal T");
    if (tw.extent(0) != c) throw ShapeError("graph_conv: feature width mismatch");

    Tensor<S> pre({n, g_out, t_len});
    for (std::size_t b = 0; b < n; ++b) {
      // mixed[t,k] = sum_s A_hat[t,s] x[b,k,s]
      Tensor<S> mixed({t_len, c});
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t s = 0; s < t_len; ++s) {
          const S a = adj->normalized.at(t, s);
          if (a == S(0)) continue;
          for (std::size_t k = 0; k < c; ++k) mixed.at(t, k) += a * tx.at(b, k, s);
        }
      }
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t k = 0; k < c; ++k) {
          const S mv = mixed.at(t, k);
          const S* wrow = tw.data() + k * g_out;
          for (std::size_t j = 0; j < g_out; ++j) pre.at(b, j, t) += mv * wrow[j];
        }
      }
    }
    Tensor<S> out = ops::relu(pre);
    auto pre_shared = std::make_shared<Tensor<S>>(std::move(pre));
    return push(std::move(out), [this, x, w, adj, pre_shared](const Tensor<S>& g) {
      const Tensor<S>& tx = nodes_[x.id].value;
      const Tensor<S>& tw = nodes_[w.id].value;
      Tensor<S>& gx = nodes_[x.id].grad;
      Tensor<S>& gw = nodes_[w.id].grad;
      const std::size_t n = tx.extent(0), c = tx.extent(1), t_len = tx.extent(2),
                        g_out = tw.extent(1);
      for (std::size_t b = 0; b < n; ++b) {
        // dP = g masked by relu, as node-major [t, j]
        Tensor<S> dp({t_len, g_out});
        for (std::size_t j = 0; j < g_out; ++j) {
          for (std::size_t t = 0; t < t_len; ++t) {
            dp.at(t, j) = pre_shared->at(b, j, t) > S(0) ? g.at(b, j, t) : S(0);
          }
        }
        // dmixed = dP W^T;  dW += mixed^T dP  (mixed recomputed, small)
        Tensor<S> mixed({t_len, c});
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t s = 0; s < t_len; ++s) {
            const S a = adj->normalized.at(t, s);
            if (a == S(0)) continue;
            for (std::size_t k = 0; k < c; ++k) mixed.at(t, k) += a * tx.at(b, k, s);
          }
        }
        Tensor<S> dmixed({t_len, c});
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t k = 0; k < c; ++k) {
            S acc = S(0);
            const S* wrow = tw.data() + k * g_out;
            for (std::size_t j = 0; j < g_out; ++j) {
              acc += dp.at(t, j) * wrow[j];
              gw[k * g_out + j] += mixed.at(t, k) * dp.at(t, j);
            }
            dmixed.at(t, k) = acc;
          }
        }
        // dx[b,k,s] += sum_t A_hat[t,s] dmixed[t,k]  (A_hat symmetric)
        for (std::size_t t = 0; t < t_len; ++t) {
          for (std::size_t s = 0; s < t_len; ++s) {
            const S a = adj->normalized.at(t, s);
            if (a == S(0)) continue;
            for (std::size_t k = 0; k < c; ++k) gx.at(b, k, s) += a * dmixed.at(t, k);
          }
        }
      }
    });
  }

  Var global_avg_pool(Var x) {
    Tensor<S> out = ops::global_avg_pool_batch(value(x));
    return push(std::move(out), [this, x](const Tensor<S>& g) {
      Tensor<S>& gx = nodes_[x.id].grad;
      const std::size_t n = gx.extent(0), c = gx.extent(1), t_len = gx.extent(2);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const S share = g.at(b, ch) / static_cast<S>(t_len);
          S* row = gx.data() + (b * c + ch) * t_len;
          for (std::size_t t = 0; t < t_len; ++t) row[t] += share;
        }
      }
    });
  }

  // Row-wise softmax (no loss attached).
  Var softmax(Var logits) {
    const Tensor<S>& tl = value(logits);
    if (tl.rank() != 2) throw ShapeError("softmax expects [N,C]");
    const std::size_t n = tl.extent(0), classes = tl.extent(1);
    Tensor<S> out({n, classes});
    for (std::size_t i = 0; i < n; ++i) {
      const S* row = tl.data() + i * classes;
      S* prow = out.data() + i * classes;
      S max_logit = row[0];
      for (std::size_t j = 1; j < classes; ++j) max_logit = std::max(max_logit, row[j]);
      double denom = 0.0;
      for (std::size_t j = 0; j < classes; ++j) {
        const double e = std::exp(double(row[j] - max_logit));
        prow[j] = static_cast<S>(e);
        denom += e;
      }
      for (std::size_t j = 0; j < classes; ++j) prow[j] = static_cast<S>(double(prow[j]) / denom);
    }
    return push(std::move(out), [this, logits](const Tensor<S>& g, const Tensor<S>& y) {
      Tensor<S>& gx = nodes_[logits.id].grad;
      const std::size_t n = y.extent(0), classes = y.extent(1);
      for (std::size_t i = 0; i < n; ++i) {
        const S* prow = y.data() + i * classes;
        const S* grow = g.data() + i * classes;
        S dot = S(0);
        for (std::size_t j = 0; j < classes; ++j) dot += grow[j] * prow[j];
        S* gxrow = gx.data() + i * classes;
        for (std::size_t j = 0; j < classes; ++j) gxrow[j] += prow[j] * (grow[j] - dot);
      }
    });
  }

  // Scalar loss node; the companion probabilities are retrievable through
  // probs_of() on the returned var.
  Var softmax_ce(Var logits, const std::vector<std::size_t>& labels) {
    ops::SoftmaxLoss<S> fl = ops::softmax_cross_entropy(value(logits), labels);
    auto probs = std::make_shared<Tensor<S>>(std::move(fl.probs));
    auto lab = std::make_shared<std::vector<std::size_t>>(labels);
    Var v = push(Tensor<S>({1}, {fl.loss}), [this, logits, probs, lab](const Tensor<S>& g) {
      Tensor<S> gl = ops::softmax_cross_entropy_backward(*probs, *lab, g[0]);
      Tensor<S>& dst = nodes_[logits.id].grad;
      for (std::size_t i = 0; i < gl.size(); ++i) dst[i] += gl[i];
    });
    nodes_[v.id].aux = probs;
    return v;
  }

  // Cached probabilities of a softmax_ce node.
  const Tensor<S>& probs_of(Var v) const {
    const auto& aux = nodes_.at(v.id).aux;
    if (!aux) throw StateError("node has no cached probabilities");
    return *aux;
  }

  // Reverse sweep from a scalar node. Gradients accumulate into every node;
  // leaves created with param() are read back through grad().
  void backward(Var loss) {
    if (nodes_.empty()) throw StateError("backward called before any forward computation");
    if (ran_backward_) throw StateError("backward already ran on this graph");
    const Tensor<S>& lv = value(loss);
    if (lv.size() != 1) throw ShapeError("backward: loss must be scalar");
    ran_backward_ = true;
    nodes_[loss.id].grad[0] = S(1);
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (nodes_[i].backprop) nodes_[i].backprop(nodes_[i].grad, nodes_[i].value);
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<S> value;
    Tensor<S> grad;
    std::function<void(const Tensor<S>&, const Tensor<S>&)> backprop;
    std::shared_ptr<Tensor<S>> aux;
  };

  Var push(Tensor<S> value, std::function<void(const Tensor<S>&)> backprop) {
    if (backprop) {
      return push_full(std::move(value),
                       [fn = std::move(backprop)](const Tensor<S>& g, const Tensor<S>&) { fn(g); });
    }
    return push_full(std::move(value), nullptr);
  }

  Var push(Tensor<S> value, std::function<void(const Tensor<S>&, const Tensor<S>&)> backprop) {
    return push_full(std::move(value), std::move(backprop));
  }

  Var push_full(Tensor<S> value, std::function<void(const Tensor<S>&, const Tensor<S>&)> backprop) {
    Node node;
    node.grad = Tensor<S>(value.shape());
    node.value = std::move(value);
    node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
  bool ran_backward_ = false;
};

}  // namespace tcdetect
