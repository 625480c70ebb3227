#pragma once

// Central-difference verification of analytic gradients. The loss callback
// must be deterministic in its parameters: any stochastic pieces (dropout
// masks, injected noise) have to be re-seeded identically on every call.

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "tcdetect/errors.hpp"
#include "tcdetect/rng.hpp"
#include "tcdetect/tensor.hpp"

namespace tcdetect {

struct GradCheckOptions {
  double epsilon = 1e-5;
  // 0 checks every entry; otherwise at most this many per parameter,
  // chosen by a seeded draw so reruns probe the same entries.
  std::size_t max_entries_per_param = 0;
  std::uint64_t sample_seed = 1;
};

template <typename S>
struct GradCheckResult {
  S max_rel_error = S(0);
  std::string worst_param;
  std::size_t worst_index = 0;
  S worst_analytic = S(0);
  S worst_numeric = S(0);
  std::size_t entries_checked = 0;
};

// rel = |analytic - numeric| / max(1, |analytic|, |numeric|)
template <typename S>
S relative_gradient_error(S analytic, S numeric) {
  const S denom = std::max(S(1), std::max(std::abs(analytic), std::abs(numeric)));
  return std::abs(analytic - numeric) / denom;
}

// loss_fn: const std::map<std::string, Tensor<S>>& -> S
template <typename S, typename F>
GradCheckResult<S> check_gradients(std::map<std::string, Tensor<S>> params,
                                   const std::map<std::string, Tensor<S>>& analytic, F&& loss_fn,
                                   const GradCheckOptions& opts = {}) {
  GradCheckResult<S> result;
  const S eps = static_cast<S>(opts.epsilon);
  if (!(eps > S(0))) throw ParameterError("gradient check epsilon must be positive");
  for (auto& [name, tensor] : params) {
    auto it = analytic.find(name);
    if (it == analytic.end()) throw ParameterError("no analytic gradient for parameter " + name);
    if (!it->second.same_shape(tensor)) {
      throw ShapeError("gradient shape mismatch for parameter " + name);
    }

    std::vector<std::size_t> indices;
    if (opts.max_entries_per_param == 0 || tensor.size() <= opts.max_entries_per_param) {
      indices.resize(tensor.size());
      for (std::size_t i = 0; i < tensor.size(); ++i) indices[i] = i;
    } else {
      Rng rng(mix_seed(opts.sample_seed, std::hash<std::string>{}(name)));
      for (std::size_t i = 0; i < opts.max_entries_per_param; ++i) {
        indices.push_back(static_cast<std::size_t>(rng.next_below(tensor.size())));
      }
    }

    for (std::size_t idx : indices) {
      const S saved = tensor[idx];
      tensor[idx] = saved + eps;
      const S up = loss_fn(static_cast<const std::map<std::string, Tensor<S>>&>(params));
      tensor[idx] = saved - eps;
      const S down = loss_fn(static_cast<const std::map<std::string, Tensor<S>>&>(params));
      tensor[idx] = saved;
      const S numeric = (up - down) / (S(2) * eps);
      const S rel = relative_gradient_error(it->second[idx], numeric);
      ++result.entries_checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_param = name;
        result.worst_index = idx;
        result.worst_analytic = it->second[idx];
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

}  // namespace tcdetect
