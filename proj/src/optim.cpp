// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#include "pathvit/optim.hpp"

#include <cmath>
#include <string>

#include "pathvit/errors.hpp"

namespace pathvit {

void AdamOptions::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive and finite");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0,1)");
  if (!(eps > 0.0)) throw ConfigError("adam eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(max_grad_norm >= 0.0)) throw ConfigError("max_grad_norm must be non-negative");
}

AdamState AdamState::for_params(const ModelParams& params) {
  AdamState state;
  for (const auto& [name, t] : params.entries()) {
    state.m.emplace_back(t.numel(), 0.0);
    state.v.emplace_back(t.numel(), 0.0);
  }
  return state;
}

double grad_norm(const ModelParams& params) {
  double sq = 0.0;
  for (const auto& [name, t] : params.entries()) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void adam_step(ModelParams& params, AdamState& state, const AdamOptions& opts) {
  auto& entries = params.entries();
  if (state.m.size() != entries.size()) throw ContractError("adam_step: state does not match parameters");
  for (const auto& [name, t] : entries) {
    if (!t.requires_grad() || !t.has_grad()) continue;
    for (double g : t.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in " + name);
    }
  }
  double scale = 1.0;
  if (opts.max_grad_norm > 0.0) {
    const double norm = grad_norm(params);
    if (norm > opts.max_grad_norm) scale = opts.max_grad_norm / norm;
  }

  ++state.t;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(opts.beta1, t);
  const double c2 = 1.0 - std::pow(opts.beta2, t);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    Tensor& p = entries[k].second;
    if (!p.requires_grad()) continue;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.numel()) throw ContractError("adam_step: state shape mismatch for " + entries[k].first);
    const bool has = p.has_grad();
    auto grad = has ? p.grad() : std::span<const double>{};
    auto theta = p.mutable_data();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      double g = has ? grad[i] * scale : 0.0;
      if (opts.weight_decay > 0.0) g += opts.weight_decay * theta[i];
      m[i] = opts.beta1 * m[i] + (1.0 - opts.beta1) * g;
      v[i] = opts.beta2 * v[i] + (1.0 - opts.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
}

}  // namespace pathvit
