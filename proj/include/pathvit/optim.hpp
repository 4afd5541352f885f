// Copyright 2026 The pathvit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "pathvit/vit.hpp"

namespace pathvit {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// L2 term folded into the gradient; off by default.
  double weight_decay = 0.0;
  /// Global gradient-norm ceiling; 0 disables clipping.
  double max_grad_norm = 0.0;

  void validate() const;
};

/// First and second moment estimates aligned with a ModelParams layout.
struct AdamState {
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(const ModelParams& params);
};

/// One bias-corrected Adam update on every tensor with requires_grad set.
/// A trainable tensor without a gradient is treated as having g = 0. On a
/// non-finite gradient the whole step is abandoned and NumericError thrown;
/// neither params nor state change.
void adam_step(ModelParams& params, AdamState& state, const AdamOptions& opts);

/// Global L2 norm of all gradients.
double grad_norm(const ModelParams& params);

}  // namespace pathvit
