// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"
#include "layerfuse/params.hpp"
#include "layerfuse/slm.hpp"

#include <array>
#include <random>
#include <vector>

namespace lfuse {

/// Per-layer scalar gate d -> d/4 -> 1. Shared by all tasks.
struct GateFfn {
    ad::Tensor w1, b1, w2, b2;
};

/// Prompt-adaptive layer fusion parameters.
///
/// The coefficient of layer m at step t for task tau is
///   alpha = beta * sigmoid(lambda[tau][m]) + (1 - beta) * sigmoid(gate_m(r_{m,t})),
/// with no normalisation across layers.
struct DynamicFusionParams {
    double beta = 0.5;
    std::array<ad::Tensor, kNumTasks> lambda;  // each [M]
    std::vector<GateFfn> gates;

    /// lambda = 0 and zero output layers, so every alpha starts at 0.5.
    static DynamicFusionParams init(std::size_t num_layers, std::size_t width, double beta, std::mt19937_64& rng);

    std::size_t num_layers() const { return gates.size(); }
    const ad::Tensor& lambda_for(Task task) const { return lambda[static_cast<std::size_t>(task)]; }
    void collect(ParamList& out) const;
    /// sigmoid(lambda[task][m]) per layer.
    std::vector<double> export_lambda(Task task) const;
};

/// alpha as a T x M tensor (row t holds the coefficients of step t).
struct FusionCoefficients {
    ad::Tensor alpha;

    std::size_t num_layers() const { return alpha.cols(); }
    std::size_t steps() const { return alpha.rows(); }
    double at(std::size_t layer, std::size_t step) const { return alpha.at(step, layer); }
};

/// Scalar gate output (pre-sigmoid) of layer `m` for every row of `r`.
ad::Tensor gate_logits(const GateFfn& gate, const ad::Tensor& r, ad::Activation act);

FusionCoefficients fusion_coefficients(const LayerOutputs& layers, Task task, const DynamicFusionParams& params,
                                       ad::Activation act = ad::Activation::Gelu);

/// sum_m alpha[t, m] * r_{m,t} as a 1 x d row.
ad::Tensor fuse(const LayerOutputs& layers, const FusionCoefficients& alpha, std::size_t t);
/// Every step at once, T x d.
ad::Tensor fuse_all(const LayerOutputs& layers, const FusionCoefficients& alpha);

}  // namespace lfuse
