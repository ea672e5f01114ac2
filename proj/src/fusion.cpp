// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/fusion.hpp"

#include <cmath>
#include <stdexcept>

namespace lfuse {

DynamicFusionParams DynamicFusionParams::init(std::size_t num_layers, std::size_t width, double beta,
                                              std::mt19937_64& rng) {
    if (!(beta >= 0.0 && beta <= 1.0)) throw std::invalid_argument("fusion beta must lie in [0, 1]");
    if (width < 4) throw std::invalid_argument("fusion width must be >= 4");
    DynamicFusionParams p;
    p.beta = beta;
    for (auto& l : p.lambda) l = zeros_param({num_layers});
    const std::size_t hidden = width / 4;
    for (std::size_t m = 0; m < num_layers; ++m) {
        GateFfn g;
        g.w1 = linear_weight(width, hidden, rng);
        g.b1 = zeros_param({hidden});
        g.w2 = zeros_param({hidden, 1});
        g.b2 = zeros_param({1});
        p.gates.push_back(std::move(g));
    }
    return p;
}

void DynamicFusionParams::collect(ParamList& out) const {
    out.push_back({"fusion.lambda.asr", lambda[0]});
    out.push_back({"fusion.lambda.ser", lambda[1]});
    for (std::size_t m = 0; m < gates.size(); ++m) {
        const std::string p = "fusion.gate" + std::to_string(m + 1) + ".";
        out.push_back({p + "w1", gates[m].w1});
        out.push_back({p + "b1", gates[m].b1});
        out.push_back({p + "w2", gates[m].w2});
        out.push_back({p + "b2", gates[m].b2});
    }
}

std::vector<double> DynamicFusionParams::export_lambda(Task task) const {
    std::vector<double> out;
    for (double l : lambda_for(task).values()) out.push_back(1.0 / (1.0 + std::exp(-l)));
    return out;
}

ad::Tensor gate_logits(const GateFfn& gate, const ad::Tensor& r, ad::Activation act) {
    return linear(ad::activate(linear(r, gate.w1, gate.b1), act), gate.w2, gate.b2);
}

FusionCoefficients fusion_coefficients(const LayerOutputs& layers, Task task, const DynamicFusionParams& params,
                                       ad::Activation act) {
    const std::size_t m = layers.num_layers();
    if (m != params.num_layers())
        throw std::invalid_argument("fusion_coefficients: " + std::to_string(m) + " layer outputs for " +
                                    std::to_string(params.num_layers()) + " fusion layers");
    std::vector<ad::Tensor> columns;
    columns.reserve(m);
    for (std::size_t i = 0; i < m; ++i) columns.push_back(gate_logits(params.gates[i], layers.layers[i], act));
    const ad::Tensor input_term = ad::scale(ad::sigmoid(ad::concat_cols(columns)), 1.0 - params.beta);
    const ad::Tensor task_term = ad::scale(ad::sigmoid(params.lambda_for(task)), params.beta);
    return FusionCoefficients{ad::add(input_term, task_term)};
}

ad::Tensor fuse(const LayerOutputs& layers, const FusionCoefficients& alpha, std::size_t t) {
    if (t >= alpha.steps() || t >= layers.length())
        throw std::out_of_range("fuse: step " + std::to_string(t) + " outside " + std::to_string(alpha.steps()) + " steps");
    std::vector<ad::Tensor> rows;
    for (const auto& layer : layers.layers) rows.push_back(ad::reshape(ad::slice_rows(layer, t, t + 1), {layer.cols()}));
    return ad::reshape(ad::weighted_sum(rows, ad::reshape(ad::slice_rows(alpha.alpha, t, t + 1), {alpha.num_layers()})),
                       {1, layers.width()});
}

ad::Tensor fuse_all(const LayerOutputs& layers, const FusionCoefficients& alpha) {
    return ad::weighted_sum(layers.layers, alpha.alpha);
}

}  // namespace lfuse
