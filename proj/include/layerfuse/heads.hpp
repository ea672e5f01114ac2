// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"
#include "layerfuse/params.hpp"

#include <random>
#include <span>
#include <vector>

namespace lfuse {

/// Linear classifier over a fused d-wide state: logits = r W + b.
struct LinearHead {
    ad::Tensor w;  // d x classes
    ad::Tensor b;  // classes

    static LinearHead init(std::size_t width, std::size_t classes, std::mt19937_64& rng);
    std::size_t classes() const { return b.numel(); }
    ad::Tensor logits(const ad::Tensor& r) const { return linear(r, w, b); }
};

using AsrHead = LinearHead;
using SerHead = LinearHead;

/// Next-token distribution for one fused step r_t (1 x d or d).
std::vector<double> asr_step(const ad::Tensor& r_t, const AsrHead& head);

/// Mean token NLL; row t of `fused` predicts targets[t]. The first row is the
/// BOS position.
ad::Tensor asr_loss(const ad::Tensor& fused, std::span<const int> targets, const AsrHead& head);

/// Class distribution from the fused state at the BOS position.
std::vector<double> ser_predict(const ad::Tensor& r_1, const SerHead& head);

ad::Tensor ser_loss(const ad::Tensor& r_1, int label, const SerHead& head);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

}  // namespace lfuse
