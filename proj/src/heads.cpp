// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/heads.hpp"

#include <stdexcept>
#include <string>

namespace lfuse {

namespace {

ad::Tensor as_row(const ad::Tensor& r) { return r.rank() == 1 ? ad::reshape(r, {1, r.numel()}) : r; }

}  // namespace

LinearHead LinearHead::init(std::size_t width, std::size_t classes, std::mt19937_64& rng) {
    return LinearHead{linear_weight(width, classes, rng), zeros_param({classes})};
}

std::vector<double> asr_step(const ad::Tensor& r_t, const AsrHead& head) {
    ad::NoGradGuard no_grad;
    const ad::Tensor row = as_row(r_t);
    if (row.rows() != 1) throw ad::ShapeError("asr_step", r_t.shape(), head.w.shape());
    return ad::softmax_values(head.logits(row).values());
}

ad::Tensor asr_loss(const ad::Tensor& fused, std::span<const int> targets, const AsrHead& head) {
    const ad::Tensor rows = as_row(fused);
    if (rows.rows() != targets.size())
        throw std::invalid_argument("asr_loss: " + std::to_string(rows.rows()) + " fused steps for " +
                                    std::to_string(targets.size()) + " targets");
    return ad::cross_entropy(head.logits(rows), targets);
}

std::vector<double> ser_predict(const ad::Tensor& r_1, const SerHead& head) {
    ad::NoGradGuard no_grad;
    const ad::Tensor row = as_row(r_1);
    if (row.rows() != 1) throw ad::ShapeError("ser_predict", r_1.shape(), head.w.shape());
    return ad::softmax_values(head.logits(row).values());
}

ad::Tensor ser_loss(const ad::Tensor& r_1, int label, const SerHead& head) {
    const ad::Tensor row = as_row(r_1);
    if (row.rows() != 1) throw ad::ShapeError("ser_loss", r_1.shape(), head.w.shape());
    const int targets[] = {label};
    return ad::cross_entropy(head.logits(row), targets);
}

std::size_t argmax(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

}  // namespace lfuse
