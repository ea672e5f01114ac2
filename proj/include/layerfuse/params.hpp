// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace lfuse {

struct NamedTensor {
    std::string name;
    ad::Tensor tensor;  // shares storage with the owning module
};

using ParamList = std::vector<NamedTensor>;

inline ad::Tensor normal_param(ad::Shape shape, double stddev, std::mt19937_64& rng) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape), true);
    std::normal_distribution<double> normal(0.0, stddev);
    for (double& v : t.mutable_values()) v = normal(rng);
    return t;
}

// Weight of a fan_in -> fan_out linear map, std 1/sqrt(fan_in).
inline ad::Tensor linear_weight(std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
    return normal_param({fan_in, fan_out}, 1.0 / std::sqrt(static_cast<double>(fan_in)), rng);
}

inline ad::Tensor zeros_param(ad::Shape shape) { return ad::Tensor::zeros(std::move(shape), true); }
inline ad::Tensor ones_param(ad::Shape shape) { return ad::Tensor::full(std::move(shape), 1.0, true); }

inline ad::Tensor linear(const ad::Tensor& x, const ad::Tensor& w, const ad::Tensor& b) {
    return ad::add(ad::matmul(x, w), b);
}

}  // namespace lfuse
