// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"
#include "layerfuse/config.hpp"
#include "layerfuse/data.hpp"
#include "layerfuse/model.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace lfuse::testing {

inline ad::Tensor random_tensor(ad::Shape shape, std::mt19937_64& rng, bool requires_grad = true, double scale = 1.0) {
    ad::Tensor t = ad::Tensor::zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> normal(0.0, scale);
    for (double& v : t.mutable_values()) v = normal(rng);
    return t;
}

// sum(y .* R) for a fixed random R, so every output coordinate reaches the loss
// with a distinct weight.
inline ad::Tensor readout(const ad::Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0xabcdefULL);
    const ad::Tensor r = random_tensor(y.shape(), rng, false);
    return ad::sum(ad::mul(y, r));
}

// A few-second configuration: 4 encoder layers of 6 x 8, a 2-block LM of width 16.
inline RunConfig tiny_config() {
    RunConfig c;
    c.synth.layers = 4;
    c.synth.frames = 6;
    c.synth.width = 8;
    c.synth.content_layer = 4;
    c.synth.paralinguistic_layer = 2;
    c.synth.min_tokens = 2;
    c.synth.max_tokens = 3;
    c.d_model = 16;
    c.heads = 2;
    c.ffn = 32;
    c.lm_layers = 2;
    c.fixed_layer = 4;
    c.n_asr = 8;
    c.n_ser = 8;
    c.n_valid_asr = 4;
    c.n_valid_ser = 4;
    c.epochs = 2;
    c.warmup = 2;
    c.batch_size = 2;
    c.accumulation = 2;
    return c;
}

inline Model tiny_model(std::uint64_t seed = 5, const RunConfig& cfg = tiny_config()) {
    return Model::init(ModelConfig::from_run(cfg), seed);
}

// Unique scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("layerfuse-" + tag + "-" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace lfuse::testing
