// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/config.hpp"
#include "layerfuse/data.hpp"
#include "layerfuse/encoder.hpp"
#include "layerfuse/fusion.hpp"
#include "layerfuse/heads.hpp"
#include "layerfuse/slm.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace lfuse {

struct ModelConfig {
    std::size_t encoder_layers = 8;
    std::size_t encoder_width = 32;
    LMConfig lm;
    double beta = 0.5;
    EncoderMode encoder_mode = EncoderMode::Gated;
    std::size_t fixed_layer = 8;  // 1-based
    FusionMode fusion_mode = FusionMode::Dynamic;
    std::size_t emotion_classes = 4;
    std::size_t num_symbols = 30;

    static ModelConfig from_run(const RunConfig& run);
    Vocabulary vocab() const { return Vocabulary{num_symbols}; }
};

struct DecodeResult {
    std::vector<int> tokens;
    bool truncated = false;
};

/// Gated encoder fusion, causal transformer LM, prompt-adaptive layer fusion
/// and the two task heads.
class Model {
public:
    struct Forward {
        LMInput input;
        LayerOutputs layers;
    };

    static Model init(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    Vocabulary vocab() const { return config_.vocab(); }

    /// Parameters in a fixed order; the tensors alias this model's storage.
    ParamList parameters() const;
    /// Independent copy of every parameter.
    Model clone() const;

    ad::Tensor encode_speech(const LayerStack& stack) const;
    Forward run(const LayerStack& stack, Task task, std::span<const int> targets = {}) const;
    /// Fused decoder states for rows [bos, bos + steps) of a forward pass.
    ad::Tensor decoder_states(const Forward& fwd, Task task, std::size_t steps) const;
    /// Dynamic-fusion coefficients of rows [bos, bos + steps).
    FusionCoefficients coefficients(const Forward& fwd, Task task, std::size_t steps) const;

    /// Teacher-forced token NLL for ASR samples, class NLL for SER samples.
    ad::Tensor sample_loss(const LayerStack& stack, const Sample& sample) const;
    std::vector<double> ser_distribution(const LayerStack& stack) const;
    int ser_label(const LayerStack& stack) const;
    /// Argmax decoding from BOS; stops at EOS or after `max_len` tokens.
    DecodeResult greedy_decode(const LayerStack& stack, std::size_t max_len) const;

    GateWeights gate;
    LMParams lm;
    DynamicFusionParams fusion;
    AsrHead asr_head;
    SerHead ser_head;

private:
    ModelConfig config_;
};

}  // namespace lfuse
