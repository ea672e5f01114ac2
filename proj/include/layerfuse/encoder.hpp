// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfuse {

/// Layer-wise hidden states of one utterance: `layers[i]` is frames x width.
struct LayerStack {
    std::vector<ad::Tensor> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t frames() const { return layers.empty() ? 0 : layers[0].rows(); }
    std::size_t width() const { return layers.empty() ? 0 : layers[0].cols(); }
    /// Throws std::invalid_argument unless L >= 2, shapes agree and values are finite.
    void validate() const;
};

/// Raw softmax logits over encoder layers. Zero-initialised, i.e. uniform.
struct GateWeights {
    ad::Tensor w;

    static GateWeights uniform(std::size_t num_layers);
    std::vector<double> normalized() const;
};

/// Shape and signal-planting recipe of the synthetic layered feature source.
///
/// Layer `content_layer` carries per-frame token codes, layer
/// `paralinguistic_layer` carries an utterance-level emotion code plus a weak
/// copy of the content. Neighbouring layers carry the same signals attenuated
/// by half per layer of distance; layers three or more away from both are
/// pure noise.
struct SynthSpec {
    std::size_t layers = 8;
    std::size_t frames = 24;
    std::size_t width = 32;
    std::size_t content_layer = 8;         // 1-based
    std::size_t paralinguistic_layer = 4;  // 1-based
    double noise = 0.3;
    double content_leak = 0.3;
    std::size_t vocab_size = 30;  // text symbols
    std::size_t emotion_classes = 4;
    std::size_t min_tokens = 3;
    std::size_t max_tokens = 6;
    std::uint64_t codebook_seed = 7;

    void validate() const;
    /// Signal gain of layer `layer` (1-based) for a signal planted at `source`.
    static double attenuation(std::size_t layer, std::size_t source);
};

/// What a synthetic utterance says and how it sounds. Symbols index the text
/// alphabet (0 .. vocab_size-1), not tokenizer ids.
struct UtteranceContent {
    std::vector<int> symbols;
    int emotion = 0;
};

/// Draws the latent content (transcript and emotion) of an utterance from its
/// seed. Explicit fields in `known` override the drawn ones.
UtteranceContent draw_content(const SynthSpec& spec, std::uint64_t seed,
                              const std::optional<std::vector<int>>& known_symbols,
                              const std::optional<int>& known_emotion);

/// Deterministic in (content, spec, seed).
LayerStack synth_layer_stack(const UtteranceContent& content, const SynthSpec& spec, std::uint64_t seed);

/// Token code vectors (vocab_size + 1 rows; the last is the end-of-speech
/// code used in unused slots) and emotion codes (emotion_classes rows).
struct Codebook {
    std::vector<std::vector<double>> tokens;
    std::vector<std::vector<double>> emotions;
};
Codebook make_codebook(const SynthSpec& spec);

/// Slot (0 .. max_tokens-1) whose token frame `frame` carries.
std::size_t frame_slot(const SynthSpec& spec, std::size_t frame);

/// Softmax-gated sum over the stack's layers; differentiable in both.
ad::Tensor gated_fuse(const LayerStack& stack, const GateWeights& gate);

class FeatureFileError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Feature file: "HFSTK1", u32 L, u32 T0, u32 d0, then L*T0*d0 little-endian
/// float64, layer-major then frame-major.
void write_feature_file(const std::filesystem::path& path, const LayerStack& stack);
LayerStack read_feature_file(const std::filesystem::path& path);

}  // namespace lfuse
