// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/encoder.hpp"

#include "layerfuse/binary_io.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace lfuse {

namespace {
constexpr char kStackMagic[] = "HFSTK1";
}

void LayerStack::validate() const {
    if (layers.size() < 2) throw std::invalid_argument("layer stack needs at least 2 layers");
    for (const auto& layer : layers) {
        if (layer.rank() != 2 || layer.shape() != layers[0].shape())
            throw std::invalid_argument("layer stack shapes disagree: " + ad::shape_str(layers[0].shape()) + " vs " +
                                        ad::shape_str(layer.shape()));
        for (double v : layer.values())
            if (!std::isfinite(v)) throw std::invalid_argument("layer stack contains non-finite values");
    }
}

GateWeights GateWeights::uniform(std::size_t num_layers) {
    return GateWeights{ad::Tensor::zeros({num_layers}, true)};
}

std::vector<double> GateWeights::normalized() const { return ad::softmax_values(w.values()); }

void SynthSpec::validate() const {
    if (layers < 2) throw std::invalid_argument("synth spec: layers must be >= 2");
    if (frames == 0 || width == 0) throw std::invalid_argument("synth spec: frames and width must be positive");
    if (!(1 <= paralinguistic_layer && paralinguistic_layer < content_layer && content_layer <= layers))
        throw std::invalid_argument("synth spec: need 1 <= paralinguistic_layer < content_layer <= layers");
    if (emotion_classes < 2) throw std::invalid_argument("synth spec: emotion_classes must be >= 2");
    if (vocab_size == 0) throw std::invalid_argument("synth spec: vocab_size must be positive");
    if (min_tokens == 0 || min_tokens > max_tokens) throw std::invalid_argument("synth spec: need 1 <= min_tokens <= max_tokens");
    if (max_tokens > frames) throw std::invalid_argument("synth spec: max_tokens must not exceed frames");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw std::invalid_argument("synth spec: noise must be finite and >= 0");
}

double SynthSpec::attenuation(std::size_t layer, std::size_t source) {
    const std::size_t dist = layer > source ? layer - source : source - layer;
    return dist >= 3 ? 0.0 : std::ldexp(1.0, -static_cast<int>(dist));
}

Codebook make_codebook(const SynthSpec& spec) {
    std::mt19937_64 rng(spec.codebook_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Codebook book;
    auto draw = [&](std::size_t rows) {
        std::vector<std::vector<double>> out(rows, std::vector<double>(spec.width));
        for (auto& row : out)
            for (double& v : row) v = normal(rng);
        return out;
    };
    book.tokens = draw(spec.vocab_size + 1);
    book.emotions = draw(spec.emotion_classes);
    return book;
}

std::size_t frame_slot(const SynthSpec& spec, std::size_t frame) { return frame * spec.max_tokens / spec.frames; }

UtteranceContent draw_content(const SynthSpec& spec, std::uint64_t seed,
                              const std::optional<std::vector<int>>& known_symbols,
                              const std::optional<int>& known_emotion) {
    // Content draws use their own stream so they never shift the noise stream.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_int_distribution<std::size_t> length(spec.min_tokens, spec.max_tokens);
    std::uniform_int_distribution<int> symbol(0, static_cast<int>(spec.vocab_size) - 1);
    std::uniform_int_distribution<int> emotion(0, static_cast<int>(spec.emotion_classes) - 1);
    UtteranceContent content;
    const std::size_t n = length(rng);
    for (std::size_t i = 0; i < n; ++i) content.symbols.push_back(symbol(rng));
    content.emotion = emotion(rng);
    if (known_symbols) content.symbols = *known_symbols;
    if (known_emotion) content.emotion = *known_emotion;
    return content;
}

LayerStack synth_layer_stack(const UtteranceContent& content, const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (content.symbols.size() > spec.max_tokens)
        throw std::invalid_argument("synth_layer_stack: transcript longer than max_tokens");
    if (content.emotion < 0 || static_cast<std::size_t>(content.emotion) >= spec.emotion_classes)
        throw std::invalid_argument("synth_layer_stack: emotion label out of range");
    for (int s : content.symbols)
        if (s < 0 || static_cast<std::size_t>(s) >= spec.vocab_size)
            throw std::invalid_argument("synth_layer_stack: symbol out of range");

    const Codebook book = make_codebook(spec);
    const std::size_t t0 = spec.frames, d0 = spec.width;
    const auto& end_code = book.tokens[spec.vocab_size];
    const auto& emo_code = book.emotions[static_cast<std::size_t>(content.emotion)];

    std::vector<double> content_plane(t0 * d0), emotion_plane(t0 * d0);
    for (std::size_t f = 0; f < t0; ++f) {
        const std::size_t slot = frame_slot(spec, f);
        const auto& code = slot < content.symbols.size() ? book.tokens[static_cast<std::size_t>(content.symbols[slot])] : end_code;
        for (std::size_t k = 0; k < d0; ++k) {
            content_plane[f * d0 + k] = code[k];
            emotion_plane[f * d0 + k] = emo_code[k] + spec.content_leak * code[k];
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    LayerStack stack;
    for (std::size_t layer = 1; layer <= spec.layers; ++layer) {
        const double gc = SynthSpec::attenuation(layer, spec.content_layer);
        const double gp = SynthSpec::attenuation(layer, spec.paralinguistic_layer);
        std::vector<double> values(t0 * d0);
        for (std::size_t i = 0; i < values.size(); ++i)
            values[i] = gc * content_plane[i] + gp * emotion_plane[i] + spec.noise * normal(rng);
        stack.layers.push_back(ad::Tensor::from({t0, d0}, std::move(values)));
    }
    return stack;
}

ad::Tensor gated_fuse(const LayerStack& stack, const GateWeights& gate) {
    if (gate.w.numel() != stack.num_layers())
        throw std::invalid_argument("gated_fuse: gate has " + std::to_string(gate.w.numel()) + " weights for " +
                                    std::to_string(stack.num_layers()) + " layers");
    return ad::weighted_sum(stack.layers, ad::softmax(gate.w));
}

void write_feature_file(const std::filesystem::path& path, const LayerStack& stack) {
    stack.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FeatureFileError("cannot open feature file for writing: " + path.string());
    out.write(kStackMagic, 6);
    io::write_u32(out, static_cast<std::uint32_t>(stack.num_layers()));
    io::write_u32(out, static_cast<std::uint32_t>(stack.frames()));
    io::write_u32(out, static_cast<std::uint32_t>(stack.width()));
    for (const auto& layer : stack.layers)
        for (double v : layer.values()) io::write_f64(out, v);
    if (!out) throw FeatureFileError("write failed: " + path.string());
}

LayerStack read_feature_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FeatureFileError("cannot open feature file: " + path.string());
    char magic[6];
    in.read(magic, 6);
    if (!in || std::string(magic, 6) != kStackMagic) throw FeatureFileError("bad feature file magic: " + path.string());
    std::uint32_t l = 0, t0 = 0, d0 = 0;
    if (!io::read_u32(in, l) || !io::read_u32(in, t0) || !io::read_u32(in, d0))
        throw FeatureFileError("truncated feature file header: " + path.string());
    if (l < 2 || t0 == 0 || d0 == 0) throw FeatureFileError("invalid feature file dimensions: " + path.string());
    LayerStack stack;
    for (std::uint32_t i = 0; i < l; ++i) {
        std::vector<double> values(static_cast<std::size_t>(t0) * d0);
        for (double& v : values)
            if (!io::read_f64(in, v)) throw FeatureFileError("truncated feature file body: " + path.string());
        stack.layers.push_back(ad::Tensor::from({t0, d0}, std::move(values)));
    }
    stack.validate();
    return stack;
}

}  // namespace lfuse
