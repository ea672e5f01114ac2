// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/model.hpp"

#include <random>
#include <stdexcept>

namespace lfuse {

ModelConfig ModelConfig::from_run(const RunConfig& run) {
    run.validate();
    ModelConfig c;
    c.encoder_layers = run.synth.layers;
    c.encoder_width = run.synth.width;
    c.num_symbols = run.synth.vocab_size;
    c.emotion_classes = run.synth.emotion_classes;
    c.lm.input_width = run.synth.width;
    c.lm.d_model = run.d_model;
    c.lm.heads = run.heads;
    c.lm.ffn = run.ffn;
    c.lm.layers = run.lm_layers;
    c.lm.activation = run.activation;
    c.lm.vocab = c.vocab().size();
    c.beta = run.beta;
    c.encoder_mode = run.encoder_mode;
    c.fixed_layer = run.fixed_layer;
    c.fusion_mode = run.fusion_mode;
    return c;
}

Model Model::init(const ModelConfig& config, std::uint64_t seed) {
    if (config.lm.vocab != config.vocab().size())
        throw std::invalid_argument("model config: lm vocab " + std::to_string(config.lm.vocab) +
                                    " does not match tokenizer vocabulary " + std::to_string(config.vocab().size()));
    if (config.lm.input_width != config.encoder_width)
        throw std::invalid_argument("model config: lm input width must equal encoder width");
    if (config.encoder_mode == EncoderMode::FixedLayer &&
        (config.fixed_layer < 1 || config.fixed_layer > config.encoder_layers))
        throw std::invalid_argument("model config: fixed layer out of range");
    std::mt19937_64 rng(seed);
    Model m;
    m.config_ = config;
    m.gate = GateWeights::uniform(config.encoder_layers);
    m.lm = LMParams::init(config.lm, rng);
    m.fusion = DynamicFusionParams::init(config.lm.layers, config.lm.d_model, config.beta, rng);
    m.asr_head = LinearHead::init(config.lm.d_model, config.lm.vocab, rng);
    m.ser_head = LinearHead::init(config.lm.d_model, config.emotion_classes, rng);
    return m;
}

ParamList Model::parameters() const {
    ParamList out;
    out.push_back({"encoder.gate", gate.w});
    lm.collect(out);
    fusion.collect(out);
    out.push_back({"heads.asr.w", asr_head.w});
    out.push_back({"heads.asr.b", asr_head.b});
    out.push_back({"heads.ser.w", ser_head.w});
    out.push_back({"heads.ser.b", ser_head.b});
    return out;
}

Model Model::clone() const {
    Model copy = Model::init(config_, 0);
    const ParamList src = parameters();
    const ParamList dst = copy.parameters();
    for (std::size_t i = 0; i < src.size(); ++i) {
        auto out = dst[i].tensor;
        std::copy(src[i].tensor.values().begin(), src[i].tensor.values().end(), out.mutable_values().begin());
    }
    return copy;
}

ad::Tensor Model::encode_speech(const LayerStack& stack) const {
    if (stack.num_layers() != config_.encoder_layers || stack.width() != config_.encoder_width)
        throw std::invalid_argument("layer stack is " + std::to_string(stack.num_layers()) + "x" +
                                    std::to_string(stack.width()) + " but the model expects " +
                                    std::to_string(config_.encoder_layers) + "x" + std::to_string(config_.encoder_width));
    if (config_.encoder_mode == EncoderMode::FixedLayer) return stack.layers[config_.fixed_layer - 1];
    return gated_fuse(stack, gate);
}

Model::Forward Model::run(const LayerStack& stack, Task task, std::span<const int> targets) const {
    Forward fwd;
    fwd.input = assemble_input(lm, encode_speech(stack), TaskPrompt::for_task(task, vocab()), targets);
    fwd.layers = encode_layers(fwd.input, lm);
    return fwd;
}

FusionCoefficients Model::coefficients(const Forward& fwd, Task task, std::size_t steps) const {
    const std::size_t bos = fwd.input.first_decoding_position();
    return fusion_coefficients(fwd.layers.rows(bos, bos + steps), task, fusion, config_.lm.activation);
}

ad::Tensor Model::decoder_states(const Forward& fwd, Task task, std::size_t steps) const {
    const std::size_t bos = fwd.input.first_decoding_position();
    if (config_.fusion_mode == FusionMode::LastLayer) return ad::slice_rows(fwd.layers.layers.back(), bos, bos + steps);
    const LayerOutputs window = fwd.layers.rows(bos, bos + steps);
    return fuse_all(window, fusion_coefficients(window, task, fusion, config_.lm.activation));
}

ad::Tensor Model::sample_loss(const LayerStack& stack, const Sample& sample) const {
    if (sample.task == Task::Asr) {
        const Forward fwd = run(stack, Task::Asr, sample.transcript);
        std::vector<int> targets(sample.transcript);
        targets.push_back(Vocabulary::kEos);
        return asr_loss(decoder_states(fwd, Task::Asr, targets.size()), targets, asr_head);
    }
    if (!sample.label) throw std::invalid_argument(sample.id + ": SER sample without label");
    const Forward fwd = run(stack, Task::Ser);
    return ser_loss(decoder_states(fwd, Task::Ser, 1), *sample.label, ser_head);
}

std::vector<double> Model::ser_distribution(const LayerStack& stack) const {
    ad::NoGradGuard no_grad;
    const Forward fwd = run(stack, Task::Ser);
    return ser_predict(decoder_states(fwd, Task::Ser, 1), ser_head);
}

int Model::ser_label(const LayerStack& stack) const { return static_cast<int>(argmax(ser_distribution(stack))); }

DecodeResult Model::greedy_decode(const LayerStack& stack, std::size_t max_len) const {
    ad::NoGradGuard no_grad;
    DecodeResult result;
    while (result.tokens.size() < max_len) {
        const Forward fwd = run(stack, Task::Asr, result.tokens);
        const std::size_t steps = result.tokens.size() + 1;
        const ad::Tensor states = decoder_states(fwd, Task::Asr, steps);
        const int next = static_cast<int>(argmax(asr_step(ad::slice_rows(states, steps - 1, steps), asr_head)));
        if (next == Vocabulary::kEos) return result;
        result.tokens.push_back(next);
    }
    result.truncated = true;
    return result;
}

}  // namespace lfuse
