// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/slm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace lfuse {

std::string_view task_name(Task task) { return task == Task::Asr ? "asr" : "ser"; }

Task parse_task(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "asr") return Task::Asr;
    if (lower == "ser") return Task::Ser;
    throw std::invalid_argument("unknown task '" + std::string(name) + "' (expected asr or ser)");
}

TaskPrompt TaskPrompt::for_task(Task task, const Vocabulary& vocab) { return TaskPrompt{task, {vocab.prompt_id(task)}}; }

LMConfig LMConfig::desk() { return LMConfig{}; }

LMConfig LMConfig::paper_scale() {
    LMConfig c;
    c.d_model = 768;
    c.heads = 12;
    c.ffn = 2048;
    c.layers = 12;
    return c;
}

void LMConfig::validate() const {
    if (layers < 2) throw std::invalid_argument("lm config: layers must be >= 2");
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
        throw std::invalid_argument("lm config: d_model must be a positive multiple of heads");
    if (d_model < 4) throw std::invalid_argument("lm config: d_model must be >= 4");
    if (ffn == 0 || input_width == 0 || vocab == 0) throw std::invalid_argument("lm config: ffn, input_width, vocab must be positive");
}

LMParams LMParams::init(const LMConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::size_t d = config.d_model;
    LMParams p;
    p.config = config;
    p.embed = normal_param({config.vocab, d}, 1.0, rng);
    p.speech_w = linear_weight(config.input_width, d, rng);
    p.speech_b = zeros_param({d});
    for (std::size_t m = 0; m < config.layers; ++m) {
        TransformerBlock b;
        b.wq = linear_weight(d, d, rng);
        b.bq = zeros_param({d});
        b.wk = linear_weight(d, d, rng);
        b.bk = zeros_param({d});
        b.wv = linear_weight(d, d, rng);
        b.bv = zeros_param({d});
        b.wo = linear_weight(d, d, rng);
        b.bo = zeros_param({d});
        b.ln1_gain = ones_param({d});
        b.ln1_bias = zeros_param({d});
        b.ffn_w1 = linear_weight(d, config.ffn, rng);
        b.ffn_b1 = zeros_param({config.ffn});
        b.ffn_w2 = linear_weight(config.ffn, d, rng);
        b.ffn_b2 = zeros_param({d});
        b.ln2_gain = ones_param({d});
        b.ln2_bias = zeros_param({d});
        p.blocks.push_back(std::move(b));
    }
    return p;
}

void LMParams::collect(ParamList& out) const {
    out.push_back({"lm.embed", embed});
    out.push_back({"lm.speech.w", speech_w});
    out.push_back({"lm.speech.b", speech_b});
    for (std::size_t m = 0; m < blocks.size(); ++m) {
        const auto& b = blocks[m];
        const std::string p = "lm.block" + std::to_string(m + 1) + ".";
        out.push_back({p + "attn.wq", b.wq});
        out.push_back({p + "attn.bq", b.bq});
        out.push_back({p + "attn.wk", b.wk});
        out.push_back({p + "attn.bk", b.bk});
        out.push_back({p + "attn.wv", b.wv});
        out.push_back({p + "attn.bv", b.bv});
        out.push_back({p + "attn.wo", b.wo});
        out.push_back({p + "attn.bo", b.bo});
        out.push_back({p + "ln1.gain", b.ln1_gain});
        out.push_back({p + "ln1.bias", b.ln1_bias});
        out.push_back({p + "ffn.w1", b.ffn_w1});
        out.push_back({p + "ffn.b1", b.ffn_b1});
        out.push_back({p + "ffn.w2", b.ffn_w2});
        out.push_back({p + "ffn.b2", b.ffn_b2});
        out.push_back({p + "ln2.gain", b.ln2_gain});
        out.push_back({p + "ln2.bias", b.ln2_bias});
    }
}

std::vector<double> sinusoidal_positions(std::size_t length, std::size_t width) {
    std::vector<double> pe(length * width);
    for (std::size_t pos = 0; pos < length; ++pos)
        for (std::size_t i = 0; i < width; ++i) {
            const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
            const double angle = static_cast<double>(pos) * rate;
            pe[pos * width + i] = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    return pe;
}

LMInput assemble_input(const LMParams& params, const ad::Tensor& fused, const TaskPrompt& prompt,
                       std::span<const int> targets) {
    if (!fused.defined() || fused.rank() != 2 || fused.rows() == 0)
        throw std::invalid_argument("assemble_input: empty speech segment");
    if (fused.cols() != params.config.input_width)
        throw ad::ShapeError("assemble_input", fused.shape(), ad::Shape{params.config.input_width, params.config.d_model});

    LMInput in;
    in.speech_len = fused.rows();
    in.prompt_begin = in.speech_len;
    in.prompt_len = prompt.ids.size();
    in.bos = in.prompt_begin + in.prompt_len;
    in.targets_begin = in.bos + 1;
    in.targets_len = targets.size();

    std::vector<int> token_ids(prompt.ids);
    token_ids.push_back(Vocabulary::kBos);
    token_ids.insert(token_ids.end(), targets.begin(), targets.end());

    const ad::Tensor parts[] = {linear(fused, params.speech_w, params.speech_b), ad::embedding(params.embed, token_ids)};
    const ad::Tensor sequence = ad::concat_rows(parts);
    const std::size_t t = in.length(), d = params.config.d_model;
    in.embedded = ad::add(sequence, ad::Tensor::from({t, d}, sinusoidal_positions(t, d)));
    return in;
}

LayerOutputs LayerOutputs::rows(std::size_t begin, std::size_t end) const {
    LayerOutputs out;
    for (const auto& layer : layers) out.layers.push_back(ad::slice_rows(layer, begin, end));
    return out;
}

namespace {

ad::Tensor causal_attention(const ad::Tensor& x, const TransformerBlock& b, std::size_t heads) {
    const std::size_t d = x.cols(), dh = d / heads;
    const ad::Tensor q = linear(x, b.wq, b.bq);
    const ad::Tensor k = linear(x, b.wk, b.bk);
    const ad::Tensor v = linear(x, b.wv, b.bv);
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<ad::Tensor> outputs;
    outputs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        const ad::Tensor qh = ad::slice_cols(q, h * dh, (h + 1) * dh);
        const ad::Tensor kh = ad::slice_cols(k, h * dh, (h + 1) * dh);
        const ad::Tensor vh = ad::slice_cols(v, h * dh, (h + 1) * dh);
        const ad::Tensor scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale);
        outputs.push_back(ad::matmul(ad::causal_softmax(scores), vh));
    }
    const ad::Tensor merged = heads == 1 ? outputs[0] : ad::concat_cols(outputs);
    return linear(merged, b.wo, b.bo);
}

bool all_finite(const ad::Tensor& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

LayerOutputs encode_layers(const LMInput& input, const LMParams& params) {
    const LMConfig& cfg = params.config;
    if (input.embedded.rank() != 2 || input.embedded.cols() != cfg.d_model)
        throw ad::ShapeError("encode_layers", input.embedded.shape(), ad::Shape{input.length(), cfg.d_model});
    LayerOutputs out;
    ad::Tensor x = input.embedded;
    for (std::size_t m = 0; m < params.blocks.size(); ++m) {
        const TransformerBlock& b = params.blocks[m];
        const ad::Tensor h1 = ad::layer_norm(ad::add(x, causal_attention(x, b, cfg.heads)), b.ln1_gain, b.ln1_bias);
        const ad::Tensor inner = ad::activate(linear(h1, b.ffn_w1, b.ffn_b1), cfg.activation);
        x = ad::layer_norm(ad::add(h1, linear(inner, b.ffn_w2, b.ffn_b2)), b.ln2_gain, b.ln2_bias);
        if (!all_finite(x)) throw NonFiniteActivation(m + 1);
        out.layers.push_back(x);
    }
    return out;
}

}  // namespace lfuse
