// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"
#include "layerfuse/params.hpp"

#include <cstddef>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lfuse {

enum class Task { Asr = 0, Ser = 1 };
inline constexpr std::size_t kNumTasks = 2;

std::string_view task_name(Task task);
/// Accepts "asr" / "ser" (case-insensitive).
Task parse_task(std::string_view name);

/// Token id layout: specials, then the text alphabet, then one reserved
/// prompt id per task.
struct Vocabulary {
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kFirstSymbol = 3;

    std::size_t num_symbols = 30;

    std::size_t size() const { return kFirstSymbol + num_symbols + kNumTasks; }
    int symbol_id(int symbol) const { return kFirstSymbol + symbol; }
    int symbol_of(int id) const { return id - kFirstSymbol; }
    bool is_text(int id) const { return id >= kFirstSymbol && id < kFirstSymbol + static_cast<int>(num_symbols); }
    int prompt_id(Task task) const { return kFirstSymbol + static_cast<int>(num_symbols) + static_cast<int>(task); }
    bool is_prompt(int id) const { return id >= prompt_id(Task::Asr) && id < static_cast<int>(size()); }
};

struct TaskPrompt {
    Task task = Task::Asr;
    std::vector<int> ids;

    static TaskPrompt for_task(Task task, const Vocabulary& vocab);
};

struct LMConfig {
    std::size_t input_width = 32;  // encoder width d0
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t ffn = 256;
    std::size_t layers = 4;
    std::size_t vocab = 35;
    ad::Activation activation = ad::Activation::Gelu;

    static LMConfig desk();
    /// 12 blocks, width 768, 12 heads, FFN 2048.
    static LMConfig paper_scale();
    void validate() const;
};

struct TransformerBlock {
    ad::Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Tensor ln1_gain, ln1_bias;
    ad::Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    ad::Tensor ln2_gain, ln2_bias;
};

struct LMParams {
    LMConfig config;
    ad::Tensor embed;     // vocab x d
    ad::Tensor speech_w;  // d0 x d
    ad::Tensor speech_b;  // d
    std::vector<TransformerBlock> blocks;

    static LMParams init(const LMConfig& config, std::mt19937_64& rng);
    void collect(ParamList& out) const;
};

/// Embedded LM input with the boundaries of its segments, which are laid out
/// as speech, prompt, BOS, then (when teacher forcing) target tokens.
struct LMInput {
    ad::Tensor embedded;  // T x d
    std::size_t speech_len = 0;
    std::size_t prompt_begin = 0;
    std::size_t prompt_len = 0;
    std::size_t bos = 0;
    std::size_t targets_begin = 0;
    std::size_t targets_len = 0;

    std::size_t length() const { return speech_len + prompt_len + 1 + targets_len; }
    std::size_t first_decoding_position() const { return bos; }
};

LMInput assemble_input(const LMParams& params, const ad::Tensor& fused, const TaskPrompt& prompt,
                       std::span<const int> targets = {});

/// Sinusoidal position table, `length` x `width`.
std::vector<double> sinusoidal_positions(std::size_t length, std::size_t width);

/// Per-block contextual representations R_1..R_M, each T x d.
struct LayerOutputs {
    std::vector<ad::Tensor> layers;

    std::size_t num_layers() const { return layers.size(); }
    std::size_t length() const { return layers.empty() ? 0 : layers[0].rows(); }
    std::size_t width() const { return layers.empty() ? 0 : layers[0].cols(); }
    /// Rows [begin, end) of every layer.
    LayerOutputs rows(std::size_t begin, std::size_t end) const;
};

class NonFiniteActivation : public std::runtime_error {
public:
    NonFiniteActivation(std::size_t layer)
        : std::runtime_error("non-finite activation in transformer layer " + std::to_string(layer)), layer_(layer) {}
    std::size_t layer() const { return layer_; }

private:
    std::size_t layer_;
};

/// Runs the causal post-norm transformer stack and returns every block's
/// output. Throws NonFiniteActivation naming the 1-based layer on overflow.
LayerOutputs encode_layers(const LMInput& input, const LMParams& params);

}  // namespace lfuse
