// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/slm.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lfuse;
using lfuse::testing::random_tensor;

namespace {

LMParams desk_params(std::uint64_t seed = 1) {
    std::mt19937_64 rng(seed);
    return LMParams::init(LMConfig::desk(), rng);
}

LMInput raw_input(ad::Tensor embedded) {
    LMInput in;
    in.speech_len = embedded.rows() - 1;
    in.prompt_begin = in.speech_len;
    in.prompt_len = 0;
    in.bos = in.speech_len;
    in.targets_begin = in.bos + 1;
    in.embedded = std::move(embedded);
    return in;
}

}  // namespace

TEST(Vocabulary, LayoutKeepsPromptsDisjointFromText) {
    const Vocabulary v;
    EXPECT_EQ(v.size(), 35u);
    EXPECT_EQ(v.symbol_id(0), 3);
    EXPECT_TRUE(v.is_text(3));
    EXPECT_TRUE(v.is_text(32));
    EXPECT_FALSE(v.is_text(33));
    for (Task t : {Task::Asr, Task::Ser}) {
        for (int id : TaskPrompt::for_task(t, v).ids) {
            EXPECT_TRUE(v.is_prompt(id));
            EXPECT_FALSE(v.is_text(id));
            EXPECT_NE(id, Vocabulary::kBos);
            EXPECT_NE(id, Vocabulary::kEos);
            EXPECT_NE(id, Vocabulary::kPad);
        }
    }
    EXPECT_NE(TaskPrompt::for_task(Task::Asr, v).ids, TaskPrompt::for_task(Task::Ser, v).ids);
}

TEST(Task, ParsesNamesCaseInsensitively) {
    EXPECT_EQ(parse_task("ASR"), Task::Asr);
    EXPECT_EQ(parse_task("ser"), Task::Ser);
    EXPECT_THROW(parse_task("tts"), std::invalid_argument);
    EXPECT_EQ(task_name(Task::Ser), "ser");
}

TEST(LMConfig, PresetsValidate) {
    EXPECT_NO_THROW(LMConfig::desk().validate());
    const LMConfig p = LMConfig::paper_scale();
    EXPECT_EQ(p.layers, 12u);
    EXPECT_EQ(p.d_model, 768u);
    EXPECT_EQ(p.heads, 12u);
    EXPECT_EQ(p.ffn, 2048u);
    EXPECT_NO_THROW(p.validate());
    LMConfig bad;
    bad.layers = 1;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
    bad = LMConfig{};
    bad.heads = 3;
    EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(AssembleInput, LengthArithmeticWithoutTargets) {
    const LMParams p = desk_params();
    std::mt19937_64 rng(1);
    const auto in = assemble_input(p, random_tensor({24, 32}, rng, false), TaskPrompt::for_task(Task::Ser, Vocabulary{}));
    EXPECT_EQ(in.length(), 26u);
    EXPECT_EQ(in.embedded.shape(), (ad::Shape{26, 64}));
    EXPECT_EQ(in.first_decoding_position(), 25u);
    EXPECT_EQ(in.bos, 25u);
    EXPECT_EQ(in.prompt_begin, 24u);
}

TEST(AssembleInput, LengthArithmeticWithTargets) {
    const LMParams p = desk_params();
    std::mt19937_64 rng(2);
    const int targets[] = {5, 6, 7, 8, 2};
    const auto in =
        assemble_input(p, random_tensor({24, 32}, rng, false), TaskPrompt::for_task(Task::Asr, Vocabulary{}), targets);
    EXPECT_EQ(in.length(), 31u);
    EXPECT_EQ(in.embedded.rows(), 31u);
    EXPECT_EQ(in.targets_begin, 26u);
    EXPECT_EQ(in.targets_len, 5u);
    EXPECT_EQ(in.speech_len + in.prompt_len + 1 + in.targets_len, in.length());
}

TEST(AssembleInput, SegmentsAreSpeechPromptBosTargetsWithPositions) {
    const LMParams p = desk_params();
    std::mt19937_64 rng(3);
    const auto fused = random_tensor({4, 32}, rng, false);
    const int targets[] = {9, 10};
    const auto in = assemble_input(p, fused, TaskPrompt::for_task(Task::Asr, Vocabulary{}), targets);
    const auto pe = sinusoidal_positions(in.length(), 64);
    const auto proj = linear(fused, p.speech_w, p.speech_b);
    const std::vector<int> tokens = {Vocabulary{}.prompt_id(Task::Asr), Vocabulary::kBos, 9, 10};
    for (std::size_t t = 0; t < in.length(); ++t)
        for (std::size_t j = 0; j < 64; ++j) {
            const double content = t < 4 ? proj.at(t, j) : p.embed.at(static_cast<std::size_t>(tokens[t - 4]), j);
            EXPECT_DOUBLE_EQ(in.embedded.at(t, j), content + pe[t * 64 + j]) << "t=" << t;
        }
}

TEST(AssembleInput, RejectsEmptySpeechAndWrongWidth) {
    const LMParams p = desk_params();
    EXPECT_THROW(assemble_input(p, ad::Tensor::zeros({0, 32}), TaskPrompt::for_task(Task::Asr, Vocabulary{})),
                 std::invalid_argument);
    EXPECT_THROW(assemble_input(p, ad::Tensor(), TaskPrompt::for_task(Task::Asr, Vocabulary{})), std::invalid_argument);
    EXPECT_THROW(assemble_input(p, ad::Tensor::zeros({3, 31}), TaskPrompt::for_task(Task::Asr, Vocabulary{})),
                 ad::ShapeError);
}

TEST(SinusoidalPositions, MatchesClosedForm) {
    const auto pe = sinusoidal_positions(7, 6);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_EQ(pe[j], j % 2 == 0 ? 0.0 : 1.0);
    // position 5, pair index 1: angle 5 / 10000^(2/6)
    const double angle = 5.0 / std::pow(10000.0, 2.0 / 6.0);
    EXPECT_NEAR(pe[5 * 6 + 2], std::sin(angle), 1e-15);
    EXPECT_NEAR(pe[5 * 6 + 3], std::cos(angle), 1e-15);
}

TEST(EncodeLayers, ReturnsMLayersOfTByD) {
    const LMParams p = desk_params();
    std::mt19937_64 rng(4);
    const auto in = assemble_input(p, random_tensor({24, 32}, rng, false), TaskPrompt::for_task(Task::Ser, Vocabulary{}));
    const auto out = encode_layers(in, p);
    ASSERT_EQ(out.num_layers(), 4u);
    for (const auto& r : out.layers) EXPECT_EQ(r.shape(), (ad::Shape{26, 64}));
}

TEST(EncodeLayers, CausalityExhaustiveOverTenPositions) {
    const LMParams p = desk_params(7);
    std::mt19937_64 rng(5);
    const ad::Tensor base = random_tensor({10, 64}, rng, false);
    const auto ref = encode_layers(raw_input(base), p);
    for (std::size_t t = 0; t < 10; ++t) {
        ad::Tensor moved = base.clone();
        for (std::size_t j = 0; j < 64; ++j) moved.mutable_values()[t * 64 + j] += 0.75;
        const auto out = encode_layers(raw_input(moved), p);
        for (std::size_t m = 0; m < 4; ++m) {
            for (std::size_t s = 0; s < 10; ++s) {
                bool same = true;
                for (std::size_t j = 0; j < 64; ++j) same &= out.layers[m].at(s, j) == ref.layers[m].at(s, j);
                if (s < t)
                    EXPECT_TRUE(same) << "layer " << m + 1 << " position " << s << " saw position " << t;
                else if (s == t)
                    EXPECT_FALSE(same) << "layer " << m + 1 << " position " << s << " ignored its own input";
            }
        }
    }
}

TEST(EncodeLayers, PromptChangeLeavesEarlierSpeechPositionsUnchanged) {
    const LMParams p = desk_params(8);
    std::mt19937_64 rng(6);
    const auto fused = random_tensor({6, 32}, rng, false);
    const auto a = encode_layers(assemble_input(p, fused, TaskPrompt::for_task(Task::Asr, Vocabulary{})), p);
    const auto b = encode_layers(assemble_input(p, fused, TaskPrompt::for_task(Task::Ser, Vocabulary{})), p);
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t s = 0; s < 8; ++s) {
            bool same = true;
            for (std::size_t j = 0; j < 64; ++j) same &= a.layers[m].at(s, j) == b.layers[m].at(s, j);
            EXPECT_EQ(same, s < 6) << "layer " << m + 1 << " position " << s;
        }
}

TEST(EncodeLayers, DeterministicForward) {
    const LMParams p = desk_params(9);
    std::mt19937_64 rng(7);
    const auto in = assemble_input(p, random_tensor({5, 32}, rng, false), TaskPrompt::for_task(Task::Asr, Vocabulary{}));
    const auto a = encode_layers(in, p);
    const auto b = encode_layers(in, p);
    for (std::size_t m = 0; m < 4; ++m)
        EXPECT_TRUE(std::equal(a.layers[m].values().begin(), a.layers[m].values().end(), b.layers[m].values().begin()));
}

TEST(EncodeLayers, BlockOneGradientMatchesFiniteDifferences) {
    const LMParams p = desk_params(10);
    std::mt19937_64 rng(8);
    const auto fused = random_tensor({6, 32}, rng, false);
    const int targets[] = {4, 5};
    const TransformerBlock& b = p.blocks[0];
    const std::vector<ad::Tensor> inputs = {b.wq, b.bq, b.wk, b.bk, b.wv, b.bv, b.wo, b.bo, b.ln1_gain, b.ln1_bias,
                                            b.ffn_w1, b.ffn_b1, b.ffn_w2, b.ffn_b2, b.ln2_gain, b.ln2_bias};
    const auto r = ad::grad_check(
        [&](std::span<const ad::Tensor>) {
            const auto in = assemble_input(p, fused, TaskPrompt::for_task(Task::Asr, Vocabulary{}), targets);
            return lfuse::testing::readout(encode_layers(in, p).layers.back(), 3);
        },
        inputs, {1e-5, 6, 11});
    ASSERT_TRUE(r.finite);
    EXPECT_LT(r.max_rel_error, 1e-4);
    EXPECT_EQ(r.coords_checked, 16u * 6u);
}

TEST(EncodeLayers, NonFiniteActivationNamesTheLayer) {
    LMParams p = desk_params(11);
    for (double& v : p.blocks[1].ffn_w2.mutable_values()) v = 1e308;
    for (double& v : p.blocks[1].ffn_b2.mutable_values()) v = 1e308;
    std::mt19937_64 rng(9);
    const auto in = assemble_input(p, random_tensor({3, 32}, rng, false), TaskPrompt::for_task(Task::Ser, Vocabulary{}));
    try {
        encode_layers(in, p);
        FAIL() << "expected NonFiniteActivation";
    } catch (const NonFiniteActivation& e) {
        EXPECT_EQ(e.layer(), 2u);
    }
}
