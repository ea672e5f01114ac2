// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/heads.hpp"
#include "layerfuse/train.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lfuse;
using lfuse::testing::random_tensor;

namespace {

LinearHead head_with_bias(std::size_t width, std::vector<double> bias) {
    const std::size_t n = bias.size();
    return LinearHead{ad::Tensor::zeros({width, n}, true), ad::Tensor::from({n}, std::move(bias), true)};
}

double sum_of(const std::vector<double>& p) {
    double s = 0.0;
    for (double v : p) s += v;
    return s;
}

Sample asr_sample(std::vector<int> transcript) {
    Sample s;
    s.id = "one";
    s.task = Task::Asr;
    s.transcript = std::move(transcript);
    return s;
}

}  // namespace

TEST(AsrStep, ZeroHeadIsUniform) {
    std::mt19937_64 rng(1);
    const auto p = asr_step(random_tensor({1, 16}, rng, false), head_with_bias(16, std::vector<double>(35, 0.0)));
    ASSERT_EQ(p.size(), 35u);
    for (double v : p) EXPECT_NEAR(v, 1.0 / 35.0, 1e-15);
}

TEST(AsrStep, TwoSymbolLog3) {
    std::mt19937_64 rng(2);
    const auto p = asr_step(random_tensor({16}, rng, false), head_with_bias(16, {0.0, std::log(3.0)}));
    EXPECT_NEAR(p[0], 0.25, 1e-15);
    EXPECT_NEAR(p[1], 0.75, 1e-15);
}

TEST(AsrStep, RandomStatesGiveDistributions) {
    std::mt19937_64 rng(3);
    const auto head = LinearHead::init(16, 35, rng);
    for (int i = 0; i < 50; ++i) {
        const auto p = asr_step(random_tensor({1, 16}, rng, false, 3.0), head);
        for (double v : p) EXPECT_GE(v, 0.0);
        EXPECT_NEAR(sum_of(p), 1.0, 1e-12);
    }
}

TEST(AsrLoss, CertainModelHasZeroLoss) {
    const int targets[] = {1, 4, 2, 7};
    std::vector<double> rows(4 * 8, 0.0);
    for (std::size_t t = 0; t < 4; ++t) rows[t * 8 + static_cast<std::size_t>(targets[t])] = 1.0;
    std::vector<double> w(8 * 8, 0.0);
    for (std::size_t i = 0; i < 8; ++i) w[i * 8 + i] = 1000.0;
    const LinearHead head{ad::Tensor::from({8, 8}, w), ad::Tensor::zeros({8})};
    EXPECT_EQ(asr_loss(ad::Tensor::from({4, 8}, rows), targets, head).item(), 0.0);
}

TEST(AsrLoss, UniformModelCostsLogV) {
    std::mt19937_64 rng(4);
    const int targets[] = {0, 3, 7};
    const auto loss = asr_loss(random_tensor({3, 6}, rng, false), targets, head_with_bias(6, std::vector<double>(8, 0.0)));
    EXPECT_NEAR(loss.item(), std::log(8.0), 1e-15);
}

TEST(AsrLoss, MatchesPerTokenNegativeLogLikelihoodOracle) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto head = LinearHead::init(6, 9, rng);
        const auto fused = random_tensor({5, 6}, rng, false, 2.0);
        const int targets[] = {8, 0, 3, 3, 1};
        double oracle = 0.0;
        for (std::size_t t = 0; t < 5; ++t) {
            const auto p = asr_step(ad::slice_rows(fused, t, t + 1), head);
            oracle -= std::log(p[static_cast<std::size_t>(targets[t])]);
        }
        EXPECT_NEAR(asr_loss(fused, targets, head).item(), oracle / 5.0, 1e-12);
    }
}

TEST(AsrLoss, RejectsLengthMismatch) {
    std::mt19937_64 rng(6);
    const int targets[] = {1, 2};
    EXPECT_THROW(asr_loss(random_tensor({3, 6}, rng, false), targets, LinearHead::init(6, 8, rng)), std::invalid_argument);
}

TEST(SerPredict, ZeroHeadIsUniformOverFour) {
    std::mt19937_64 rng(7);
    const auto p = ser_predict(random_tensor({1, 16}, rng, false), head_with_bias(16, {0, 0, 0, 0}));
    for (double v : p) EXPECT_EQ(v, 0.25);
}

TEST(SerPredict, Log3OnLastClass) {
    std::mt19937_64 rng(8);
    const auto p = ser_predict(random_tensor({1, 16}, rng, false), head_with_bias(16, {0, 0, 0, std::log(3.0)}));
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(p[static_cast<std::size_t>(c)], 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(p[3], 0.5, 1e-15);
}

TEST(SerPredict, RandomStatesGiveDistributions) {
    std::mt19937_64 rng(9);
    const auto head = LinearHead::init(16, 4, rng);
    for (int i = 0; i < 50; ++i) EXPECT_NEAR(sum_of(ser_predict(random_tensor({16}, rng, false, 3.0), head)), 1.0, 1e-12);
}

TEST(SerLoss, IsCategoricalCrossEntropy) {
    std::mt19937_64 rng(10);
    const auto head = LinearHead::init(16, 4, rng);
    const auto r = random_tensor({1, 16}, rng, false);
    const auto p = ser_predict(r, head);
    EXPECT_NEAR(ser_loss(r, 2, head).item(), -std::log(p[2]), 1e-14);
}

TEST(Argmax, TiesGoToLowestIndex) {
    const double v[] = {0.1, 0.4, 0.4, 0.1};
    EXPECT_EQ(argmax(v), 1u);
    const double w[] = {2.0, 2.0};
    EXPECT_EQ(argmax(w), 0u);
}

TEST(AsrStepProperties, LogitShiftKeepsArgmax) {
    std::mt19937_64 rng(11);
    auto head = LinearHead::init(16, 35, rng);
    for (int i = 0; i < 30; ++i) {
        const auto r = random_tensor({1, 16}, rng, false);
        const auto before = argmax(asr_step(r, head));
        LinearHead shifted{head.w, ad::add(head.b, ad::Tensor::scalar(5.5))};
        EXPECT_EQ(argmax(asr_step(r, shifted)), before);
    }
}

TEST(GreedyDecode, ZeroLengthIsEmptyAndTruncated) {
    const Model model = lfuse::testing::tiny_model();
    const auto cfg = lfuse::testing::tiny_config();
    const auto stack = synth_layer_stack(draw_content(cfg.synth, 1, std::nullopt, std::nullopt), cfg.synth, 1);
    const auto r = model.greedy_decode(stack, 0);
    EXPECT_TRUE(r.tokens.empty());
    EXPECT_TRUE(r.truncated);
}

TEST(GreedyDecode, DeterministicAndShiftInvariant) {
    Model model = lfuse::testing::tiny_model(3);
    const auto cfg = lfuse::testing::tiny_config();
    const auto stack = synth_layer_stack(draw_content(cfg.synth, 2, std::nullopt, std::nullopt), cfg.synth, 2);
    const auto a = model.greedy_decode(stack, 6);
    const auto b = model.greedy_decode(stack, 6);
    EXPECT_EQ(a.tokens, b.tokens);
    EXPECT_EQ(a.truncated, b.truncated);
    for (double& v : model.asr_head.b.mutable_values()) v += 3.25;
    const auto c = model.greedy_decode(stack, 6);
    EXPECT_EQ(c.tokens, a.tokens);
}

TEST(GreedyDecode, OverfitSingleSampleDecodesItsTarget) {
    Model model = lfuse::testing::tiny_model(4);
    const auto cfg = lfuse::testing::tiny_config();
    const auto content = draw_content(cfg.synth, 3, std::vector<int>{4, 11, 7}, std::nullopt);
    const auto stack = synth_layer_stack(content, cfg.synth, 3);
    const Vocabulary vocab = model.vocab();
    const Sample s = asr_sample({vocab.symbol_id(4), vocab.symbol_id(11), vocab.symbol_id(7)});
    Adam adam(model.parameters());
    double initial = 0.0, last = 0.0;
    for (int step = 0; step < 200; ++step) {
        adam.zero_grad();
        const auto loss = model.sample_loss(stack, s);
        if (step == 0) initial = loss.item();
        last = loss.item();
        ad::backward(loss);
        adam.step(3e-3);
    }
    EXPECT_LT(last, 0.1 * initial);
    EXPECT_LT(last, 1e-2);
    const auto decoded = model.greedy_decode(stack, 8);
    EXPECT_EQ(decoded.tokens, s.transcript);
    EXPECT_FALSE(decoded.truncated);
}

TEST(SerLocality, PredictionDependsOnlyOnThePrefixThroughBos) {
    for (FusionMode mode : {FusionMode::Dynamic, FusionMode::LastLayer}) {
        auto cfg = lfuse::testing::tiny_config();
        cfg.fusion_mode = mode;
        const Model model = lfuse::testing::tiny_model(5, cfg);
        const auto stack = synth_layer_stack(draw_content(cfg.synth, 4, std::nullopt, std::nullopt), cfg.synth, 4);
        const auto reference = model.ser_distribution(stack);
        ad::NoGradGuard no_grad;
        const int tail[] = {5, 9, 2};
        const auto fwd = model.run(stack, Task::Ser, tail);
        const auto p = ser_predict(model.decoder_states(fwd, Task::Ser, 1), model.ser_head);
        ASSERT_EQ(p.size(), reference.size());
        for (std::size_t c = 0; c < p.size(); ++c) EXPECT_EQ(p[c], reference[c]);
    }
}
