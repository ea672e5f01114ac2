// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/fusion.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace lfuse;
using lfuse::testing::random_tensor;

namespace {

double sigmoid_oracle(double x) { return 1.0 / (1.0 + std::exp(-x)); }

LayerOutputs random_layers(std::size_t m, std::size_t t, std::size_t d, std::mt19937_64& rng) {
    LayerOutputs out;
    for (std::size_t i = 0; i < m; ++i) out.layers.push_back(random_tensor({t, d}, rng));
    return out;
}

// Gate FFN with a constant output: zero weights and output bias `out`.
DynamicFusionParams constant_gate_params(std::size_t m, std::size_t d, double beta, double lambda, double out) {
    std::mt19937_64 rng(0);
    DynamicFusionParams p = DynamicFusionParams::init(m, d, beta, rng);
    for (auto& g : p.gates) {
        for (double& v : g.w1.mutable_values()) v = 0.0;
        for (double& v : g.b1.mutable_values()) v = 0.0;
        for (double& v : g.w2.mutable_values()) v = 0.0;
        for (double& v : g.b2.mutable_values()) v = out;
    }
    for (auto& l : p.lambda)
        for (double& v : l.mutable_values()) v = lambda;
    return p;
}

LayerOutputs unit_rows() {
    LayerOutputs l;
    l.layers = {ad::Tensor::from({1, 2}, {1, 0}), ad::Tensor::from({1, 2}, {0, 1})};
    return l;
}

FusionCoefficients alpha_of(std::vector<double> a) {
    const std::size_t m = a.size();
    return FusionCoefficients{ad::Tensor::from({1, m}, std::move(a))};
}

}  // namespace

TEST(FusionParams, InitialisedNeutral) {
    std::mt19937_64 rng(1);
    const auto p = DynamicFusionParams::init(4, 64, 0.5, rng);
    EXPECT_EQ(p.num_layers(), 4u);
    for (const auto& g : p.gates) {
        EXPECT_EQ(g.w1.shape(), (ad::Shape{64, 16}));
        EXPECT_EQ(g.w2.shape(), (ad::Shape{16, 1}));
    }
    for (Task t : {Task::Asr, Task::Ser})
        for (double s : p.export_lambda(t)) EXPECT_EQ(s, 0.5);
    std::mt19937_64 rng2(2);
    const auto layers = random_layers(4, 7, 64, rng2);
    const auto alpha = fusion_coefficients(layers, Task::Asr, p);
    EXPECT_EQ(alpha.alpha.shape(), (ad::Shape{7, 4}));
    for (double a : alpha.alpha.values()) EXPECT_EQ(a, 0.5);
}

TEST(FusionCoefficients, NeutralGivesHalf) {
    std::mt19937_64 rng(3);
    const auto alpha = fusion_coefficients(random_layers(3, 2, 8, rng), Task::Ser, constant_gate_params(3, 8, 0.5, 0.0, 0.0));
    for (double a : alpha.alpha.values()) EXPECT_EQ(a, 0.5);
}

TEST(FusionCoefficients, SaturatesNearOne) {
    std::mt19937_64 rng(4);
    const auto alpha =
        fusion_coefficients(random_layers(3, 2, 8, rng), Task::Asr, constant_gate_params(3, 8, 0.5, 20.0, 20.0));
    for (double a : alpha.alpha.values()) EXPECT_NEAR(a, 1.0, 1e-8);
}

TEST(FusionCoefficients, Log3GateOutputGivesFiveEighths) {
    std::mt19937_64 rng(5);
    const auto alpha =
        fusion_coefficients(random_layers(3, 2, 8, rng), Task::Asr, constant_gate_params(3, 8, 0.5, 0.0, std::log(3.0)));
    for (double a : alpha.alpha.values()) EXPECT_NEAR(a, 0.625, 1e-12);
}

TEST(FusionCoefficients, MatchesDecompositionOracle) {
    std::mt19937_64 rng(6);
    DynamicFusionParams p = DynamicFusionParams::init(3, 8, 0.3, rng);
    for (auto& g : p.gates) g.w2 = random_tensor({2, 1}, rng), g.b2 = random_tensor({1}, rng);
    for (auto& l : p.lambda) l = random_tensor({3}, rng);
    const auto layers = random_layers(3, 4, 8, rng);
    const auto alpha = fusion_coefficients(layers, Task::Ser, p);
    for (std::size_t m = 0; m < 3; ++m) {
        const auto logits = gate_logits(p.gates[m], layers.layers[m], ad::Activation::Gelu);
        for (std::size_t t = 0; t < 4; ++t) {
            const double expect = 0.3 * sigmoid_oracle(p.lambda[1].values()[m]) + 0.7 * sigmoid_oracle(logits.values()[t]);
            EXPECT_NEAR(alpha.at(m, t), expect, 1e-15);
        }
    }
}

TEST(FusionCoefficients, RejectsLayerCountMismatch) {
    std::mt19937_64 rng(7);
    const auto p = DynamicFusionParams::init(4, 8, 0.5, rng);
    EXPECT_THROW(fusion_coefficients(random_layers(3, 2, 8, rng), Task::Asr, p), std::invalid_argument);
}

TEST(FusionCoefficients, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(8);
    DynamicFusionParams p = DynamicFusionParams::init(3, 8, 0.5, rng);
    for (auto& g : p.gates) g.w2 = random_tensor({2, 1}, rng);
    for (auto& l : p.lambda) l = random_tensor({3}, rng);
    const auto layers = random_layers(3, 4, 8, rng);
    std::vector<ad::Tensor> inputs = {p.lambda[0], p.lambda[1]};
    for (const auto& g : p.gates) inputs.insert(inputs.end(), {g.w1, g.b1, g.w2, g.b2});
    inputs.insert(inputs.end(), layers.layers.begin(), layers.layers.end());
    const auto r = ad::grad_check(
        [&](std::span<const ad::Tensor>) {
            const auto alpha = fusion_coefficients(layers, Task::Asr, p);
            return lfuse::testing::readout(fuse_all(layers, alpha), 4);
        },
        inputs);
    EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(Fuse, UnitWeights) {
    const auto r = fuse(unit_rows(), alpha_of({1, 1}), 0);
    EXPECT_EQ(r.shape(), (ad::Shape{1, 2}));
    EXPECT_EQ(r.at(0, 0), 1.0);
    EXPECT_EQ(r.at(0, 1), 1.0);
}

TEST(Fuse, HalfAndQuarter) {
    const auto r = fuse(unit_rows(), alpha_of({0.5, 0.25}), 0);
    EXPECT_EQ(r.at(0, 0), 0.5);
    EXPECT_EQ(r.at(0, 1), 0.25);
}

TEST(Fuse, ZeroWeightsAnnihilate) {
    std::mt19937_64 rng(9);
    const auto layers = random_layers(4, 3, 5, rng);
    const FusionCoefficients zero{ad::Tensor::zeros({3, 4})};
    for (std::size_t t = 0; t < 3; ++t) {
        const auto r = fuse(layers, zero, t);
        for (double v : r.values()) EXPECT_EQ(v, 0.0);
    }
}

TEST(Fuse, RejectsStepOutOfRange) {
    EXPECT_THROW(fuse(unit_rows(), alpha_of({1, 1}), 1), std::out_of_range);
}

TEST(Fuse, StepwiseAgreesWithAllSteps) {
    std::mt19937_64 rng(10);
    const auto layers = random_layers(3, 5, 4, rng);
    const FusionCoefficients alpha{random_tensor({5, 3}, rng, false)};
    const auto all = fuse_all(layers, alpha);
    for (std::size_t t = 0; t < 5; ++t) {
        const auto row = fuse(layers, alpha, t);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(row.at(0, j), all.at(t, j), 1e-15);
    }
}

TEST(FusionProperties, AlphaStrictlyInsideUnitInterval) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        DynamicFusionParams p = DynamicFusionParams::init(4, 8, 0.5, rng);
        for (auto& g : p.gates) g.w2 = random_tensor({2, 1}, rng, true, 3.0);
        for (auto& l : p.lambda) l = random_tensor({4}, rng, true, 3.0);
        const auto alpha = fusion_coefficients(random_layers(4, 6, 8, rng), Task::Asr, p);
        for (double a : alpha.alpha.values()) {
            EXPECT_GT(a, 0.0);
            EXPECT_LT(a, 1.0);
        }
    }
}

TEST(FusionProperties, ZeroGateOutputLeavesTaskTermPlusHalfComplement) {
    std::mt19937_64 rng(12);
    for (double beta : {0.0, 0.25, 0.5, 1.0}) {
        DynamicFusionParams p = constant_gate_params(3, 8, beta, 0.0, 0.0);
        p.lambda[0] = random_tensor({3}, rng);
        const auto alpha = fusion_coefficients(random_layers(3, 2, 8, rng), Task::Asr, p);
        for (std::size_t m = 0; m < 3; ++m)
            for (std::size_t t = 0; t < 2; ++t)
                EXPECT_NEAR(alpha.at(m, t), beta * sigmoid_oracle(p.lambda[0].values()[m]) + (1 - beta) / 2, 1e-15);
    }
}

TEST(FusionProperties, TaskSwitchActsOnlyThroughLambda) {
    std::mt19937_64 rng(13);
    DynamicFusionParams p = DynamicFusionParams::init(4, 8, 0.5, rng);
    for (auto& g : p.gates) g.w2 = random_tensor({2, 1}, rng);
    for (auto& l : p.lambda) l = random_tensor({4}, rng);
    const auto layers = random_layers(4, 5, 8, rng);
    const auto a = fusion_coefficients(layers, Task::Asr, p);
    const auto s = fusion_coefficients(layers, Task::Ser, p);
    for (std::size_t m = 0; m < 4; ++m) {
        const double shift = 0.5 * (sigmoid_oracle(p.lambda[1].values()[m]) - sigmoid_oracle(p.lambda[0].values()[m]));
        for (std::size_t t = 0; t < 5; ++t) EXPECT_NEAR(s.at(m, t) - a.at(m, t), shift, 1e-15);
    }
}

TEST(FusionProperties, FuseIsLinearInAlphaAndInR) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 10; ++trial) {
        const auto l1 = random_layers(3, 4, 5, rng);
        const auto l2 = random_layers(3, 4, 5, rng);
        const auto a1 = random_tensor({4, 3}, rng, false);
        const auto a2 = random_tensor({4, 3}, rng, false);
        const double c1 = 0.7, c2 = -1.3;
        LayerOutputs lsum;
        for (std::size_t m = 0; m < 3; ++m) lsum.layers.push_back(ad::add(ad::scale(l1.layers[m], c1), ad::scale(l2.layers[m], c2)));
        const FusionCoefficients asum{ad::add(ad::scale(a1, c1), ad::scale(a2, c2))};
        for (std::size_t t = 0; t < 4; ++t) {
            const auto in_alpha = fuse(l1, asum, t);
            const auto split_alpha = ad::add(ad::scale(fuse(l1, {a1}, t), c1), ad::scale(fuse(l1, {a2}, t), c2));
            const auto in_r = fuse(lsum, {a1}, t);
            const auto split_r = ad::add(ad::scale(fuse(l1, {a1}, t), c1), ad::scale(fuse(l2, {a1}, t), c2));
            for (std::size_t j = 0; j < 5; ++j) {
                EXPECT_NEAR(in_alpha.values()[j], split_alpha.values()[j], 1e-12);
                EXPECT_NEAR(in_r.values()[j], split_r.values()[j], 1e-12);
            }
        }
    }
}

TEST(FusionProperties, AlphaIsNotNormalisedAcrossLayers) {
    std::mt19937_64 rng(15);
    const auto alpha =
        fusion_coefficients(random_layers(4, 1, 8, rng), Task::Asr, constant_gate_params(4, 8, 0.5, 0.0, 0.0));
    double s = 0.0;
    for (double a : alpha.alpha.values()) s += a;
    EXPECT_EQ(s, 2.0);
}
