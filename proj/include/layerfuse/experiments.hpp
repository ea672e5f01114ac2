// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/config.hpp"
#include "layerfuse/data.hpp"
#include "layerfuse/metrics.hpp"
#include "layerfuse/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace lfuse {

/// Corpus-level token error rate over ASR samples (greedy decoding) and UA/WA
/// over SER samples.
EvalReport evaluate(const Model& model, const Manifest& manifest, std::size_t max_decode);

/// "layer,asr,ser" CSV of sigmoid(lambda) per LM layer.
std::string fusion_table(const Model& model);

/// Mean coefficient per layer over every decoder step of a manifest, per task.
struct AlphaSummary {
    std::vector<double> asr;
    std::vector<double> ser;
};
AlphaSummary mean_alpha(const Model& model, const Manifest& manifest);

enum class TaskMode { SingleAsr, SingleSer, Multitask };

struct AblationSpec {
    EncoderMode encoder = EncoderMode::Gated;
    std::size_t fixed_layer = 0;  // 1-based, FixedLayer only
    FusionMode fusion = FusionMode::LastLayer;
    TaskMode task = TaskMode::Multitask;

    std::string name() const;
    void validate(std::size_t encoder_layers) const;
};

/// Train / validation / test manifests shared by every cell of a grid.
struct AblationData {
    Manifest train;
    Manifest valid;
    Manifest test;
};

/// Inline-seeded datasets sized by the config's [data] section; the test set
/// has as many samples per task as the validation set.
AblationData make_ablation_data(const RunConfig& config);
/// CRC-32 of a manifest's record text, used to pin the data a grid consumed.
std::uint32_t manifest_fingerprint(const Manifest& manifest);

struct CellResult {
    AblationSpec spec;
    std::uint64_t seed = 0;
    EvalReport report;
    bool diverged = false;
    std::string error;
    std::vector<double> lambda_asr;  // sigmoid(lambda) per LM layer
    std::vector<double> lambda_ser;
    std::size_t steps = 0;
    double seconds = 0.0;
};

/// Trains one cell from `seed` and evaluates the best checkpoint on the test
/// set. Divergence is caught and recorded in the result.
CellResult run_ablation(const AblationSpec& spec, const RunConfig& shared, const AblationData& data,
                        std::uint64_t seed);

/// Fixed-layer(paralinguistic), fixed-layer(last), gated encoders, each under
/// single-ASR, single-SER and multitask training with last-layer fusion, plus
/// the gated multitask model with dynamic fusion.
std::vector<AblationSpec> default_grid(const RunConfig& config);

/// Tab-separated table, one row per cell, with a header line.
std::string ablation_table(const std::vector<CellResult>& cells);

}  // namespace lfuse
