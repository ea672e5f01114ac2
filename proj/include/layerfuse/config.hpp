// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/encoder.hpp"
#include "layerfuse/slm.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lfuse {

/// Names the offending field, e.g. "train.epochs".
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string field, const std::string& message)
        : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Flat "key = value" text with optional "[section]" headers; keys are
/// addressed as "section.key". '#' and ';' start comments.
class KeyValueDoc {
public:
    static KeyValueDoc parse(std::string_view text);
    static KeyValueDoc load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value);
    bool contains(const std::string& key) const { return values_.count(key) > 0; }
    const std::string& get(const std::string& key) const;
    const std::map<std::string, std::string>& entries() const { return values_; }
    /// Groups keys back into sections.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

enum class EncoderMode { Gated, FixedLayer };
enum class FusionMode { Dynamic, LastLayer };

/// Everything a command needs; every field has a default.
struct RunConfig {
    SynthSpec synth;

    // [data]
    std::size_t n_asr = 256;
    std::size_t n_ser = 256;
    std::size_t n_valid_asr = 64;
    std::size_t n_valid_ser = 64;
    std::uint64_t data_seed = 1;
    bool write_features = true;

    // [model]
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t ffn = 256;
    std::size_t lm_layers = 4;
    ad::Activation activation = ad::Activation::Gelu;
    double beta = 0.5;
    EncoderMode encoder_mode = EncoderMode::Gated;
    std::size_t fixed_layer = 8;  // 1-based, FixedLayer only
    FusionMode fusion_mode = FusionMode::Dynamic;
    std::uint64_t model_seed = 11;

    // [train]
    std::size_t epochs = 20;
    double peak_lr = 1e-3;
    std::size_t warmup = 200;
    std::size_t horizon = 0;  // 0: total optimizer steps of the run
    std::size_t accumulation = 4;
    std::size_t ratio = 1;
    std::size_t batch_size = 16;
    std::uint64_t train_seed = 3;
    std::size_t validate_every = 0;  // optimizer steps; 0: once per epoch
    double clip_norm = 0.0;          // 0: off
    std::size_t max_decode = 0;      // 0: synth.max_tokens + 2

    void validate() const;
    KeyValueDoc to_doc() const;
    std::string to_text() const { return to_doc().to_text(); }
    static RunConfig from_doc(const KeyValueDoc& doc);
    /// Applies one "section.key=value" override.
    void apply_override(std::string_view assignment);
    void set(const std::string& key, const std::string& value);
};

}  // namespace lfuse
