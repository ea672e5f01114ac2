// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/autodiff.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfuse {

class Model;
class Adam;

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
    enum class Kind { Io, BadMagic, Version, Truncated, Checksum, Mismatch };

    CheckpointError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct TensorRecord {
    std::string name;
    ad::Shape shape;
    std::vector<double> values;
};

/// Snapshot of a training run: parameters ("param.*"), Adam moments
/// ("adam.m.*", "adam.v.*"), the optimizer step and the validation loss.
struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string config_echo;
    std::vector<TensorRecord> tensors;
    std::uint64_t step = 0;
    double val_loss = 0.0;

    const TensorRecord* find(const std::string& name) const;
};

Checkpoint make_checkpoint(const Model& model, const Adam* optimizer, std::uint64_t step, double val_loss,
                           std::string config_echo);
/// Copies parameter values into `model`; shapes must match.
void restore_model(Model& model, const Checkpoint& ckpt);
/// Restores moments and step count; missing moments leave the optimizer fresh.
void restore_optimizer(Adam& optimizer, const Checkpoint& ckpt);

/// File: "HFCKPT1", u32 version, u64 payload length, payload (u32-length config
/// echo, u32 tensor count, per tensor: name, u32 rank, u64 dims, float64
/// values), then the u32 CRC-32 of every preceding byte.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lfuse
