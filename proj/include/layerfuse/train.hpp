// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/checkpoint.hpp"
#include "layerfuse/config.hpp"
#include "layerfuse/data.hpp"
#include "layerfuse/model.hpp"

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfuse {

struct TrainConfig {
    std::size_t epochs = 20;
    double peak_lr = 1e-3;
    std::size_t warmup = 200;
    std::size_t horizon = 0;  // 0: resolved to the run's total optimizer steps
    std::size_t accumulation = 4;
    std::size_t ratio = 1;
    std::size_t batch_size = 16;
    std::uint64_t seed = 3;
    std::size_t validate_every = 0;  // 0: end of every epoch
    double clip_norm = 0.0;

    static TrainConfig from_run(const RunConfig& run);
    void validate() const;
};

/// Linear warm-up from 0 to `peak` over `warmup` steps, then linear decay to 0
/// at `horizon`, and 0 afterwards.
double lr_at(std::size_t step, double peak, std::size_t warmup, std::size_t horizon);
double lr_at(std::size_t step, const TrainConfig& config);

/// Adam with bias correction; beta1 0.9, beta2 0.999, eps 1e-8 by default.
class Adam {
public:
    explicit Adam(ParamList params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void zero_grad();
    /// One update from the gradients currently held by the parameters.
    void step(double lr);
    std::size_t steps() const { return t_; }
    void set_steps(std::size_t t) { t_ = t; }

    const ParamList& params() const { return params_; }
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }
    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }

private:
    ParamList params_;
    double beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(const ParamList& params, double max_norm);

class TrainingDiverged : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Memoised layer stacks of a manifest.
class StackCache {
public:
    explicit StackCache(const Manifest& manifest) : manifest_(&manifest), stacks_(manifest.samples.size()) {}
    const LayerStack& get(std::size_t index);
    const Manifest& manifest() const { return *manifest_; }

private:
    const Manifest* manifest_;
    std::vector<std::optional<LayerStack>> stacks_;
};

struct LogRecord {
    std::size_t step = 0;
    std::string split;  // "train" or "valid"
    std::string task;   // "asr", "ser", or "mean"
    double loss = 0.0;
    double lr = 0.0;
};

struct ValidationLoss {
    std::optional<double> asr;
    std::optional<double> ser;
    /// Equal-weight mean over the tasks present.
    double mean() const;
};

ValidationLoss validation_loss(const Model& model, StackCache& stacks);

/// Accumulated gradient of one batch: each sample's loss is scaled by
/// 1/(batch size * accumulation) before backward. Returns the batch's mean loss.
double accumulate_batch(const Model& model, StackCache& stacks, const Batch& batch, std::size_t accumulation);

struct TrainResult {
    Checkpoint best;
    Checkpoint last;
    std::vector<LogRecord> log;
    std::size_t steps = 0;
};

struct TrainOptions {
    std::string config_echo;
    std::function<void(const LogRecord&)> on_log;
    const Checkpoint* resume = nullptr;
};

/// Batch-interleaved training. Every `accumulation` consecutive batches form
/// one Adam step at lr_at(step) (steps count from 1). Validation runs on a
/// frozen clone; the lowest-validation-loss snapshot is returned as `best`.
/// Without a validation set the training set is used for selection.
TrainResult train(Model& model, const Manifest& train_set, const Manifest* valid_set, const TrainConfig& config,
                  const TrainOptions& options = {});

}  // namespace lfuse
