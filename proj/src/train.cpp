// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lfuse {

TrainConfig TrainConfig::from_run(const RunConfig& run) {
    TrainConfig c;
    c.epochs = run.epochs;
    c.peak_lr = run.peak_lr;
    c.warmup = run.warmup;
    c.horizon = run.horizon;
    c.accumulation = run.accumulation;
    c.ratio = run.ratio;
    c.batch_size = run.batch_size;
    c.seed = run.train_seed;
    c.validate_every = run.validate_every;
    c.clip_norm = run.clip_norm;
    return c;
}

void TrainConfig::validate() const {
    if (epochs == 0) throw std::invalid_argument("train config: epochs must be positive");
    if (accumulation < 1) throw std::invalid_argument("train config: accumulation must be >= 1");
    if (ratio < 1) throw std::invalid_argument("train config: ratio must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("train config: batch size must be >= 1");
    if (horizon != 0 && warmup >= horizon) throw std::invalid_argument("train config: warmup must be below horizon");
    if (!(peak_lr > 0.0)) throw std::invalid_argument("train config: peak learning rate must be positive");
}

double lr_at(std::size_t step, double peak, std::size_t warmup, std::size_t horizon) {
    if (step < warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
    if (step >= horizon) return 0.0;
    return peak * static_cast<double>(horizon - step) / static_cast<double>(horizon - warmup);
}

double lr_at(std::size_t step, const TrainConfig& config) {
    return lr_at(step, config.peak_lr, config.warmup, config.horizon);
}

Adam::Adam(ParamList params, double beta1, double beta2, double eps)
    : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

void Adam::step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        ad::Tensor& t = params_[k].tensor;
        auto values = t.mutable_values();
        const bool has = t.has_grad();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double g = has ? t.grad()[i] : 0.0;
            m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
            v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
            values[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps_);
        }
    }
}

double clip_grad_norm(const ParamList& params, double max_norm) {
    double sq = 0.0;
    for (const auto& p : params)
        if (p.tensor.has_grad())
            for (double g : p.tensor.grad()) sq += g * g;
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
        const double s = max_norm / norm;
        for (auto p : params)
            if (p.tensor.has_grad())
                for (double& g : p.tensor.mutable_grad()) g *= s;
    }
    return norm;
}

const LayerStack& StackCache::get(std::size_t index) {
    auto& slot = stacks_.at(index);
    if (!slot) slot = load_stack(manifest_->samples[index], *manifest_);
    return *slot;
}

double ValidationLoss::mean() const {
    double total = 0.0;
    int n = 0;
    if (asr) total += *asr, ++n;
    if (ser) total += *ser, ++n;
    return n ? total / n : std::numeric_limits<double>::infinity();
}

ValidationLoss validation_loss(const Model& model, StackCache& stacks) {
    ad::NoGradGuard no_grad;
    double sums[kNumTasks] = {0.0, 0.0};
    std::size_t counts[kNumTasks] = {0, 0};
    const auto& samples = stacks.manifest().samples;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto t = static_cast<std::size_t>(samples[i].task);
        sums[t] += model.sample_loss(stacks.get(i), samples[i]).item();
        ++counts[t];
    }
    ValidationLoss out;
    if (counts[0]) out.asr = sums[0] / static_cast<double>(counts[0]);
    if (counts[1]) out.ser = sums[1] / static_cast<double>(counts[1]);
    return out;
}

double accumulate_batch(const Model& model, StackCache& stacks, const Batch& batch, std::size_t accumulation) {
    const auto& samples = stacks.manifest().samples;
    const double weight = 1.0 / static_cast<double>(batch.indices.size() * accumulation);
    double total = 0.0;
    for (std::size_t i : batch.indices) {
        const ad::Tensor loss = model.sample_loss(stacks.get(i), samples[i]);
        const double v = loss.item();
        if (!std::isfinite(v))
            throw TrainingDiverged("non-finite " + std::string(task_name(batch.task)) + " loss on sample " + samples[i].id);
        ad::backward(loss, weight);
        total += v;
    }
    return total / static_cast<double>(batch.indices.size());
}

TrainResult train(Model& model, const Manifest& train_set, const Manifest* valid_set, const TrainConfig& config,
                  const TrainOptions& options) {
    config.validate();
    if (train_set.samples.empty()) throw std::invalid_argument("train: training manifest is empty");

    StackCache train_stacks(train_set);
    StackCache valid_stacks(valid_set && !valid_set->samples.empty() ? *valid_set : train_set);
    Adam adam(model.parameters());
    adam.zero_grad();

    std::size_t step = 0;
    if (options.resume) {
        restore_model(model, *options.resume);
        restore_optimizer(adam, *options.resume);
        step = static_cast<std::size_t>(options.resume->step);
    }

    const std::size_t batches_per_epoch =
        epoch_schedule(train_set.samples, config.batch_size, config.ratio, config.seed, 0).size();
    const std::size_t steps_per_epoch = (batches_per_epoch + config.accumulation - 1) / config.accumulation;
    const std::size_t total_steps = config.epochs * steps_per_epoch;
    TrainConfig resolved = config;
    if (resolved.horizon == 0) resolved.horizon = std::max(total_steps, resolved.warmup + 1);

    TrainResult result;
    double best = std::numeric_limits<double>::infinity();
    double last_val = best;
    bool have_best = false;
    auto emit = [&](LogRecord rec) {
        if (options.on_log) options.on_log(rec);
        result.log.push_back(std::move(rec));
    };
    auto validate_now = [&] {
        const Model frozen = model.clone();
        const ValidationLoss vl = validation_loss(frozen, valid_stacks);
        const double lr = lr_at(step, resolved);
        if (vl.asr) emit({step, "valid", "asr", *vl.asr, lr});
        if (vl.ser) emit({step, "valid", "ser", *vl.ser, lr});
        last_val = vl.mean();
        emit({step, "valid", "mean", last_val, lr});
        if (!have_best || last_val < best) {
            best = last_val;
            have_best = true;
            result.best = make_checkpoint(model, &adam, step, best, options.config_echo);
        }
    };

    if (options.resume) {
        best = options.resume->val_loss;
        have_best = std::isfinite(best);
        if (have_best) result.best = *options.resume;
    }

    const std::size_t start_epoch = steps_per_epoch ? step / steps_per_epoch : 0;
    for (std::size_t epoch = start_epoch; epoch < config.epochs; ++epoch) {
        const auto schedule = epoch_schedule(train_set.samples, config.batch_size, config.ratio, config.seed, epoch);
        const std::size_t first = epoch == start_epoch ? (step % steps_per_epoch) * config.accumulation : 0;
        double window_sum[kNumTasks] = {0.0, 0.0};
        std::size_t window_count[kNumTasks] = {0, 0};
        std::size_t in_window = 0;
        for (std::size_t b = first; b < schedule.size(); ++b) {
            const Batch& batch = schedule[b];
            double loss = 0.0;
            try {
                loss = accumulate_batch(model, train_stacks, batch, config.accumulation);
            } catch (const TrainingDiverged& e) {
                throw TrainingDiverged(std::string(e.what()) + " at step " + std::to_string(step + 1) + ", epoch " +
                                       std::to_string(epoch) + ", batch " + std::to_string(b));
            }
            const auto t = static_cast<std::size_t>(batch.task);
            window_sum[t] += loss;
            ++window_count[t];
            if (++in_window < config.accumulation && b + 1 < schedule.size()) continue;

            if (config.clip_norm > 0.0) clip_grad_norm(adam.params(), config.clip_norm);
            ++step;
            const double lr = lr_at(step, resolved);
            adam.step(lr);
            adam.zero_grad();
            for (std::size_t k = 0; k < kNumTasks; ++k)
                if (window_count[k])
                    emit({step, "train", std::string(task_name(static_cast<Task>(k))),
                          window_sum[k] / static_cast<double>(window_count[k]), lr});
            std::fill(std::begin(window_sum), std::end(window_sum), 0.0);
            std::fill(std::begin(window_count), std::end(window_count), 0);
            in_window = 0;
            if (config.validate_every && step % config.validate_every == 0) validate_now();
        }
        if (!config.validate_every) validate_now();
    }
    if (!have_best) validate_now();
    result.steps = step;
    result.last = make_checkpoint(model, &adam, step, last_val, options.config_echo);
    return result;
}

}  // namespace lfuse
