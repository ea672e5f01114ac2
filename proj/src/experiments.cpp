// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/experiments.hpp"

#include "layerfuse/train.hpp"

#include <zlib.h>

#include <chrono>
#include <iomanip>
#include <sstream>

namespace lfuse {

EvalReport evaluate(const Model& model, const Manifest& manifest, std::size_t max_decode) {
    if (manifest.samples.empty()) throw std::invalid_argument("evaluate: manifest has no samples");
    EvalReport report;
    const std::size_t classes = manifest.meta.synth.emotion_classes;
    for (std::size_t c = 0; c < classes; ++c) report.class_names.emplace_back(kEmotionNames[c]);
    std::vector<int> predictions, labels;
    for (const Sample& s : manifest.samples) {
        const LayerStack stack = load_stack(s, manifest);
        if (s.task == Task::Asr) {
            const DecodeResult hyp = model.greedy_decode(stack, max_decode);
            report.token_errors += edit_distance<int>(s.transcript, hyp.tokens);
            report.ref_tokens += s.transcript.size();
            ++report.asr_samples;
        } else {
            predictions.push_back(model.ser_label(stack));
            labels.push_back(*s.label);
            ++report.ser_samples;
        }
    }
    if (report.asr_samples)
        report.wer = static_cast<double>(report.token_errors) / static_cast<double>(report.ref_tokens);
    if (report.ser_samples) {
        const Accuracy acc = ua_wa(predictions, labels, classes);
        report.ua = acc.ua;
        report.wa = acc.wa;
        report.confusion = confusion_matrix(predictions, labels, classes);
    }
    return report;
}

std::string fusion_table(const Model& model) {
    const auto asr = model.fusion.export_lambda(Task::Asr);
    const auto ser = model.fusion.export_lambda(Task::Ser);
    std::ostringstream out;
    out << std::setprecision(17) << "layer,asr,ser\n";
    for (std::size_t m = 0; m < asr.size(); ++m) out << m + 1 << ',' << asr[m] << ',' << ser[m] << '\n';
    return out.str();
}

AlphaSummary mean_alpha(const Model& model, const Manifest& manifest) {
    ad::NoGradGuard no_grad;
    const std::size_t m = model.config().lm.layers;
    AlphaSummary out{std::vector<double>(m, 0.0), std::vector<double>(m, 0.0)};
    std::size_t steps[kNumTasks] = {0, 0};
    for (const Sample& s : manifest.samples) {
        const LayerStack stack = load_stack(s, manifest);
        const std::size_t n = s.task == Task::Asr ? s.transcript.size() + 1 : 1;
        const auto fwd = model.run(stack, s.task, s.transcript);
        const FusionCoefficients alpha = model.coefficients(fwd, s.task, n);
        auto& acc = s.task == Task::Asr ? out.asr : out.ser;
        for (std::size_t t = 0; t < n; ++t)
            for (std::size_t k = 0; k < m; ++k) acc[k] += alpha.at(k, t);
        steps[static_cast<std::size_t>(s.task)] += n;
    }
    for (std::size_t k = 0; k < m; ++k) {
        if (steps[0]) out.asr[k] /= static_cast<double>(steps[0]);
        if (steps[1]) out.ser[k] /= static_cast<double>(steps[1]);
    }
    return out;
}

std::string AblationSpec::name() const {
    std::string enc = encoder == EncoderMode::Gated ? "gated" : "fixed" + std::to_string(fixed_layer);
    std::string fus = fusion == FusionMode::Dynamic ? "dynamic" : "last";
    std::string task_str = task == TaskMode::SingleAsr ? "single-asr" : task == TaskMode::SingleSer ? "single-ser" : "multitask";
    return enc + "/" + fus + "/" + task_str;
}

void AblationSpec::validate(std::size_t encoder_layers) const {
    if (encoder == EncoderMode::FixedLayer && (fixed_layer < 1 || fixed_layer > encoder_layers))
        throw std::invalid_argument("ablation spec: fixed layer " + std::to_string(fixed_layer) + " outside [1, " +
                                    std::to_string(encoder_layers) + "]");
}

AblationData make_ablation_data(const RunConfig& config) {
    AblationData d;
    d.train = generate_dataset(config.synth, config.n_asr, config.n_ser, config.data_seed, {std::nullopt, "features", "train-"});
    d.valid = generate_dataset(config.synth, config.n_valid_asr, config.n_valid_ser, mix_seed(config.data_seed, 1),
                               {std::nullopt, "features", "valid-"});
    d.test = generate_dataset(config.synth, config.n_valid_asr, config.n_valid_ser, mix_seed(config.data_seed, 2),
                              {std::nullopt, "features", "test-"});
    return d;
}

std::uint32_t manifest_fingerprint(const Manifest& manifest) {
    std::ostringstream records;
    for (const Sample& s : manifest.samples) {
        records << s.id << '\t' << task_name(s.task) << '\t' << s.features.to_string() << '\t';
        for (int t : s.transcript) records << t << ' ';
        if (s.label) records << *s.label;
        records << '\n';
    }
    const std::string text = records.str();
    return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
}

namespace {

Manifest only_task(const Manifest& m, Task task) {
    Manifest out;
    out.meta = m.meta;
    out.base_dir = m.base_dir;
    for (const Sample& s : m.samples)
        if (s.task == task) out.samples.push_back(s);
    return out;
}

}  // namespace

CellResult run_ablation(const AblationSpec& spec, const RunConfig& shared, const AblationData& data,
                        std::uint64_t seed) {
    spec.validate(shared.synth.layers);
    const auto start = std::chrono::steady_clock::now();
    CellResult cell;
    cell.spec = spec;
    cell.seed = seed;

    RunConfig cfg = shared;
    cfg.encoder_mode = spec.encoder;
    if (spec.encoder == EncoderMode::FixedLayer) cfg.fixed_layer = spec.fixed_layer;
    cfg.fusion_mode = spec.fusion;
    cfg.model_seed = mix_seed(seed, 101);
    cfg.train_seed = mix_seed(seed, 202);

    Manifest train_set = data.train, valid_set = data.valid, test_set = data.test;
    if (spec.task != TaskMode::Multitask) {
        const Task t = spec.task == TaskMode::SingleAsr ? Task::Asr : Task::Ser;
        train_set = only_task(data.train, t);
        valid_set = only_task(data.valid, t);
        test_set = only_task(data.test, t);
    }

    try {
        Model model = Model::init(ModelConfig::from_run(cfg), cfg.model_seed);
        TrainOptions options;
        options.config_echo = cfg.to_text();
        TrainResult result = train(model, train_set, &valid_set, TrainConfig::from_run(cfg), options);
        cell.steps = result.steps;
        restore_model(model, result.best);
        const std::size_t max_decode = cfg.max_decode ? cfg.max_decode : cfg.synth.max_tokens + 2;
        cell.report = evaluate(model, test_set, max_decode);
        cell.lambda_asr = model.fusion.export_lambda(Task::Asr);
        cell.lambda_ser = model.fusion.export_lambda(Task::Ser);
    } catch (const TrainingDiverged& e) {
        cell.diverged = true;
        cell.error = e.what();
    } catch (const ad::ShapeError& e) {
        cell.diverged = true;
        cell.error = e.what();
    } catch (const NonFiniteActivation& e) {
        cell.diverged = true;
        cell.error = e.what();
    }
    cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return cell;
}

std::vector<AblationSpec> default_grid(const RunConfig& config) {
    std::vector<AblationSpec> grid;
    const std::pair<EncoderMode, std::size_t> encoders[] = {
        {EncoderMode::FixedLayer, config.synth.paralinguistic_layer},
        {EncoderMode::FixedLayer, config.synth.layers},
        {EncoderMode::Gated, 0},
    };
    for (const auto& [mode, layer] : encoders)
        for (TaskMode task : {TaskMode::SingleAsr, TaskMode::SingleSer, TaskMode::Multitask})
            grid.push_back({mode, layer, FusionMode::LastLayer, task});
    grid.push_back({EncoderMode::Gated, 0, FusionMode::Dynamic, TaskMode::Multitask});
    return grid;
}

std::string ablation_table(const std::vector<CellResult>& cells) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "cell\tseed\tstatus\twer\tua\twa\tsteps\tseconds\tlambda_asr\tlambda_ser\n";
    auto opt = [](const std::optional<double>& v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4);
        if (v)
            s << *v;
        else
            s << '-';
        return s.str();
    };
    auto join = [](const std::vector<double>& v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(4);
        for (std::size_t i = 0; i < v.size(); ++i) s << (i ? "," : "") << v[i];
        return v.empty() ? std::string("-") : s.str();
    };
    for (const CellResult& c : cells) {
        out << c.spec.name() << '\t' << c.seed << '\t' << (c.diverged ? "diverged" : "ok") << '\t' << opt(c.report.wer)
            << '\t' << opt(c.report.ua) << '\t' << opt(c.report.wa) << '\t' << c.steps << '\t' << std::setprecision(1)
            << c.seconds << std::setprecision(4) << '\t' << join(c.lambda_asr) << '\t' << join(c.lambda_ser) << '\n';
    }
    return out.str();
}

}  // namespace lfuse
