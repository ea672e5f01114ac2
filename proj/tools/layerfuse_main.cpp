// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/checkpoint.hpp"
#include "layerfuse/config.hpp"
#include "layerfuse/data.hpp"
#include "layerfuse/experiments.hpp"
#include "layerfuse/model.hpp"
#include "layerfuse/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace lfuse;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

struct Common {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& default_out) {
    c.out = default_out;
    cmd->add_option("--config", c.config, "key = value config file with [section] headers");
    cmd->add_option("--set", c.sets, "override one field, e.g. --set train.epochs=5")->take_all();
    cmd->add_option("--seed", c.seed, "seed override");
    cmd->add_option("--out", c.out, "output directory")->capture_default_str();
}

RunConfig load_config(const Common& c) {
    RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::from_doc(KeyValueDoc::load(c.config));
    for (const auto& s : c.sets) cfg.apply_override(s);
    return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << text;
        if (!out) throw std::runtime_error("write failed: " + path.string());
    }
    fs::rename(tmp, path);
}

void write_effective_config(const fs::path& dir, const RunConfig& cfg) {
    write_text(dir / "config.ini", cfg.to_text());
}

std::size_t decode_limit(const RunConfig& cfg) {
    return cfg.max_decode ? cfg.max_decode : cfg.synth.max_tokens + 2;
}

struct Loaded {
    RunConfig config;
    Model model;
};

Loaded load_model(const std::string& checkpoint_path) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    RunConfig cfg;
    try {
        cfg = RunConfig::from_doc(KeyValueDoc::parse(ckpt.config_echo));
    } catch (const ConfigError& e) {
        throw CheckpointError(CheckpointError::Kind::Mismatch,
                              "checkpoint carries an unreadable config: " + std::string(e.what()));
    }
    Model model = Model::init(ModelConfig::from_run(cfg), cfg.model_seed);
    restore_model(model, ckpt);
    return {cfg, std::move(model)};
}

nlohmann::json log_json(const LogRecord& r) {
    return {{"step", r.step}, {"split", r.split}, {"task", r.task}, {"loss", r.loss}, {"lr", r.lr}};
}

int cmd_gen_data(const Common& c) {
    RunConfig cfg = load_config(c);
    if (c.seed) cfg.data_seed = *c.seed;
    cfg.validate();
    const fs::path out = c.out;
    fs::create_directories(out);
    std::optional<fs::path> feature_dir;
    if (cfg.write_features) feature_dir = out;
    const Manifest train = generate_dataset(cfg.synth, cfg.n_asr, cfg.n_ser, cfg.data_seed, {feature_dir, "features", "train-"});
    const Manifest valid = generate_dataset(cfg.synth, cfg.n_valid_asr, cfg.n_valid_ser, mix_seed(cfg.data_seed, 1),
                                            {feature_dir, "features", "valid-"});
    write_manifest(out / "train.tsv", train);
    write_manifest(out / "valid.tsv", valid);
    write_effective_config(out, cfg);
    std::cout << "wrote " << train.samples.size() << " training and " << valid.samples.size()
              << " validation samples to " << out.string() << '\n';
    return 0;
}

int cmd_train(const Common& c, const std::string& train_path, const std::string& valid_path,
              const std::string& resume_path) {
    RunConfig cfg = load_config(c);
    if (c.seed) {
        cfg.model_seed = *c.seed;
        cfg.train_seed = *c.seed;
    }
    cfg.validate();
    const Manifest train_set = read_manifest(train_path);
    std::optional<Manifest> valid_set;
    if (!valid_path.empty()) valid_set = read_manifest(valid_path);
    cfg.synth = train_set.meta.synth;
    cfg.validate();

    std::optional<Checkpoint> resume;
    if (!resume_path.empty()) resume = load_checkpoint(resume_path);

    const fs::path out = c.out;
    fs::create_directories(out);
    write_effective_config(out, cfg);
    std::ofstream log(out / "metrics.jsonl", resume ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + (out / "metrics.jsonl").string());

    Model model = Model::init(ModelConfig::from_run(cfg), cfg.model_seed);
    TrainOptions options;
    options.config_echo = cfg.to_text();
    options.resume = resume ? &*resume : nullptr;
    options.on_log = [&](const LogRecord& r) {
        log << log_json(r).dump() << '\n';
        log.flush();
        if (r.split == "valid" && r.task == "mean")
            std::cout << "step " << r.step << " validation loss " << r.loss << std::endl;
    };
    const TrainResult result =
        train(model, train_set, valid_set ? &*valid_set : nullptr, TrainConfig::from_run(cfg), options);
    save_checkpoint(out / "best.ckpt", result.best);
    save_checkpoint(out / "last.ckpt", result.last);
    std::cout << "trained " << result.steps << " steps; best validation loss " << result.best.val_loss << " at step "
              << result.best.step << '\n';
    return 0;
}

int cmd_eval(const Common& c, const std::string& checkpoint, const std::string& manifest_path) {
    Loaded loaded = load_model(checkpoint);
    for (const auto& s : c.sets) loaded.config.apply_override(s);
    const Manifest manifest = read_manifest(manifest_path);
    const EvalReport report = evaluate(loaded.model, manifest, decode_limit(loaded.config));
    std::cout << report.to_text();
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        write_text(fs::path(c.out) / "eval.json", report.to_json() + "\n");
        write_effective_config(c.out, loaded.config);
    }
    return 0;
}

int cmd_decode(const std::string& checkpoint, const std::string& features, const std::string& task_text) {
    const Task task = parse_task(task_text);
    Loaded loaded = load_model(checkpoint);
    const LayerStack stack = read_feature_file(features);
    if (task == Task::Ser) {
        std::cout << kEmotionNames[static_cast<std::size_t>(loaded.model.ser_label(stack))] << '\n';
    } else {
        const DecodeResult hyp = loaded.model.greedy_decode(stack, decode_limit(loaded.config));
        std::cout << Tokenizer::for_vocab_size(loaded.config.synth.vocab_size).decode(hyp.tokens) << '\n';
        if (hyp.truncated) std::cerr << "warning: no end-of-sequence within " << decode_limit(loaded.config) << " tokens\n";
    }
    return 0;
}

int cmd_export_fusion(const Common& c, const std::string& checkpoint, const std::string& manifest_path) {
    Loaded loaded = load_model(checkpoint);
    const std::string table = fusion_table(loaded.model);
    std::cout << table;
    if (c.out.empty()) return 0;
    const fs::path out = c.out;
    fs::create_directories(out);
    write_text(out / "fusion.csv", table);
    if (!manifest_path.empty()) {
        const AlphaSummary alpha = mean_alpha(loaded.model, read_manifest(manifest_path));
        std::ostringstream csv;
        csv.precision(17);
        csv << "layer,asr,ser\n";
        for (std::size_t m = 0; m < alpha.asr.size(); ++m) csv << m + 1 << ',' << alpha.asr[m] << ',' << alpha.ser[m] << '\n';
        write_text(out / "mean_alpha.csv", csv.str());
    }
    write_effective_config(out, loaded.config);
    return 0;
}

int cmd_run_ablation(const Common& c, std::size_t seeds, const std::string& grid_name) {
    RunConfig cfg = load_config(c);
    cfg.validate();
    std::vector<AblationSpec> grid;
    if (grid_name == "full") {
        grid = default_grid(cfg);
    } else if (grid_name == "fusion") {
        grid = {{EncoderMode::Gated, 0, FusionMode::LastLayer, TaskMode::Multitask},
                {EncoderMode::Gated, 0, FusionMode::Dynamic, TaskMode::Multitask}};
    } else {
        throw ConfigError("--grid", "expected full or fusion, got '" + grid_name + "'");
    }
    const std::uint64_t base = c.seed.value_or(1);

    const fs::path out = c.out;
    fs::create_directories(out);
    write_effective_config(out, cfg);
    const AblationData data = make_ablation_data(cfg);
    std::ostringstream pins;
    pins << std::hex << "train " << manifest_fingerprint(data.train) << "\nvalid " << manifest_fingerprint(data.valid)
         << "\ntest " << manifest_fingerprint(data.test) << '\n';
    write_text(out / "data.crc32", pins.str());

    std::vector<CellResult> cells;
    std::ofstream jsonl(out / "results.jsonl", std::ios::trunc);
    for (std::size_t s = 0; s < seeds; ++s) {
        for (const AblationSpec& spec : grid) {
            CellResult cell = run_ablation(spec, cfg, data, base + s);
            nlohmann::json rec = nlohmann::json::parse(cell.report.to_json());
            rec["cell"] = spec.name();
            rec["seed"] = cell.seed;
            rec["status"] = cell.diverged ? "diverged" : "ok";
            if (cell.diverged) rec["error"] = cell.error;
            rec["steps"] = cell.steps;
            rec["lambda_asr"] = cell.lambda_asr;
            rec["lambda_ser"] = cell.lambda_ser;
            jsonl << rec.dump() << '\n';
            jsonl.flush();
            std::cerr << spec.name() << " seed " << cell.seed << (cell.diverged ? " diverged" : " done") << " in "
                      << cell.seconds << " s\n";
            cells.push_back(std::move(cell));
        }
    }
    const std::string table = ablation_table(cells);
    write_text(out / "results.tsv", table);
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"layerfuse: layer-fused speech LM trainer on synthetic layer stacks"};
    app.require_subcommand(1);

    Common gen, tr, ev, ex, ab;
    Common dec;
    std::string train_path, valid_path, resume_path;
    std::string ckpt_path, manifest_path, features_path, task_text;
    std::size_t seeds = 3;
    std::string grid_name = "full";

    auto* gen_cmd = app.add_subcommand("gen-data", "generate a synthetic dataset (train.tsv, valid.tsv, features)");
    add_common(gen_cmd, gen, "data");

    auto* train_cmd = app.add_subcommand("train", "train a model; writes best.ckpt, last.ckpt, metrics.jsonl");
    add_common(train_cmd, tr, "run");
    train_cmd->add_option("--train", train_path, "training manifest")->required();
    train_cmd->add_option("--valid", valid_path, "validation manifest");
    train_cmd->add_option("--resume", resume_path, "continue from a checkpoint");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    add_common(eval_cmd, ev, "");
    eval_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    eval_cmd->add_option("--manifest", manifest_path, "manifest to evaluate")->required();

    auto* decode_cmd = app.add_subcommand("decode", "transcribe or classify one feature file");
    decode_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    decode_cmd->add_option("--features", features_path, "feature stack file (.lfstk)")->required();
    decode_cmd->add_option("--task", task_text, "asr or ser")->required()->check(CLI::IsMember({"asr", "ser"}));

    auto* export_cmd = app.add_subcommand("export-fusion", "print sigmoid(lambda) per LM layer and task as CSV");
    add_common(export_cmd, ex, "");
    export_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    export_cmd->add_option("--manifest", manifest_path, "also write mean coefficients over this manifest");

    auto* ablation_cmd = app.add_subcommand("run-ablation", "train and evaluate an ablation grid");
    add_common(ablation_cmd, ab, "ablation");
    ablation_cmd->add_option("--seeds", seeds, "number of seeds, counting up from --seed")->capture_default_str();
    ablation_cmd->add_option("--grid", grid_name, "full or fusion")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen);
        if (*train_cmd) return cmd_train(tr, train_path, valid_path, resume_path);
        if (*eval_cmd) return cmd_eval(ev, ckpt_path, manifest_path);
        if (*decode_cmd) return cmd_decode(ckpt_path, features_path, task_text);
        if (*export_cmd) return cmd_export_fusion(ex, ckpt_path, manifest_path);
        if (*ablation_cmd) return cmd_run_ablation(ab, seeds, grid_name);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
