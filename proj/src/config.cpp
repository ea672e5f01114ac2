// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/config.hpp"

#include "layerfuse/data.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace lfuse {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const char* end = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || text.empty()) throw ConfigError(key, "invalid number '" + text + "'");
    return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
    if (text == "true" || text == "1" || text == "yes") return true;
    if (text == "false" || text == "0" || text == "no") return false;
    throw ConfigError(key, "invalid boolean '" + text + "'");
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

struct Field {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field number_field(T RunConfig::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.*member = parse_number<T>(k, v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(c.*member);
                else
                    return std::to_string(c.*member);
            }};
}

template <typename T>
Field synth_field(T SynthSpec::*member) {
    return {[member](RunConfig& c, const std::string& k, const std::string& v) { c.synth.*member = parse_number<T>(k, v); },
            [member](const RunConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(c.synth.*member);
                else
                    return std::to_string(c.synth.*member);
            }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = [] {
        std::map<std::string, Field> f;
        f["synth.layers"] = synth_field(&SynthSpec::layers);
        f["synth.frames"] = synth_field(&SynthSpec::frames);
        f["synth.width"] = synth_field(&SynthSpec::width);
        f["synth.content_layer"] = synth_field(&SynthSpec::content_layer);
        f["synth.paralinguistic_layer"] = synth_field(&SynthSpec::paralinguistic_layer);
        f["synth.noise"] = synth_field(&SynthSpec::noise);
        f["synth.content_leak"] = synth_field(&SynthSpec::content_leak);
        f["synth.vocab_size"] = synth_field(&SynthSpec::vocab_size);
        f["synth.emotion_classes"] = synth_field(&SynthSpec::emotion_classes);
        f["synth.min_tokens"] = synth_field(&SynthSpec::min_tokens);
        f["synth.max_tokens"] = synth_field(&SynthSpec::max_tokens);
        f["synth.codebook_seed"] = synth_field(&SynthSpec::codebook_seed);

        f["data.n_asr"] = number_field(&RunConfig::n_asr);
        f["data.n_ser"] = number_field(&RunConfig::n_ser);
        f["data.n_valid_asr"] = number_field(&RunConfig::n_valid_asr);
        f["data.n_valid_ser"] = number_field(&RunConfig::n_valid_ser);
        f["data.seed"] = number_field(&RunConfig::data_seed);
        f["data.write_features"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) { c.write_features = parse_bool(k, v); },
            [](const RunConfig& c) { return std::string(c.write_features ? "true" : "false"); }};

        f["model.d_model"] = number_field(&RunConfig::d_model);
        f["model.heads"] = number_field(&RunConfig::heads);
        f["model.ffn"] = number_field(&RunConfig::ffn);
        f["model.lm_layers"] = number_field(&RunConfig::lm_layers);
        f["model.beta"] = number_field(&RunConfig::beta);
        f["model.fixed_layer"] = number_field(&RunConfig::fixed_layer);
        f["model.seed"] = number_field(&RunConfig::model_seed);
        f["model.activation"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "gelu")
                    c.activation = ad::Activation::Gelu;
                else if (v == "relu")
                    c.activation = ad::Activation::Relu;
                else
                    throw ConfigError(k, "expected gelu or relu, got '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(c.activation == ad::Activation::Gelu ? "gelu" : "relu"); }};
        f["model.encoder_mode"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "gated")
                    c.encoder_mode = EncoderMode::Gated;
                else if (v == "fixed")
                    c.encoder_mode = EncoderMode::FixedLayer;
                else
                    throw ConfigError(k, "expected gated or fixed, got '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(c.encoder_mode == EncoderMode::Gated ? "gated" : "fixed"); }};
        f["model.fusion_mode"] = {
            [](RunConfig& c, const std::string& k, const std::string& v) {
                if (v == "dynamic")
                    c.fusion_mode = FusionMode::Dynamic;
                else if (v == "last")
                    c.fusion_mode = FusionMode::LastLayer;
                else
                    throw ConfigError(k, "expected dynamic or last, got '" + v + "'");
            },
            [](const RunConfig& c) { return std::string(c.fusion_mode == FusionMode::Dynamic ? "dynamic" : "last"); }};

        f["train.epochs"] = number_field(&RunConfig::epochs);
        f["train.peak_lr"] = number_field(&RunConfig::peak_lr);
        f["train.warmup"] = number_field(&RunConfig::warmup);
        f["train.horizon"] = number_field(&RunConfig::horizon);
        f["train.accumulation"] = number_field(&RunConfig::accumulation);
        f["train.ratio"] = number_field(&RunConfig::ratio);
        f["train.batch_size"] = number_field(&RunConfig::batch_size);
        f["train.seed"] = number_field(&RunConfig::train_seed);
        f["train.validate_every"] = number_field(&RunConfig::validate_every);
        f["train.clip_norm"] = number_field(&RunConfig::clip_norm);
        f["train.max_decode"] = number_field(&RunConfig::max_decode);
        return f;
    }();
    return table;
}

}  // namespace

KeyValueDoc KeyValueDoc::parse(std::string_view text) {
    KeyValueDoc doc;
    std::string section;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == ';') continue;
        for (std::size_t i = 1; i < line.size(); ++i)
            if ((line[i] == '#' || line[i] == ';') && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
                line = trim(std::string_view(line).substr(0, i));
                break;
            }
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no), "unterminated section header");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no), "expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
        doc.set(section.empty() ? key : section + "." + key, trim(std::string_view(line).substr(eq + 1)));
    }
    return doc;
}

KeyValueDoc KeyValueDoc::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open config file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void KeyValueDoc::set(const std::string& key, std::string value) { values_[key] = std::move(value); }

const std::string& KeyValueDoc::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError(key, "missing");
    return it->second;
}

std::string KeyValueDoc::to_text() const {
    std::map<std::string, std::vector<std::pair<std::string, std::string>>> sections;
    for (const auto& [key, value] : values_) {
        const auto dot = key.find('.');
        if (dot == std::string::npos)
            sections[""].emplace_back(key, value);
        else
            sections[key.substr(0, dot)].emplace_back(key.substr(dot + 1), value);
    }
    std::ostringstream out;
    bool first = true;
    for (const auto& [name, entries] : sections) {
        if (!name.empty()) out << (first ? "" : "\n") << '[' << name << "]\n";
        first = false;
        for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
    }
    return out.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(key, "unknown field");
    it->second.set(*this, key, value);
}

void RunConfig::apply_override(std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos) throw ConfigError(std::string(assignment), "override must look like section.key=value");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

RunConfig RunConfig::from_doc(const KeyValueDoc& doc) {
    RunConfig c;
    for (const auto& [key, value] : doc.entries()) c.set(key, value);
    c.validate();
    return c;
}

KeyValueDoc RunConfig::to_doc() const {
    KeyValueDoc doc;
    for (const auto& [key, field] : fields()) doc.set(key, field.get(*this));
    return doc;
}

void RunConfig::validate() const {
    try {
        synth.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError("synth", e.what());
    }
    if (synth.vocab_size > Tokenizer::kDefaultAlphabet.size()) throw ConfigError("synth.vocab_size", "exceeds the 30-symbol alphabet");
    if (synth.emotion_classes > 4) throw ConfigError("synth.emotion_classes", "at most 4 emotion classes are named");
    if (lm_layers < 2) throw ConfigError("model.lm_layers", "must be >= 2");
    if (heads == 0 || d_model % heads != 0) throw ConfigError("model.heads", "must divide model.d_model");
    if (d_model < 4) throw ConfigError("model.d_model", "must be >= 4");
    if (ffn == 0) throw ConfigError("model.ffn", "must be positive");
    if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("model.beta", "must lie in [0, 1]");
    if (encoder_mode == EncoderMode::FixedLayer && (fixed_layer < 1 || fixed_layer > synth.layers))
        throw ConfigError("model.fixed_layer", "must lie in [1, synth.layers]");
    if (epochs == 0) throw ConfigError("train.epochs", "must be positive");
    if (!(peak_lr > 0.0)) throw ConfigError("train.peak_lr", "must be positive");
    if (accumulation < 1) throw ConfigError("train.accumulation", "must be >= 1");
    if (ratio < 1) throw ConfigError("train.ratio", "must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
    if (horizon != 0 && warmup >= horizon) throw ConfigError("train.warmup", "must be below train.horizon");
    if (clip_norm < 0.0) throw ConfigError("train.clip_norm", "must be >= 0");
}

}  // namespace lfuse
