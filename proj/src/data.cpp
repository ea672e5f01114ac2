// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/data.hpp"

#include "layerfuse/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace lfuse {

namespace {

constexpr std::string_view kSynthPrefix = "synth:";

int parse_emotion(std::string_view name, std::size_t classes) {
    for (std::size_t i = 0; i < classes; ++i)
        if (kEmotionNames[i] == name) return static_cast<int>(i);
    throw DataError("unknown emotion label '" + std::string(name) + "'");
}

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    while (true) {
        const auto tab = line.find('\t', begin);
        out.push_back(line.substr(begin, tab == std::string::npos ? std::string::npos : tab - begin));
        if (tab == std::string::npos) break;
        begin = tab + 1;
    }
    return out;
}

// Writes through a temporary sibling and renames, so a failed write never
// leaves a partial file behind.
void write_atomically(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + path.string());
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("write failed: " + path.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw DataError("cannot move " + tmp.string() + " into place");
    }
}

}  // namespace

Tokenizer Tokenizer::for_vocab_size(std::size_t n) {
    if (n == 0 || n > kDefaultAlphabet.size()) throw DataError("vocabulary size must lie in [1, 30]");
    return Tokenizer{std::string(kDefaultAlphabet.substr(0, n))};
}

std::vector<int> Tokenizer::encode(std::string_view text) const {
    const Vocabulary v = vocab();
    std::vector<int> ids;
    for (char ch : text) {
        const auto pos = alphabet.find(ch);
        if (pos == std::string::npos) throw DataError(std::string("character '") + ch + "' is outside the alphabet");
        ids.push_back(v.symbol_id(static_cast<int>(pos)));
    }
    return ids;
}

std::string Tokenizer::decode(std::span<const int> ids) const {
    const Vocabulary v = vocab();
    std::string out;
    for (int id : ids)
        if (v.is_text(id)) out.push_back(alphabet[static_cast<std::size_t>(v.symbol_of(id))]);
    return out;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finaliser over a combined word
    std::uint64_t z = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::string FeatureRef::to_string() const {
    if (synth_seed) return std::string(kSynthPrefix) + std::to_string(*synth_seed);
    return path.generic_string();
}

FeatureRef FeatureRef::parse(std::string_view text) {
    FeatureRef ref;
    if (text.empty()) throw DataError("empty feature reference");
    if (text.starts_with(kSynthPrefix)) {
        std::uint64_t seed = 0;
        const auto digits = text.substr(kSynthPrefix.size());
        auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), seed);
        if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty())
            throw DataError("bad synthetic feature reference '" + std::string(text) + "'");
        ref.synth_seed = seed;
    } else {
        ref.path = fs::path(std::string(text));
    }
    return ref;
}

void Sample::validate(const Vocabulary& vocab, std::size_t classes) const {
    if (id.empty()) throw DataError("sample with empty id");
    if (task == Task::Asr) {
        if (label) throw DataError(id + ": ASR sample carries an emotion label");
        if (transcript.empty()) throw DataError(id + ": ASR sample without transcript");
        for (int t : transcript)
            if (!vocab.is_text(t)) throw DataError(id + ": transcript token " + std::to_string(t) + " is not a text symbol");
    } else {
        if (!transcript.empty()) throw DataError(id + ": SER sample carries a transcript");
        if (!label) throw DataError(id + ": SER sample without label");
        if (*label < 0 || static_cast<std::size_t>(*label) >= classes)
            throw DataError(id + ": label " + std::to_string(*label) + " outside " + std::to_string(classes) + " classes");
    }
}

Tokenizer Manifest::tokenizer() const { return Tokenizer::for_vocab_size(meta.synth.vocab_size); }

std::size_t Manifest::count(Task task) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [task](const Sample& s) { return s.task == task; }));
}

void Manifest::validate() const {
    meta.synth.validate();
    const Vocabulary vocab = tokenizer().vocab();
    std::set<std::string> ids;
    for (const Sample& s : samples) {
        if (!ids.insert(s.id).second) throw DataError("duplicate sample id " + s.id);
        s.validate(vocab, meta.synth.emotion_classes);
        if (s.task == Task::Asr && s.transcript.size() > meta.synth.max_tokens)
            throw DataError(s.id + ": transcript longer than synth.max_tokens");
        if (!s.features.synth_seed) {
            const fs::path p = s.features.path.is_absolute() ? s.features.path : base_dir / s.features.path;
            if (!fs::exists(p)) throw DataError(s.id + ": feature file " + p.string() + " does not exist");
        }
    }
}

Manifest generate_dataset(const SynthSpec& spec, std::size_t n_asr, std::size_t n_ser, std::uint64_t seed,
                          const GenerateOptions& options) {
    spec.validate();
    Manifest manifest;
    manifest.meta.synth = spec;
    manifest.meta.seed = seed;
    const Vocabulary vocab = manifest.tokenizer().vocab();
    fs::path feature_dir;
    if (options.out_dir) {
        manifest.base_dir = *options.out_dir;
        feature_dir = *options.out_dir / options.feature_subdir;
        std::error_code ec;
        fs::create_directories(feature_dir, ec);
        if (ec) throw DataError("cannot create " + feature_dir.string() + ": " + ec.message());
    }

    auto make = [&](Task task, std::size_t index) {
        Sample s;
        s.task = task;
        char id[32];
        std::snprintf(id, sizeof(id), "%s-%06zu", task == Task::Asr ? "asr" : "ser", index);
        s.id = options.id_prefix + id;
        const std::uint64_t sample_seed = mix_seed(seed, 2 * index + static_cast<std::size_t>(task));
        const UtteranceContent content = draw_content(spec, sample_seed, std::nullopt, std::nullopt);
        if (task == Task::Asr)
            for (int sym : content.symbols) s.transcript.push_back(vocab.symbol_id(sym));
        else
            s.label = content.emotion;
        if (options.out_dir) {
            const fs::path rel = fs::path(options.feature_subdir) / (s.id + ".lfstk");
            try {
                write_feature_file(*options.out_dir / rel, synth_layer_stack(content, spec, sample_seed));
            } catch (const FeatureFileError& e) {
                throw DataError(s.id + ": " + e.what());
            }
            s.features.path = rel;
        } else {
            s.features.synth_seed = sample_seed;
        }
        manifest.samples.push_back(std::move(s));
    };
    for (std::size_t i = 0; i < n_asr; ++i) make(Task::Asr, i);
    for (std::size_t i = 0; i < n_ser; ++i) make(Task::Ser, i);
    return manifest;
}

LayerStack load_stack(const Sample& sample, const Manifest& manifest) {
    if (sample.features.synth_seed) {
        const SynthSpec& spec = manifest.meta.synth;
        std::optional<std::vector<int>> symbols;
        if (sample.task == Task::Asr) {
            const Vocabulary vocab = manifest.tokenizer().vocab();
            std::vector<int> syms;
            for (int id : sample.transcript) syms.push_back(vocab.symbol_of(id));
            symbols = std::move(syms);
        }
        const std::uint64_t seed = *sample.features.synth_seed;
        return synth_layer_stack(draw_content(spec, seed, symbols, sample.label), spec, seed);
    }
    const fs::path p = sample.features.path.is_absolute() ? sample.features.path : manifest.base_dir / sample.features.path;
    try {
        return read_feature_file(p);
    } catch (const FeatureFileError& e) {
        throw DataError(sample.id + ": " + e.what());
    }
}

fs::path meta_path_for(const fs::path& manifest_path) {
    fs::path meta = manifest_path;
    meta.replace_extension(".meta");
    return meta;
}

void write_manifest(const fs::path& path, const Manifest& manifest) {
    const Tokenizer tok = manifest.tokenizer();
    std::ostringstream records;
    for (const Sample& s : manifest.samples) {
        records << s.id << '\t' << task_name(s.task) << '\t' << s.features.to_string() << '\t';
        if (s.task == Task::Asr)
            records << tok.decode(s.transcript);
        else
            records << kEmotionNames.at(static_cast<std::size_t>(*s.label));
        records << '\n';
    }
    RunConfig synth_holder;
    synth_holder.synth = manifest.meta.synth;
    const KeyValueDoc full = synth_holder.to_doc();
    KeyValueDoc meta;
    for (const auto& [key, value] : full.entries())
        if (key.starts_with("synth.")) meta.set(key, value);
    meta.set("dataset.seed", std::to_string(manifest.meta.seed));
    meta.set("dataset.samples", std::to_string(manifest.samples.size()));
    meta.set("dataset.asr", std::to_string(manifest.count(Task::Asr)));
    meta.set("dataset.ser", std::to_string(manifest.count(Task::Ser)));

    write_atomically(meta_path_for(path), meta.to_text());
    write_atomically(path, records.str());
}

Manifest read_manifest(const fs::path& path) {
    Manifest manifest;
    manifest.base_dir = path.parent_path();
    KeyValueDoc meta;
    try {
        meta = KeyValueDoc::load(meta_path_for(path));
    } catch (const ConfigError& e) {
        throw DataError(std::string("manifest metadata: ") + e.what());
    }
    RunConfig synth_holder;
    for (const auto& [key, value] : meta.entries()) {
        if (key.starts_with("synth.")) synth_holder.set(key, value);
        if (key == "dataset.seed") manifest.meta.seed = std::stoull(value);
    }
    manifest.meta.synth = synth_holder.synth;

    std::ifstream in(path);
    if (!in) throw DataError("cannot open manifest " + path.string());
    const Tokenizer tok = manifest.tokenizer();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_tabs(line);
        if (fields.size() != 4)
            throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 4 tab-separated fields");
        Sample s;
        s.id = fields[0];
        s.task = parse_task(fields[1]);
        s.features = FeatureRef::parse(fields[2]);
        if (s.task == Task::Asr)
            s.transcript = tok.encode(fields[3]);
        else
            s.label = parse_emotion(fields[3], manifest.meta.synth.emotion_classes);
        manifest.samples.push_back(std::move(s));
    }
    manifest.validate();
    return manifest;
}

std::vector<Batch> make_batches(std::span<const Sample> samples, Task task, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) throw std::invalid_argument("make_batches: batch size must be positive");
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].task == task) order.push_back(i);
    if (shuffle_seed) {
        std::mt19937_64 rng(*shuffle_seed);
        std::shuffle(order.begin(), order.end(), rng);
    }
    std::vector<Batch> batches;
    for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
        Batch b;
        b.task = task;
        b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), begin + batch_size)));
        if (task == Task::Asr) {
            std::size_t width = 0;
            for (std::size_t i : b.indices) width = std::max(width, samples[i].transcript.size() + 1);
            for (std::size_t i : b.indices) {
                std::vector<int> row(samples[i].transcript);
                row.push_back(Vocabulary::kEos);
                std::vector<std::uint8_t> mask(row.size(), 1);
                row.resize(width, Vocabulary::kPad);
                mask.resize(width, 0);
                b.targets.push_back(std::move(row));
                b.mask.push_back(std::move(mask));
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

std::vector<Batch> epoch_schedule(std::span<const Sample> samples, std::size_t batch_size, std::size_t ratio,
                                  std::uint64_t seed, std::size_t epoch) {
    const std::uint64_t epoch_seed = mix_seed(seed, epoch);
    auto asr = make_batches(samples, Task::Asr, batch_size, mix_seed(epoch_seed, 0));
    auto ser = make_batches(samples, Task::Ser, batch_size, mix_seed(epoch_seed, 1));
    return interleave(asr, ser, ratio);
}

}  // namespace lfuse
