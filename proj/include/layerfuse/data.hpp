// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "layerfuse/encoder.hpp"
#include "layerfuse/slm.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lfuse {

inline constexpr std::array<std::string_view, 4> kEmotionNames = {"happy", "sad", "angry", "neutral"};

class DataError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Character tokenizer over a fixed alphabet.
struct Tokenizer {
    static constexpr std::string_view kDefaultAlphabet = "abcdefghijklmnopqrstuvwxyz '.,";

    std::string alphabet{kDefaultAlphabet};

    static Tokenizer for_vocab_size(std::size_t n);

    Vocabulary vocab() const { return Vocabulary{alphabet.size()}; }
    /// Throws DataError on characters outside the alphabet.
    std::vector<int> encode(std::string_view text) const;
    /// Text symbols only; special and prompt ids are skipped.
    std::string decode(std::span<const int> ids) const;
};

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Where a sample's layer stack comes from: regenerated from a seed, or read
/// from a feature file (relative paths resolve against the manifest).
struct FeatureRef {
    std::optional<std::uint64_t> synth_seed;
    std::filesystem::path path;

    std::string to_string() const;
    static FeatureRef parse(std::string_view text);
};

struct Sample {
    std::string id;
    Task task = Task::Asr;
    FeatureRef features;
    std::vector<int> transcript;  // token ids, ASR only
    std::optional<int> label;     // emotion class, SER only

    void validate(const Vocabulary& vocab, std::size_t classes) const;
};

struct DatasetMeta {
    SynthSpec synth;  // alphabet is the first synth.vocab_size default symbols
    std::uint64_t seed = 0;
};

struct Manifest {
    DatasetMeta meta;
    std::vector<Sample> samples;
    std::filesystem::path base_dir;

    Tokenizer tokenizer() const;
    std::size_t count(Task task) const;
    /// Throws DataError on duplicate ids, invalid targets or missing feature files.
    void validate() const;
};

struct GenerateOptions {
    // When set, every stack is written to `<out_dir>/<feature_subdir>/<id>.lfstk`
    // and the manifest references it relative to out_dir; otherwise samples
    // keep an inline seed.
    std::optional<std::filesystem::path> out_dir;
    std::string feature_subdir = "features";
    std::string id_prefix;
};

/// Deterministic per seed. ASR transcripts are uniform over symbol sequences
/// of length [min_tokens, max_tokens]; SER labels are uniform over classes.
Manifest generate_dataset(const SynthSpec& spec, std::size_t n_asr, std::size_t n_ser, std::uint64_t seed,
                          const GenerateOptions& options = {});

/// Layer stack of a sample, synthesised or read from its feature file.
LayerStack load_stack(const Sample& sample, const Manifest& manifest);

/// Manifest text form: one "id<TAB>task<TAB>features<TAB>target" record per
/// line, with dataset metadata in a sibling "<stem>.meta" key=value file.
void write_manifest(const std::filesystem::path& path, const Manifest& manifest);
Manifest read_manifest(const std::filesystem::path& path);
std::filesystem::path meta_path_for(const std::filesystem::path& manifest_path);

/// Single-task minibatch. `targets` holds each sample's transcript plus EOS,
/// right-padded with PAD; `mask` marks real positions.
struct Batch {
    Task task = Task::Asr;
    std::vector<std::size_t> indices;  // into the source sample list
    std::vector<std::vector<int>> targets;
    std::vector<std::vector<std::uint8_t>> mask;
};

std::vector<Batch> make_batches(std::span<const Sample> samples, Task task, std::size_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed);

/// Emits `ratio` items of `primary` then one of `secondary`, cycling; once a
/// stream runs dry the rest of the other follows in order.
template <typename T>
std::vector<T> interleave(const std::vector<T>& primary, const std::vector<T>& secondary, std::size_t ratio) {
    if (ratio < 1) throw std::invalid_argument("interleave: ratio must be >= 1");
    if (primary.empty() && secondary.empty()) throw std::invalid_argument("interleave: both streams are empty");
    std::vector<T> out;
    out.reserve(primary.size() + secondary.size());
    std::size_t i = 0, j = 0;
    while (i < primary.size() || j < secondary.size()) {
        for (std::size_t k = 0; k < ratio && i < primary.size(); ++k) out.push_back(primary[i++]);
        if (j < secondary.size()) out.push_back(secondary[j++]);
        if (i >= primary.size())
            while (j < secondary.size()) out.push_back(secondary[j++]);
    }
    return out;
}

/// Shuffled, batched and interleaved schedule of one epoch over `samples`.
/// Depends only on (seed, epoch, batch_size, ratio).
std::vector<Batch> epoch_schedule(std::span<const Sample> samples, std::size_t batch_size, std::size_t ratio,
                                  std::uint64_t seed, std::size_t epoch);

}  // namespace lfuse
