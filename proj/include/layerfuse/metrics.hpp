// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lfuse {

/// Levenshtein distance with unit substitution, insertion and deletion costs.
template <typename T>
std::size_t edit_distance(std::span<const T> ref, std::span<const T> hyp) {
    std::vector<std::size_t> prev(hyp.size() + 1), cur(hyp.size() + 1);
    for (std::size_t j = 0; j <= hyp.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ref.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= hyp.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
            cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
        }
        std::swap(prev, cur);
    }
    return prev[hyp.size()];
}

/// (S + D + I) / |ref|; may exceed 1. Throws on an empty reference.
template <typename T>
double wer(std::span<const T> ref, std::span<const T> hyp) {
    if (ref.empty()) throw std::invalid_argument("wer: empty reference");
    return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

/// Whitespace-split word sequence.
std::vector<std::string> split_words(const std::string& text);

struct Accuracy {
    double ua = 0.0;  // mean recall over classes that occur in the labels
    double wa = 0.0;  // overall accuracy
};

/// Classes with no labels are left out of the UA mean.
Accuracy ua_wa(std::span<const int> predictions, std::span<const int> labels, std::size_t classes);

/// Rows are true labels, columns predictions.
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                                       std::size_t classes);

struct EvalReport {
    // ASR
    std::size_t asr_samples = 0;
    std::size_t ref_tokens = 0;
    std::size_t token_errors = 0;
    std::optional<double> wer;
    // SER
    std::size_t ser_samples = 0;
    std::optional<double> ua;
    std::optional<double> wa;
    std::vector<std::vector<std::size_t>> confusion;
    std::vector<std::string> class_names;

    /// Human-readable, one metric per line.
    std::string to_text() const;
    /// Single-line JSON record.
    std::string to_json() const;
};

}  // namespace lfuse
