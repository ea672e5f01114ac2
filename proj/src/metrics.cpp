// SPDX-FileCopyrightText: (c) 2026 The layerfuse Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "layerfuse/metrics.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace lfuse {

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const int> predictions, std::span<const int> labels,
                                                       std::size_t classes) {
    if (predictions.size() != labels.size()) throw std::invalid_argument("confusion_matrix: length mismatch");
    std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw std::invalid_argument("confusion_matrix: label out of range");
        if (predictions[i] < 0 || static_cast<std::size_t>(predictions[i]) >= classes)
            throw std::invalid_argument("confusion_matrix: prediction out of range");
        ++m[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(predictions[i])];
    }
    return m;
}

Accuracy ua_wa(std::span<const int> predictions, std::span<const int> labels, std::size_t classes) {
    if (labels.empty()) throw std::invalid_argument("ua_wa: no labels");
    const auto m = confusion_matrix(predictions, labels, classes);
    std::size_t correct = 0;
    double recall_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t row = 0;
        for (std::size_t v : m[c]) row += v;
        correct += m[c][c];
        if (row == 0) continue;
        recall_sum += static_cast<double>(m[c][c]) / static_cast<double>(row);
        ++present;
    }
    return Accuracy{recall_sum / static_cast<double>(present),
                    static_cast<double>(correct) / static_cast<double>(labels.size())};
}

std::string EvalReport::to_text() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    if (wer) {
        out << "asr.samples " << asr_samples << '\n';
        out << "asr.wer " << *wer << " (" << token_errors << " errors / " << ref_tokens << " reference tokens)\n";
    }
    if (ua) {
        out << "ser.samples " << ser_samples << '\n';
        out << "ser.ua " << *ua << '\n';
        out << "ser.wa " << *wa << '\n';
        out << "ser.confusion (rows: label, cols: prediction)\n";
        for (std::size_t r = 0; r < confusion.size(); ++r) {
            out << "  " << std::setw(8) << (r < class_names.size() ? class_names[r] : std::to_string(r));
            for (std::size_t v : confusion[r]) out << ' ' << std::setw(6) << v;
            out << '\n';
        }
    }
    return out.str();
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["asr_samples"] = asr_samples;
    j["ser_samples"] = ser_samples;
    if (wer) {
        j["wer"] = *wer;
        j["ref_tokens"] = ref_tokens;
        j["token_errors"] = token_errors;
    }
    if (ua) {
        j["ua"] = *ua;
        j["wa"] = *wa;
        j["confusion"] = confusion;
        j["classes"] = class_names;
    }
    return j.dump();
}

}  // namespace lfuse
