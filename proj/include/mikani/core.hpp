#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace mikani {

struct SoftSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    double prob = 0.0;
    friend bool operator==(const SoftSpan&, const SoftSpan&) = default;
};

struct HardSpan {
    std::size_t start = 0;
    std::size_t end = 0;
    friend bool operator==(const HardSpan&, const HardSpan&) = default;
};

/// Dense per-character probabilities over an answer.
using CharMask = std::vector<double>;

/// One Mu-SHROOM record.
struct QaSample {
    std::string id;
    std::string lang;      ///< lower-case ISO-639-1 code
    std::string question;  ///< model_input
    std::string answer;    ///< model_output_text
    std::optional<std::vector<SoftSpan>> gold_soft;
    std::optional<std::vector<HardSpan>> gold_hard;

    std::size_t answer_length() const;
};

/// A system output for one sample: what gets written to the predictions file.
struct Prediction {
    std::string id;
    std::vector<SoftSpan> soft;
    std::vector<HardSpan> hard;
};

/// Builds a sample from one JSON record and validates every span against the answer.
QaSample sample_from_json(const nlohmann::json& record, std::size_t line = 0);
nlohmann::json sample_to_json(const QaSample& sample);

/// Reads a Mu-SHROOM JSONL file. Blank lines are skipped but still counted
/// for error line numbers.
std::vector<QaSample> load_dataset(const std::filesystem::path& path);
std::vector<QaSample> read_dataset(std::istream& in);

nlohmann::json prediction_to_json(const Prediction& p);
Prediction prediction_from_json(const nlohmann::json& record, std::size_t line = 0);
void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

/// mask[i] = max prob over spans covering i. Throws ValidationError for spans past `length`.
CharMask spans_to_mask(const std::vector<SoftSpan>& spans, std::size_t length);
CharMask spans_to_mask(const std::vector<HardSpan>& spans, std::size_t length);

/// Maximal runs with value strictly above `threshold`.
std::vector<HardSpan> mask_to_spans(const CharMask& mask, double threshold);

}  // namespace mikani
