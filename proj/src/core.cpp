#include "mikani/core.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mikani/errors.hpp"
#include "mikani/text.hpp"

namespace mikani {

using nlohmann::json;

namespace {

std::string required_string(const json& record, const char* key, std::size_t line) {
    const auto it = record.find(key);
    if (it == record.end()) throw IngestError(line, std::string("missing key '") + key + "'");
    if (!it->is_string()) throw IngestError(line, std::string("key '") + key + "' is not a string");
    return it->get<std::string>();
}

std::size_t index_value(const json& v, std::size_t line) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw IngestError(line, "span index is not a non-negative integer: " + v.dump());
    return v.get<std::size_t>();
}

void check_bounds(const std::string& id, std::size_t start, std::size_t end, std::size_t len) {
    if (start > end || end > len) {
        throw ValidationError("sample '" + id + "': span [" + std::to_string(start) + "," +
                              std::to_string(end) + ") outside answer of length " + std::to_string(len));
    }
}

std::vector<HardSpan> normalize_hard(std::vector<HardSpan> spans) {
    std::sort(spans.begin(), spans.end(), [](const HardSpan& a, const HardSpan& b) {
        return a.start != b.start ? a.start < b.start : a.end < b.end;
    });
    std::vector<HardSpan> out;
    for (const auto& s : spans) {
        if (!out.empty() && s.start <= out.back().end) {
            out.back().end = std::max(out.back().end, s.end);
        } else {
            out.push_back(s);
        }
    }
    return out;
}

// Sorted order; overlapping input is rebuilt from the per-character max.
std::vector<SoftSpan> normalize_soft(std::vector<SoftSpan> spans, std::size_t len) {
    std::stable_sort(spans.begin(), spans.end(),
                     [](const SoftSpan& a, const SoftSpan& b) { return a.start < b.start; });
    bool overlapping = false;
    for (std::size_t i = 1; i < spans.size(); ++i) overlapping |= spans[i].start < spans[i - 1].end;
    if (!overlapping) return spans;

    const CharMask mask = spans_to_mask(spans, len);
    std::vector<SoftSpan> out;
    for (std::size_t i = 0; i < mask.size();) {
        std::size_t j = i + 1;
        while (j < mask.size() && mask[j] == mask[i]) ++j;
        if (mask[i] > 0.0) out.push_back({i, j, mask[i]});
        i = j;
    }
    return out;
}

}  // namespace

std::size_t QaSample::answer_length() const { return text::char_length(answer); }

QaSample sample_from_json(const json& record, std::size_t line) {
    if (!record.is_object()) throw IngestError(line, "record is not a JSON object");
    QaSample s;
    s.question = required_string(record, "model_input", line);
    s.answer = required_string(record, "model_output_text", line);
    std::string lang = required_string(record, "lang", line);
    std::transform(lang.begin(), lang.end(), lang.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    s.lang = lang;
    if (auto it = record.find("id"); it != record.end() && !it->is_null()) {
        s.id = it->is_string() ? it->get<std::string>() : it->dump();
    } else {
        s.id = lang + "-" + std::to_string(line);
    }

    const std::size_t len = s.answer_length();
    if (auto it = record.find("soft_labels"); it != record.end() && !it->is_null()) {
        if (!it->is_array()) throw IngestError(line, "soft_labels is not a list");
        std::vector<SoftSpan> spans;
        for (const auto& e : *it) {
            if (!e.is_object() || !e.contains("start") || !e.contains("end") || !e.contains("prob"))
                throw IngestError(line, "soft label entry needs start/end/prob: " + e.dump());
            SoftSpan span{index_value(e["start"], line), index_value(e["end"], line), 0.0};
            if (!e["prob"].is_number()) throw IngestError(line, "soft label prob is not a number");
            span.prob = e["prob"].get<double>();
            if (span.prob < 0.0 || span.prob > 1.0)
                throw ValidationError("sample '" + s.id + "': soft label prob outside [0,1]");
            check_bounds(s.id, span.start, span.end, len);
            if (span.start < span.end) spans.push_back(span);
        }
        s.gold_soft = normalize_soft(std::move(spans), len);
    }
    if (auto it = record.find("hard_labels"); it != record.end() && !it->is_null()) {
        if (!it->is_array()) throw IngestError(line, "hard_labels is not a list");
        std::vector<HardSpan> spans;
        for (const auto& e : *it) {
            if (!e.is_array() || e.size() != 2) throw IngestError(line, "hard label must be [start, end]: " + e.dump());
            HardSpan span{index_value(e[0], line), index_value(e[1], line)};
            check_bounds(s.id, span.start, span.end, len);
            if (span.start < span.end) spans.push_back(span);
        }
        s.gold_hard = normalize_hard(std::move(spans));
    }
    return s;
}

json sample_to_json(const QaSample& s) {
    json j{{"id", s.id}, {"lang", s.lang}, {"model_input", s.question}, {"model_output_text", s.answer}};
    if (s.gold_soft) {
        json arr = json::array();
        for (const auto& sp : *s.gold_soft) arr.push_back({{"start", sp.start}, {"end", sp.end}, {"prob", sp.prob}});
        j["soft_labels"] = std::move(arr);
    }
    if (s.gold_hard) {
        json arr = json::array();
        for (const auto& sp : *s.gold_hard) arr.push_back(json::array({sp.start, sp.end}));
        j["hard_labels"] = std::move(arr);
    }
    return j;
}

std::vector<QaSample> read_dataset(std::istream& in) {
    std::vector<QaSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestError(lineno, std::string("invalid JSON: ") + e.what());
        }
        out.push_back(sample_from_json(record, lineno));
    }
    return out;
}

std::vector<QaSample> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError(0, "cannot open dataset " + path.string());
    return read_dataset(in);
}

json prediction_to_json(const Prediction& p) {
    json soft = json::array();
    for (const auto& s : p.soft) soft.push_back({{"start", s.start}, {"end", s.end}, {"prob", s.prob}});
    json hard = json::array();
    for (const auto& h : p.hard) hard.push_back(json::array({h.start, h.end}));
    return {{"id", p.id}, {"soft_labels", std::move(soft)}, {"hard_labels", std::move(hard)}};
}

Prediction prediction_from_json(const json& record, std::size_t line) {
    if (!record.is_object() || !record.contains("id")) throw IngestError(line, "prediction needs an id");
    Prediction p;
    p.id = record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump();
    for (const auto& e : record.value("soft_labels", json::array())) {
        if (!e.is_object()) throw IngestError(line, "soft label entry is not an object");
        p.soft.push_back({index_value(e.at("start"), line), index_value(e.at("end"), line), e.at("prob").get<double>()});
    }
    for (const auto& e : record.value("hard_labels", json::array())) {
        if (!e.is_array() || e.size() != 2) throw IngestError(line, "hard label must be [start, end]");
        p.hard.push_back({index_value(e[0], line), index_value(e[1], line)});
    }
    return p;
}

void write_predictions(const std::filesystem::path& path, const std::vector<Prediction>& preds) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write predictions to " + path.string());
    for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError(0, "cannot open predictions " + path.string());
    std::vector<Prediction> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(prediction_from_json(json::parse(line), lineno));
        } catch (const json::exception& e) {
            throw IngestError(lineno, e.what());
        }
    }
    return out;
}

CharMask spans_to_mask(const std::vector<SoftSpan>& spans, std::size_t length) {
    CharMask mask(length, 0.0);
    for (const auto& s : spans) {
        if (s.start > s.end || s.end > length)
            throw ValidationError("span [" + std::to_string(s.start) + "," + std::to_string(s.end) +
                                  ") exceeds length " + std::to_string(length));
        for (std::size_t i = s.start; i < s.end; ++i) mask[i] = std::max(mask[i], s.prob);
    }
    return mask;
}

CharMask spans_to_mask(const std::vector<HardSpan>& spans, std::size_t length) {
    std::vector<SoftSpan> soft;
    soft.reserve(spans.size());
    for (const auto& h : spans) soft.push_back({h.start, h.end, 1.0});
    return spans_to_mask(soft, length);
}

std::vector<HardSpan> mask_to_spans(const CharMask& mask, double threshold) {
    std::vector<HardSpan> out;
    for (std::size_t i = 0; i < mask.size();) {
        if (mask[i] > threshold) {
            std::size_t j = i;
            while (j < mask.size() && mask[j] > threshold) ++j;
            out.push_back({i, j});
            i = j;
        } else {
            ++i;
        }
    }
    return out;
}

}  // namespace mikani
