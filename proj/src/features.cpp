#include "mikani/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"

namespace mikani::features {

using nlohmann::json;

std::size_t pos_index(std::string_view tag) {
    for (std::size_t i = 0; i < kPosTags.size(); ++i)
        if (kPosTags[i] == tag) return i;
    return kPosDim - 1;
}

const std::vector<SidecarToken>& Sidecar::tokens_for(const std::string& sample_id) const {
    static const std::vector<SidecarToken> kEmpty;
    const auto it = tokens.find(sample_id);
    return it == tokens.end() ? kEmpty : it->second;
}

std::vector<std::string> Sidecar::entities_for(const std::string& sample_id) const {
    const auto it = entities.find(sample_id);
    return it == entities.end() ? std::vector<std::string>{} : it->second.entities;
}

std::size_t Sidecar::token_count() const {
    std::size_t n = 0;
    for (const auto& [_, v] : tokens) n += v.size();
    return n;
}

namespace {

double number_field(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) throw IngestError(line, std::string("sidecar: '") + key + "' missing or not a number");
    const double v = it->get<double>();
    if (!std::isfinite(v)) throw IngestError(line, std::string("sidecar: '") + key + "' is not finite");
    return v;
}

std::size_t index_field(const json& j, const char* key, std::size_t line) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number_integer() || it->get<long long>() < 0)
        throw IngestError(line, std::string("sidecar: '") + key + "' missing or not a non-negative integer");
    return it->get<std::size_t>();
}

SidecarToken parse_token(const json& j, std::size_t line) {
    SidecarToken t;
    if (!j.contains("sample_id") || !j["sample_id"].is_string()) throw IngestError(line, "sidecar: 'sample_id' missing");
    t.sample_id = j["sample_id"].get<std::string>();
    t.token_index = index_field(j, "token_index", line);
    if (!j.contains("surface") || !j["surface"].is_string()) throw IngestError(line, "sidecar: 'surface' missing");
    t.surface = j["surface"].get<std::string>();
    t.span = {index_field(j, "start", line), index_field(j, "end", line)};
    if (t.span.start > t.span.end) throw IngestError(line, "sidecar: start > end");
    if (!j.contains("pos") || !j["pos"].is_string()) throw IngestError(line, "sidecar: 'pos' missing");
    const auto pos = j["pos"].get<std::string>();
    t.pos_tag = std::string(kPosTags[pos_index(pos)]);
    if (t.pos_tag == "UNK" && pos != "UNK") spdlog::warn("sidecar line {}: unknown POS tag '{}' mapped to UNK", line, pos);
    t.bm_score = number_field(j, "bm_score", line);
    if (t.bm_score < 0.0 || t.bm_score > 1.0) throw IngestError(line, "sidecar: bm_score outside [0,1]");
    t.bert_annotation = number_field(j, "bert_annotation", line);
    const auto emb = j.find("bm_embedding");
    if (emb == j.end() || !emb->is_array()) throw IngestError(line, "sidecar: 'bm_embedding' missing");
    if (emb->size() != kEmbeddingDim)
        throw IngestError(line, "sidecar: bm_embedding has length " + std::to_string(emb->size()) + ", expected " +
                                    std::to_string(kEmbeddingDim));
    for (std::size_t i = 0; i < kEmbeddingDim; ++i) {
        if (!(*emb)[i].is_number()) throw IngestError(line, "sidecar: bm_embedding entry is not a number");
        t.bm_embedding[i] = (*emb)[i].get<double>();
        if (!std::isfinite(t.bm_embedding[i])) throw IngestError(line, "sidecar: bm_embedding entry is not finite");
    }
    return t;
}

}  // namespace

Sidecar read_sidecar(std::istream& in) {
    Sidecar out;
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (text::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw IngestError(lineno, std::string("sidecar: invalid JSON: ") + e.what());
        }
        if (!j.is_object()) throw IngestError(lineno, "sidecar: line is not an object");
        if (!header_seen) {
            if (j.value("schema", "") != kSidecarSchema || !j.contains("version") || j["version"] != kSidecarVersion)
                throw IngestError(lineno, "sidecar: expected header {\"schema\":\"mikani-sidecar\",\"version\":1}");
            if (j.value("embedding_dim", 0) != static_cast<int>(kEmbeddingDim))
                throw IngestError(lineno, "sidecar: header embedding_dim must be " + std::to_string(kEmbeddingDim));
            header_seen = true;
            continue;
        }
        if (j.contains("question_entities")) {
            if (!j.contains("sample_id") || !j["sample_id"].is_string()) throw IngestError(lineno, "sidecar: 'sample_id' missing");
            QuestionEntities e{j["sample_id"].get<std::string>(), {}};
            for (const auto& m : j["question_entities"]) {
                if (!m.is_string()) throw IngestError(lineno, "sidecar: entity mention is not a string");
                e.entities.push_back(m.get<std::string>());
            }
            auto& slot = out.entities[e.sample_id];
            slot.sample_id = e.sample_id;
            slot.entities.insert(slot.entities.end(), e.entities.begin(), e.entities.end());
            continue;
        }
        auto tok = parse_token(j, lineno);
        auto& group = out.tokens[tok.sample_id];
        if (tok.token_index != group.size())
            throw IngestError(lineno, "sidecar: token_index " + std::to_string(tok.token_index) + " for sample '" +
                                          tok.sample_id + "' is not consecutive (expected " +
                                          std::to_string(group.size()) + ")");
        if (!group.empty() && tok.span.start < group.back().span.end)
            throw IngestError(lineno, "sidecar: token spans out of order for sample '" + tok.sample_id + "'");
        group.push_back(std::move(tok));
    }
    if (!header_seen) throw IngestError(lineno, "sidecar: missing schema header");
    return out;
}

Sidecar load_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestError(0, "cannot open sidecar " + path.string());
    return read_sidecar(in);
}

void write_sidecar(std::ostream& out, const Sidecar& sidecar) {
    out << json{{"schema", kSidecarSchema}, {"version", kSidecarVersion}, {"embedding_dim", kEmbeddingDim}}.dump() << '\n';
    for (const auto& [_, group] : sidecar.tokens) {
        for (const auto& t : group) {
            out << json{{"sample_id", t.sample_id}, {"token_index", t.token_index}, {"surface", t.surface},
                        {"start", t.span.start}, {"end", t.span.end}, {"pos", t.pos_tag}, {"bm_score", t.bm_score},
                        {"bert_annotation", t.bert_annotation}, {"bm_embedding", t.bm_embedding}}
                       .dump()
                << '\n';
        }
    }
    for (const auto& [_, e] : sidecar.entities)
        out << json{{"sample_id", e.sample_id}, {"question_entities", e.entities}}.dump() << '\n';
}

std::vector<int> qa_entity_flags(const std::vector<std::string>& entities, const std::vector<SidecarToken>& tokens,
                                 std::string_view answer) {
    const auto haystack = text::casefold(text::decode(answer));
    std::vector<text::CharRange> occurrences;
    for (const auto& e : entities) {
        const auto needle = text::casefold(text::decode(text::trim(e)));
        if (needle.empty()) continue;
        for (auto pos = haystack.find(needle); pos != std::u32string::npos; pos = haystack.find(needle, pos + 1))
            occurrences.push_back({pos, pos + needle.size()});
    }
    std::vector<int> flags(tokens.size(), 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        for (const auto& occ : occurrences) {
            if (tokens[i].span.overlaps(occ)) {
                flags[i] = 1;
                break;
            }
        }
    }
    return flags;
}

std::vector<double> FeatureRow::values() const {
    std::vector<double> v;
    v.reserve(kFeatureDim);
    v.insert(v.end(), pos_onehot.begin(), pos_onehot.end());
    v.push_back(qa_entity);
    v.push_back(rfvm_score);
    v.push_back(bert_annotation);
    v.push_back(bm_score);
    v.insert(v.end(), bm_embedding.begin(), bm_embedding.end());
    return v;
}

std::vector<FeatureRow> assemble_features(const QaSample& sample, const std::vector<SidecarToken>& tokens,
                                          const judge::RfvmResult& rfvm, const std::vector<int>& flags) {
    if (tokens.empty())
        throw ValidationError("sample '" + sample.id + "': no sidecar tokens; the SVR needs encoder features");
    if (flags.size() != tokens.size())
        throw ValidationError("sample '" + sample.id + "': entity flag count does not match token count");
    const std::size_t len = sample.answer_length();
    std::vector<FeatureRow> rows;
    rows.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const auto& t = tokens[i];
        if (t.span.end > len)
            throw ValidationError("sample '" + sample.id + "': sidecar token " + std::to_string(i) + " exceeds the answer");
        FeatureRow row;
        row.pos_onehot[pos_index(t.pos_tag)] = 1.0;
        row.qa_entity = flags[i] ? 1.0 : 0.0;
        for (const auto& p : rfvm.predictions)
            if (p.word.span.overlaps(t.span)) row.rfvm_score = std::max(row.rfvm_score, p.prob);
        row.bert_annotation = t.bert_annotation;
        row.bm_score = t.bm_score;
        row.bm_embedding = t.bm_embedding;
        rows.push_back(row);
    }
    return rows;
}

std::vector<double> token_targets(const QaSample& sample, const std::vector<SidecarToken>& tokens) {
    const CharMask mask = spans_to_mask(sample.gold_soft.value_or(std::vector<SoftSpan>{}), sample.answer_length());
    std::vector<double> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) {
        double m = 0.0;
        for (std::size_t c = t.span.start; c < std::min(t.span.end, mask.size()); ++c) m = std::max(m, mask[c]);
        out.push_back(m);
    }
    return out;
}

std::vector<std::size_t> token_word_indices(std::string_view answer, const std::vector<SidecarToken>& tokens) {
    const auto cps = text::decode(answer);
    // word_of[c] = ordinal of the whitespace-delimited word at or before c.
    std::vector<std::size_t> word_of(cps.size() + 1, 0);
    std::size_t word = 0;
    bool in_word = false;
    bool seen_any = false;
    for (std::size_t c = 0; c < cps.size(); ++c) {
        if (text::is_space(cps[c])) {
            in_word = false;
        } else if (!in_word) {
            if (seen_any) ++word;
            in_word = true;
            seen_any = true;
        }
        word_of[c] = word;
    }
    word_of[cps.size()] = word;
    std::vector<std::size_t> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(word_of[std::min(t.span.start, cps.size())]);
    return out;
}

}  // namespace mikani::features
