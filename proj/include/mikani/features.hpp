#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mikani/core.hpp"
#include "mikani/judge.hpp"
#include "mikani/text.hpp"

namespace mikani::features {

/// Universal POS tags followed by the UNK slot.
inline constexpr std::array<std::string_view, 18> kPosTags = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X", "UNK",
};
inline constexpr std::size_t kPosDim = kPosTags.size();
inline constexpr std::size_t kEmbeddingDim = 16;
/// pos one-hot + qa_entity + rfvm_score + bert_annotation + bm_score + embedding.
inline constexpr std::size_t kFeatureDim = kPosDim + 4 + kEmbeddingDim;

/// Index into kPosTags; unknown tags map to UNK.
std::size_t pos_index(std::string_view tag);

struct SidecarToken {
    std::string sample_id;
    std::size_t token_index = 0;
    std::string surface;
    text::CharRange span;
    std::string pos_tag;  ///< one of kPosTags
    double bm_score = 0.0;
    double bert_annotation = 0.0;
    std::array<double, kEmbeddingDim> bm_embedding{};
    friend bool operator==(const SidecarToken&, const SidecarToken&) = default;
};

struct QuestionEntities {
    std::string sample_id;
    std::vector<std::string> entities;
    friend bool operator==(const QuestionEntities&, const QuestionEntities&) = default;
};

/// Contents of a sidecar file, grouped by sample id.
struct Sidecar {
    std::map<std::string, std::vector<SidecarToken>> tokens;
    std::map<std::string, QuestionEntities> entities;

    const std::vector<SidecarToken>& tokens_for(const std::string& sample_id) const;
    std::vector<std::string> entities_for(const std::string& sample_id) const;
    std::size_t token_count() const;
};

inline constexpr std::string_view kSidecarSchema = "mikani-sidecar";
inline constexpr int kSidecarVersion = 1;

/// Reads a schema-v1 sidecar. Throws IngestError with the line number on any
/// schema violation, including a header mismatch.
Sidecar load_sidecar(const std::filesystem::path& path);
Sidecar read_sidecar(std::istream& in);
/// Writes a schema-v1 sidecar (header, token lines, entity lines).
void write_sidecar(std::ostream& out, const Sidecar& sidecar);

/// 1 for tokens overlapping a casefolded occurrence of a question entity in the answer.
std::vector<int> qa_entity_flags(const std::vector<std::string>& entities, const std::vector<SidecarToken>& tokens,
                                 std::string_view answer);

struct FeatureRow {
    std::array<double, kPosDim> pos_onehot{};
    double qa_entity = 0.0;
    double rfvm_score = 0.0;
    double bert_annotation = 0.0;
    double bm_score = 0.0;
    std::array<double, kEmbeddingDim> bm_embedding{};

    std::vector<double> values() const;
};

/// One row per sidecar token; rfvm_score is the max probability of RFVM words
/// overlapping the token. Throws ValidationError for an empty token list.
std::vector<FeatureRow> assemble_features(const QaSample& sample, const std::vector<SidecarToken>& tokens,
                                          const judge::RfvmResult& rfvm, const std::vector<int>& flags);

/// Max gold soft probability over each token's span.
std::vector<double> token_targets(const QaSample& sample, const std::vector<SidecarToken>& tokens);

/// Index of the whitespace-delimited word containing each token's start.
std::vector<std::size_t> token_word_indices(std::string_view answer, const std::vector<SidecarToken>& tokens);

}  // namespace mikani::features
