#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "mikani/core.hpp"
#include "mikani/features.hpp"

namespace mikani::metrics {

/// Character-set IoU of two hard span lists; 1.0 when both are empty.
/// Throws ValidationError when a span exceeds answer_len.
double iou(const std::vector<HardSpan>& pred, const std::vector<HardSpan>& gold, std::size_t answer_len);

/// Spearman correlation with average ranks for ties. Both masks constant gives
/// 1.0, exactly one constant gives 0.0. Throws ValidationError on a length mismatch.
double spearman_cor(const CharMask& pred, const CharMask& gold);

/// Average ranks (1-based) with ties sharing the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& values);

enum class BaselineKind { mark_all, mark_none };
Prediction baseline(BaselineKind kind, const QaSample& sample);

/// Hard gold spans, derived from the soft labels (> 0.5) when only those exist.
std::vector<HardSpan> gold_hard(const QaSample& sample);

struct SampleScore {
    std::string sample_id;
    std::string lang;
    double iou = 0.0;
    double spearman = 0.0;
    bool missing = false;  ///< no prediction was supplied; scored as mark_none
};

SampleScore score_sample(const QaSample& gold, const Prediction& pred);

struct LanguageReport {
    std::string lang;
    double mean_iou = 0.0;
    double mean_cor = 0.0;
    std::size_t samples = 0;
};

struct Evaluation {
    std::vector<SampleScore> samples;       ///< gold order
    std::vector<LanguageReport> languages;  ///< sorted by language code
    LanguageReport overall;                 ///< lang = "all"
    std::size_t missing = 0;
};

/// Scores every gold sample. Prediction ids absent from gold raise
/// ValidationError; gold samples without a prediction count as mark_none.
Evaluation evaluate(const std::vector<Prediction>& predictions, const std::vector<QaSample>& gold);
Evaluation evaluate_baseline(BaselineKind kind, const std::vector<QaSample>& gold);

void render_table(std::ostream& out, const Evaluation& eval);
void render_tsv(std::ostream& out, const Evaluation& eval);

struct HallucinationCount {
    std::string key;  ///< POS tag or language code
    std::size_t hallucinated = 0;
    std::size_t clean = 0;
    double ratio = 0.0;  ///< hallucinated / (hallucinated + clean)
};

/// Per POS tag counts of sidecar tokens overlapping a gold hard span, sorted
/// by ratio descending (ties by tag). Samples without sidecar tokens are skipped.
std::vector<HallucinationCount> pos_hallucination_stats(const std::vector<QaSample>& dataset,
                                                        const features::Sidecar& sidecar);
/// The same counts grouped by language.
std::vector<HallucinationCount> language_hallucination_stats(const std::vector<QaSample>& dataset,
                                                             const features::Sidecar& sidecar);

void render_counts(std::ostream& out, const std::string& heading, const std::vector<HallucinationCount>& rows);

}  // namespace mikani::metrics
