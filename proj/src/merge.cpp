#include <algorithm>
#include <cmath>

#include "mikani/ensemble.hpp"
#include "mikani/errors.hpp"

namespace mikani::ensemble {

namespace {
// Absorbs binary rounding in differences such as 0.75 - 0.6.
constexpr double kProbSlack = 1e-9;
}

void MergePolicy::validate() const {
    if (max_word_gap < 1) throw ValidationError("merge: max_word_gap must be >= 1");
    if (!(max_prob_diff >= 0.0 && max_prob_diff <= 1.0)) throw ValidationError("merge: max_prob_diff must be in [0,1]");
    if (!(hard_threshold >= 0.0 && hard_threshold <= 1.0)) throw ValidationError("merge: hard_threshold must be in [0,1]");
}

std::vector<MergedSpan> merge_spans(const std::vector<MergedSpan>& spans, const MergePolicy& policy) {
    policy.validate();
    std::vector<MergedSpan> current;
    for (const auto& s : spans)
        if (s.prob > 0.0) current.push_back(s);
    std::stable_sort(current.begin(), current.end(),
                     [](const MergedSpan& a, const MergedSpan& b) { return a.span.start < b.span.start; });

    for (bool changed = true; changed;) {
        changed = false;
        std::vector<MergedSpan> next;
        for (const auto& s : current) {
            if (!next.empty()) {
                auto& back = next.back();
                const std::size_t gap = s.first_word >= back.last_word ? s.first_word - back.last_word : 0;
                if (gap < policy.max_word_gap && std::abs(s.prob - back.prob) <= policy.max_prob_diff + kProbSlack) {
                    back.span.end = std::max(back.span.end, s.span.end);
                    back.last_word = std::max(back.last_word, s.last_word);
                    back.prob = std::max(back.prob, s.prob);
                    changed = true;
                    continue;
                }
            }
            next.push_back(s);
        }
        current = std::move(next);
    }
    return current;
}

std::vector<MergedSpan> merge_tokens(const std::vector<ScoredToken>& tokens, const MergePolicy& policy) {
    std::vector<MergedSpan> spans;
    spans.reserve(tokens.size());
    for (const auto& t : tokens) {
        if (t.span.empty()) continue;
        spans.push_back({t.word_index, t.word_index, t.span, t.prob});
    }
    return merge_spans(spans, policy);
}

std::vector<SoftSpan> to_soft(const std::vector<MergedSpan>& spans) {
    std::vector<SoftSpan> out;
    out.reserve(spans.size());
    for (const auto& s : spans) out.push_back({s.span.start, s.span.end, s.prob});
    return out;
}

std::vector<HardSpan> to_hard(const std::vector<SoftSpan>& soft, const MergePolicy& policy) {
    std::vector<HardSpan> out;
    for (const auto& s : soft)
        if (s.prob > policy.hard_threshold) out.push_back({s.start, s.end});
    return out;
}

}  // namespace mikani::ensemble
