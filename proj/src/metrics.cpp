#include "mikani/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"

namespace mikani::metrics {

namespace {

std::vector<HardSpan> normalized(const std::vector<HardSpan>& spans, std::size_t answer_len) {
    std::vector<HardSpan> s;
    for (const auto& span : spans) {
        if (span.start > span.end || span.end > answer_len)
            throw ValidationError(fmt::format("span [{},{}) outside answer of length {}", span.start, span.end, answer_len));
        if (span.start < span.end) s.push_back(span);
    }
    std::sort(s.begin(), s.end(), [](const HardSpan& a, const HardSpan& b) { return a.start < b.start; });
    std::vector<HardSpan> out;
    for (const auto& span : s) {
        if (!out.empty() && span.start <= out.back().end) out.back().end = std::max(out.back().end, span.end);
        else out.push_back(span);
    }
    return out;
}

std::size_t covered(const std::vector<HardSpan>& spans) {
    std::size_t n = 0;
    for (const auto& s : spans) n += s.end - s.start;
    return n;
}

bool is_constant(const CharMask& m) {
    return std::adjacent_find(m.begin(), m.end(), std::not_equal_to<>()) == m.end();
}

LanguageReport summarize(const std::string& lang, const std::vector<const SampleScore*>& scores) {
    LanguageReport r;
    r.lang = lang;
    r.samples = scores.size();
    for (const auto* s : scores) {
        r.mean_iou += s->iou;
        r.mean_cor += s->spearman;
    }
    if (!scores.empty()) {
        r.mean_iou /= static_cast<double>(scores.size());
        r.mean_cor /= static_cast<double>(scores.size());
    }
    return r;
}

Evaluation aggregate(std::vector<SampleScore> samples) {
    Evaluation eval;
    std::map<std::string, std::vector<const SampleScore*>> by_lang;
    std::vector<const SampleScore*> all;
    eval.samples = std::move(samples);
    for (const auto& s : eval.samples) {
        by_lang[s.lang].push_back(&s);
        all.push_back(&s);
        if (s.missing) ++eval.missing;
    }
    for (const auto& [lang, scores] : by_lang) eval.languages.push_back(summarize(lang, scores));
    eval.overall = summarize("all", all);
    return eval;
}

template <typename KeyFn>
std::vector<HallucinationCount> count_tokens(const std::vector<QaSample>& dataset, const features::Sidecar& sidecar,
                                             KeyFn key_of) {
    std::map<std::string, HallucinationCount> counts;
    for (const auto& sample : dataset) {
        auto it = sidecar.tokens.find(sample.id);
        if (it == sidecar.tokens.end()) {
            spdlog::warn("stats: no sidecar tokens for sample '{}'", sample.id);
            continue;
        }
        const auto gold = normalized(gold_hard(sample), sample.answer_length());
        for (const auto& tok : it->second) {
            const bool hit = std::any_of(gold.begin(), gold.end(), [&](const HardSpan& g) {
                return tok.span.start < g.end && g.start < tok.span.end;
            });
            auto& c = counts[key_of(sample, tok)];
            (hit ? c.hallucinated : c.clean) += 1;
        }
    }
    std::vector<HallucinationCount> rows;
    for (auto& [key, c] : counts) {
        c.key = key;
        c.ratio = static_cast<double>(c.hallucinated) / static_cast<double>(c.hallucinated + c.clean);
        rows.push_back(c);
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const HallucinationCount& a, const HallucinationCount& b) { return a.ratio > b.ratio; });
    return rows;
}

}  // namespace

double iou(const std::vector<HardSpan>& pred, const std::vector<HardSpan>& gold, std::size_t answer_len) {
    const auto a = normalized(pred, answer_len);
    const auto b = normalized(gold, answer_len);
    std::size_t inter = 0;
    for (std::size_t i = 0, j = 0; i < a.size() && j < b.size();) {
        const std::size_t lo = std::max(a[i].start, b[j].start);
        const std::size_t hi = std::min(a[i].end, b[j].end);
        if (lo < hi) inter += hi - lo;
        if (a[i].end < b[j].end) ++i;
        else ++j;
    }
    const std::size_t uni = covered(a) + covered(b) - inter;
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<double> average_ranks(const std::vector<double>& values) {
    std::vector<std::size_t> order(values.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(values.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
        const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

double spearman_cor(const CharMask& pred, const CharMask& gold) {
    if (pred.size() != gold.size())
        throw ValidationError(fmt::format("spearman: mask lengths differ ({} vs {})", pred.size(), gold.size()));
    const bool pc = is_constant(pred);
    const bool gc = is_constant(gold);
    if (pc && gc) return 1.0;
    if (pc || gc) return 0.0;
    const auto rp = average_ranks(pred);
    const auto rg = average_ranks(gold);
    const double n = static_cast<double>(rp.size());
    const double mean = (n + 1.0) / 2.0;
    double cov = 0.0;
    double vp = 0.0;
    double vg = 0.0;
    for (std::size_t i = 0; i < rp.size(); ++i) {
        const double a = rp[i] - mean;
        const double b = rg[i] - mean;
        cov += a * b;
        vp += a * a;
        vg += b * b;
    }
    return std::clamp(cov / std::sqrt(vp * vg), -1.0, 1.0);
}

Prediction baseline(BaselineKind kind, const QaSample& sample) {
    Prediction p;
    p.id = sample.id;
    const std::size_t len = sample.answer_length();
    if (kind == BaselineKind::mark_all && len > 0) {
        p.soft.push_back({0, len, 1.0});
        p.hard.push_back({0, len});
    }
    return p;
}

std::vector<HardSpan> gold_hard(const QaSample& sample) {
    if (sample.gold_hard) return *sample.gold_hard;
    if (sample.gold_soft) return mask_to_spans(spans_to_mask(*sample.gold_soft, sample.answer_length()), 0.5);
    throw ValidationError("sample '" + sample.id + "' has no gold labels");
}

SampleScore score_sample(const QaSample& gold, const Prediction& pred) {
    const std::size_t len = gold.answer_length();
    SampleScore s;
    s.sample_id = gold.id;
    s.lang = gold.lang;
    const auto hard = gold_hard(gold);
    s.iou = iou(pred.hard, hard, len);
    const CharMask gold_mask = gold.gold_soft ? spans_to_mask(*gold.gold_soft, len) : spans_to_mask(hard, len);
    s.spearman = spearman_cor(spans_to_mask(pred.soft, len), gold_mask);
    return s;
}

Evaluation evaluate(const std::vector<Prediction>& predictions, const std::vector<QaSample>& gold) {
    std::unordered_map<std::string, const Prediction*> by_id;
    for (const auto& p : predictions) by_id[p.id] = &p;
    std::unordered_map<std::string, bool> gold_ids;
    for (const auto& g : gold) gold_ids[g.id] = true;
    for (const auto& p : predictions)
        if (!gold_ids.count(p.id)) throw ValidationError("prediction id '" + p.id + "' is not in the gold dataset");

    std::vector<SampleScore> scores;
    scores.reserve(gold.size());
    for (const auto& g : gold) {
        auto it = by_id.find(g.id);
        if (it == by_id.end()) {
            auto s = score_sample(g, baseline(BaselineKind::mark_none, g));
            s.missing = true;
            scores.push_back(std::move(s));
        } else {
            scores.push_back(score_sample(g, *it->second));
        }
    }
    auto eval = aggregate(std::move(scores));
    if (eval.missing > 0)
        spdlog::warn("{} gold sample(s) have no prediction and were scored as mark_none", eval.missing);
    return eval;
}

Evaluation evaluate_baseline(BaselineKind kind, const std::vector<QaSample>& gold) {
    std::vector<SampleScore> scores;
    scores.reserve(gold.size());
    for (const auto& g : gold) scores.push_back(score_sample(g, baseline(kind, g)));
    return aggregate(std::move(scores));
}

void render_table(std::ostream& out, const Evaluation& eval) {
    out << fmt::format("{:<8} {:>8} {:>8} {:>8}\n", "lang", "IoU", "Cor", "samples");
    for (const auto& r : eval.languages)
        out << fmt::format("{:<8} {:>8.4f} {:>8.4f} {:>8}\n", r.lang, r.mean_iou, r.mean_cor, r.samples);
    out << fmt::format("{:<8} {:>8.4f} {:>8.4f} {:>8}\n", eval.overall.lang, eval.overall.mean_iou,
                       eval.overall.mean_cor, eval.overall.samples);
    if (eval.missing > 0) out << fmt::format("missing predictions: {}\n", eval.missing);
}

void render_tsv(std::ostream& out, const Evaluation& eval) {
    out << "lang\tiou\tcor\tsamples\n";
    for (const auto& r : eval.languages)
        out << fmt::format("{}\t{:.10f}\t{:.10f}\t{}\n", r.lang, r.mean_iou, r.mean_cor, r.samples);
    out << fmt::format("{}\t{:.10f}\t{:.10f}\t{}\n", eval.overall.lang, eval.overall.mean_iou, eval.overall.mean_cor,
                       eval.overall.samples);
}

std::vector<HallucinationCount> pos_hallucination_stats(const std::vector<QaSample>& dataset,
                                                        const features::Sidecar& sidecar) {
    return count_tokens(dataset, sidecar,
                        [](const QaSample&, const features::SidecarToken& t) { return t.pos_tag; });
}

std::vector<HallucinationCount> language_hallucination_stats(const std::vector<QaSample>& dataset,
                                                             const features::Sidecar& sidecar) {
    return count_tokens(dataset, sidecar, [](const QaSample& s, const features::SidecarToken&) { return s.lang; });
}

void render_counts(std::ostream& out, const std::string& heading, const std::vector<HallucinationCount>& rows) {
    out << fmt::format("{:<8} {:>12} {:>8} {:>8}\n", heading, "hallucinated", "clean", "ratio");
    for (const auto& r : rows)
        out << fmt::format("{:<8} {:>12} {:>8} {:>8.4f}\n", r.key, r.hallucinated, r.clean, r.ratio);
}

}  // namespace mikani::metrics
