#include "mikani/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mikani/errors.hpp"
#include "mikani/text.hpp"

namespace mikani::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + tmp.string());
        out << content;
    }
    fs::rename(tmp, path);
}

double mse(const std::vector<double>& pred, const std::vector<double>& target) {
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
    return pred.empty() ? 0.0 : acc / static_cast<double>(pred.size());
}

std::string html_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
    std::shared_ptr<llm::ChatTransport> transport;
    std::shared_ptr<wiki::WikiApi> api;
    if (config_.llm.mode == llm::Mode::replay) {
        api = std::make_shared<wiki::OfflineWikiApi>();
    } else {
        if (config_.llm.openai.api_key.empty())
            spdlog::warn("no API key configured (set OPENAI_API_KEY or MIKANI_API_KEY)");
        transport = std::make_shared<llm::OpenAiTransport>(config_.llm.openai);
        api = std::make_shared<wiki::HttpWikiApi>(config_.wiki.http);
    }
    init(std::move(transport), std::move(api));
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<llm::ChatTransport> transport,
                   std::shared_ptr<wiki::WikiApi> api)
    : config_(std::move(config)) {
    init(std::move(transport), std::move(api));
}

void Pipeline::init(std::shared_ptr<llm::ChatTransport> transport, std::shared_ptr<wiki::WikiApi> api) {
    config_.validate();
    store_ = std::make_shared<llm::TranscriptStore>(config_.llm.transcripts_dir, config_.llm.mode);
    auto prompts = config_.llm.prompts_file.empty() ? llm::PromptLibrary::defaults()
                                                    : llm::PromptLibrary::load(config_.llm.prompts_file);
    gateway_ = std::make_unique<llm::Gateway>(store_, std::move(transport), std::move(prompts), config_.llm.retry);
    wiki_cache_ = std::make_shared<wiki::WikiCache>(config_.wiki.cache_dir);
    auto resolver = config_.wiki.llm_coreference ? wiki::llm_resolver(*gateway_) : wiki::identity_resolver();
    retriever_ = std::make_unique<wiki::Retriever>(std::move(api), wiki_cache_, std::move(resolver));
}

std::string rfvm_cache_key(const QaSample& sample, const wiki::SelectionConfig& selection) {
    const json key{{"id", sample.id},
                   {"lang", sample.lang},
                   {"question", sample.question},
                   {"answer", sample.answer},
                   {"strategy", wiki::strategy_name(selection.strategy)},
                   {"top_n", selection.top_n},
                   {"lambda", selection.lambda}};
    return text::sha256_hex(key.dump());
}

judge::RfvmResult Pipeline::rfvm(const QaSample& sample) {
    fs::path cached;
    if (!config_.rfvm_cache_dir.empty()) {
        cached = config_.rfvm_cache_dir / (rfvm_cache_key(sample, config_.selection) + ".json");
        if (std::ifstream in(cached); in) {
            try {
                return judge::rfvm_from_json(json::parse(in));
            } catch (const std::exception& e) {
                spdlog::warn("ignoring unreadable RFVM cache entry {}: {}", cached.string(), e.what());
            }
        }
    }
    judge::RfvmDeps deps{*gateway_, *retriever_, config_.selection, config_.parallelism};
    auto result = judge::run_rfvm(sample, deps);
    if (!cached.empty()) write_atomic(cached, judge::rfvm_to_json(result).dump(1) + "\n");
    return result;
}

Prediction spans_from_tokens(const QaSample& sample, const std::vector<features::SidecarToken>& tokens,
                             const std::vector<double>& probs, const ensemble::MergePolicy& policy) {
    if (tokens.size() != probs.size()) throw ValidationError("token and probability counts differ");
    const auto words = features::token_word_indices(sample.answer, tokens);
    std::vector<ensemble::ScoredToken> scored;
    scored.reserve(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) scored.push_back({words[i], tokens[i].span, probs[i]});
    Prediction p;
    p.id = sample.id;
    p.soft = ensemble::to_soft(ensemble::merge_tokens(scored, policy));
    p.hard = ensemble::to_hard(p.soft, policy);
    return p;
}

std::vector<features::FeatureRow> Pipeline::feature_rows(const QaSample& sample, const features::Sidecar& sidecar) {
    const auto& tokens = sidecar.tokens_for(sample.id);
    const auto flags = features::qa_entity_flags(sidecar.entities_for(sample.id), tokens, sample.answer);
    return features::assemble_features(sample, tokens, rfvm(sample), flags);
}

Prediction Pipeline::annotate_sample(const QaSample& sample, Branch branch, const features::Sidecar* sidecar,
                                     const ensemble::SvrModel* model) {
    Prediction empty;
    empty.id = sample.id;
    if (branch == Branch::rfvm_only) {
        auto r = rfvm(sample);
        Prediction p;
        p.id = sample.id;
        p.soft = r.spans;
        p.hard = ensemble::to_hard(p.soft, config_.merge);
        return p;
    }
    if (sidecar == nullptr)
        throw ValidationError("a sidecar file is required for this mode; run the bm-annotator to produce one");
    const auto& tokens = sidecar->tokens_for(sample.id);
    if (tokens.empty()) {
        if (sample.answer_length() > 0 && !text::trim(sample.answer).empty())
            throw ValidationError("sidecar has no tokens for sample '" + sample.id +
                                  "'; rerun the bm-annotator over this dataset");
        return empty;
    }
    std::vector<double> probs;
    if (branch == Branch::bm_only) {
        for (const auto& t : tokens) probs.push_back(t.bm_score);
    } else {
        if (model == nullptr) throw ValidationError("full mode needs a trained SVR model (run train-svr first)");
        ensemble::Matrix rows;
        for (const auto& r : feature_rows(sample, *sidecar)) rows.push_back(r.values());
        probs = ensemble::svr_predict(*model, rows);
    }
    return spans_from_tokens(sample, tokens, probs, config_.merge);
}

std::vector<Prediction> Pipeline::annotate(const std::vector<QaSample>& dataset, Branch branch,
                                           const features::Sidecar* sidecar, const ensemble::SvrModel* model) {
    if (branch == Branch::full && model != nullptr && model->dim != features::kFeatureDim)
        throw ValidationError(fmt::format("model feature dimension {} does not match the pipeline's {}", model->dim,
                                          features::kFeatureDim));
    std::vector<Prediction> out;
    out.reserve(dataset.size());
    for (const auto& sample : dataset) {
        spdlog::debug("annotating {}", sample.id);
        out.push_back(annotate_sample(sample, branch, sidecar, model));
    }
    return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_samples(std::size_t count, double holdout_fraction,
                                                                            unsigned seed) {
    std::vector<std::size_t> idx(count);
    std::iota(idx.begin(), idx.end(), 0);
    // Explicit Fisher-Yates so the split does not depend on the standard library.
    std::mt19937 rng(seed);
    for (std::size_t i = count; i > 1; --i) std::swap(idx[i - 1], idx[rng() % i]);
    const auto holdout = static_cast<std::size_t>(static_cast<double>(count) * holdout_fraction);
    std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(holdout));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(holdout), idx.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {train, test};
}

TrainSummary Pipeline::train_svr(const std::vector<QaSample>& dataset, const features::Sidecar& sidecar) {
    std::vector<const QaSample*> usable;
    for (const auto& s : dataset) {
        if (!s.gold_soft) {
            spdlog::warn("train-svr: sample '{}' has no soft labels, skipped", s.id);
            continue;
        }
        if (sidecar.tokens_for(s.id).empty()) {
            spdlog::warn("train-svr: sample '{}' has no sidecar tokens, skipped", s.id);
            continue;
        }
        usable.push_back(&s);
    }
    if (usable.empty()) throw ValidationError("train-svr: empty training set (need samples with soft labels and sidecar tokens)");

    const auto [train_idx, test_idx] = split_samples(usable.size());
    auto collect = [&](const std::vector<std::size_t>& idx, ensemble::Matrix& rows, std::vector<double>& targets) {
        for (auto i : idx) {
            const auto& s = *usable[i];
            for (const auto& r : feature_rows(s, sidecar)) rows.push_back(r.values());
            const auto t = features::token_targets(s, sidecar.tokens_for(s.id));
            targets.insert(targets.end(), t.begin(), t.end());
        }
    };
    ensemble::Matrix train_rows;
    ensemble::Matrix test_rows;
    std::vector<double> train_y;
    std::vector<double> test_y;
    collect(train_idx, train_rows, train_y);
    collect(test_idx, test_rows, test_y);
    if (train_rows.size() < 2) throw ValidationError("train-svr: fewer than 2 training tokens");

    TrainSummary summary;
    summary.model = ensemble::svr_train(train_rows, train_y, config_.svr, &summary.report);
    summary.train_samples = train_idx.size();
    summary.holdout_samples = test_idx.size();
    summary.train_rows = train_rows.size();
    summary.holdout_rows = test_rows.size();
    if (!test_rows.empty()) {
        const double mean = std::accumulate(train_y.begin(), train_y.end(), 0.0) / static_cast<double>(train_y.size());
        summary.holdout_mse = mse(ensemble::svr_predict(summary.model, test_rows), test_y);
        summary.baseline_mse = mse(std::vector<double>(test_y.size(), mean), test_y);
    }
    return summary;
}

std::vector<CacheEntry> list_caches(const PipelineConfig& config) {
    std::vector<CacheEntry> out;
    auto scan = [&](const std::string& name, const fs::path& dir) {
        if (dir.empty() || !fs::is_directory(dir)) return;
        CacheEntry e{name, dir, 0, 0};
        for (const auto& f : fs::recursive_directory_iterator(dir)) {
            if (!f.is_regular_file()) continue;
            ++e.files;
            e.bytes += f.file_size();
        }
        if (e.files > 0) out.push_back(std::move(e));
    };
    scan("wiki", config.wiki.cache_dir);
    scan("rfvm", config.rfvm_cache_dir);
    return out;
}

std::size_t clear_caches(const PipelineConfig& config) {
    std::size_t removed = 0;
    auto remove_json = [&](const fs::path& dir, std::initializer_list<const char*> exts) {
        if (dir.empty() || !fs::is_directory(dir)) return;
        for (const auto& f : fs::directory_iterator(dir)) {
            if (!f.is_regular_file()) continue;
            const auto ext = f.path().extension().string();
            if (std::find(exts.begin(), exts.end(), ext) != exts.end()) removed += fs::remove(f.path()) ? 1 : 0;
        }
    };
    if (!config.wiki.cache_dir.empty()) {
        remove_json(config.wiki.cache_dir / "searches", {".json", ".tmp"});
        remove_json(config.wiki.cache_dir / "pages", {".txt", ".tmp"});
    }
    remove_json(config.rfvm_cache_dir, {".json", ".tmp"});
    return removed;
}

std::string render_html(const QaSample& sample, const Prediction& prediction) {
    const auto cps = text::decode(sample.answer);
    const auto mask = spans_to_mask(prediction.soft, cps.size());
    std::vector<bool> hard(cps.size(), false);
    for (const auto& h : prediction.hard)
        for (std::size_t i = h.start; i < std::min(h.end, cps.size()); ++i) hard[i] = true;

    std::ostringstream out;
    out << "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>" << html_escape(sample.id)
        << "</title>\n<style>mark{background:#f6b}.soft{background:rgba(255,160,0,var(--p))}</style></head>\n<body>\n"
        << "<p><b>Q:</b> " << html_escape(sample.question) << "</p>\n<p><b>A:</b> ";
    for (std::size_t i = 0; i < cps.size();) {
        std::size_t j = i;
        while (j < cps.size() && mask[j] == mask[i] && hard[j] == hard[i]) ++j;
        const auto chunk = html_escape(text::encode(std::u32string_view(cps).substr(i, j - i)));
        if (hard[i]) out << fmt::format("<mark title=\"{:.2f}\">{}</mark>", mask[i], chunk);
        else if (mask[i] > 0.0) out << fmt::format("<span class=\"soft\" style=\"--p:{:.2f}\" title=\"{:.2f}\">{}</span>", mask[i], mask[i], chunk);
        else out << chunk;
        i = j;
    }
    out << "</p>\n</body></html>\n";
    return out.str();
}

}  // namespace mikani::pipeline
