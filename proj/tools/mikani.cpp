// mikani command-line interface.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "mikani/core.hpp"
#include "mikani/errors.hpp"
#include "mikani/features.hpp"
#include "mikani/metrics.hpp"
#include "mikani/pipeline.hpp"

namespace {

using namespace mikani;
using nlohmann::json;

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kStage = 3, kTransport = 4, kFixture = 5 };

struct Overrides {
    std::string config_file;
    std::optional<std::string> mode;
    std::optional<std::string> strategy;
    std::optional<std::size_t> top_n;
    std::optional<double> lambda;
    std::optional<double> threshold;
    std::optional<std::size_t> parallelism;
    std::optional<std::string> transcripts;
    std::optional<std::string> wiki_cache;
    std::optional<std::string> rfvm_cache;
    std::optional<std::string> llm_endpoint;
    std::optional<std::string> wiki_url;
    std::string log_level = "info";
};

pipeline::PipelineConfig resolve(const Overrides& o) {
    pipeline::PipelineConfig c;
    if (!o.config_file.empty()) pipeline::apply_config_file(c, o.config_file);
    pipeline::apply_environment(c);
    if (o.mode) c.llm.mode = llm::parse_mode(*o.mode);
    if (o.strategy) c.selection.strategy = wiki::parse_strategy(*o.strategy);
    if (o.top_n) c.selection.top_n = *o.top_n;
    if (o.lambda) c.selection.lambda = *o.lambda;
    if (o.threshold) c.merge.hard_threshold = *o.threshold;
    if (o.parallelism) c.parallelism = *o.parallelism;
    if (o.transcripts) c.llm.transcripts_dir = *o.transcripts;
    if (o.wiki_cache) c.wiki.cache_dir = *o.wiki_cache;
    if (o.rfvm_cache) c.rfvm_cache_dir = *o.rfvm_cache;
    if (o.llm_endpoint) c.llm.openai.endpoint = *o.llm_endpoint;
    if (o.wiki_url) c.wiki.http.base_url = *o.wiki_url;
    c.validate();
    return c;
}

json spans_json(const std::vector<SoftSpan>& soft) {
    json out = json::array();
    for (const auto& s : soft) out.push_back({s.start, s.end, s.prob});
    return out;
}

json spans_json(const std::vector<HardSpan>& hard) {
    json out = json::array();
    for (const auto& h : hard) out.push_back({h.start, h.end});
    return out;
}

features::Sidecar require_sidecar(const std::string& path) {
    if (path.empty())
        throw ValidationError("no sidecar given (--sidecar); run the bm-annotator to produce one for this dataset");
    return features::load_sidecar(path);
}

int run_guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const StageError& e) {
        spdlog::error("stage '{}' failed: {}", e.stage(), e.what());
        return kStage;
    } catch (const TransportError& e) {
        spdlog::error("transport failure: {}", e.what());
        return kTransport;
    } catch (const FixtureMissing& e) {
        spdlog::error("replay fixture missing: {} (record it with --mode record)", e.key());
        return kFixture;
    } catch (const IngestError& e) {
        spdlog::error("{}", e.what());
        return kConfig;
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return kConfig;
    } catch (const TemplateError& e) {
        spdlog::error("{}", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kFailure;
    }
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("mikani"));
    spdlog::set_pattern("[%l] %v");

    CLI::App app{"mikani: token-level hallucination span annotator"};
    app.require_subcommand(1);
    Overrides o;
    app.add_option("--config", o.config_file, "Config file (key = value with [section] headers)");
    app.add_option("--mode", o.mode, "LLM mode: live, record or replay");
    app.add_option("--strategy", o.strategy, "Evidence selection: mmr or top_n");
    app.add_option("--top-n", o.top_n, "Evidence sentences per fact");
    app.add_option("--lambda", o.lambda, "MMR relevance/diversity trade-off");
    app.add_option("--threshold", o.threshold, "Hard-label threshold");
    app.add_option("--parallelism", o.parallelism, "Concurrent sentence judgments per sample");
    app.add_option("--transcripts", o.transcripts, "LLM transcript directory");
    app.add_option("--wiki-cache", o.wiki_cache, "Wikipedia response cache directory");
    app.add_option("--rfvm-cache", o.rfvm_cache, "Per-sample RFVM result cache (empty disables)");
    app.add_option("--llm-endpoint", o.llm_endpoint, "Chat-completions base URL");
    app.add_option("--wiki-url", o.wiki_url, "Wikipedia base URL");
    app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error")->capture_default_str();

    // verify
    auto* verify = app.add_subcommand("verify", "Annotate one question/answer pair with the retrieval branch");
    std::string v_question, v_answer, v_lang = "en", v_html;
    bool v_json = false;
    verify->add_option("--question,-q", v_question, "Question")->required();
    verify->add_option("--answer,-a", v_answer, "Answer to check")->required();
    verify->add_option("--lang", v_lang, "Answer language")->capture_default_str();
    verify->add_option("--html", v_html, "Write a highlighted HTML page here");
    verify->add_flag("--json", v_json, "Print the full result as JSON");

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Write span predictions for a dataset");
    std::string a_dataset, a_sidecar, a_out, a_model;
    bool rfvm_only = false, bm_only = false;
    annotate->add_option("--dataset", a_dataset, "Dataset JSONL")->required();
    annotate->add_option("--sidecar", a_sidecar, "Sidecar JSONL from the bm-annotator");
    annotate->add_option("--out", a_out, "Predictions JSONL")->required();
    annotate->add_option("--model", a_model, "Trained SVR model");
    auto* rf = annotate->add_flag("--rfvm-only", rfvm_only, "Emit the retrieval branch only");
    annotate->add_flag("--bm-only", bm_only, "Emit the encoder branch only")->excludes(rf);

    // train-svr
    auto* train = app.add_subcommand("train-svr", "Train the ensemble regressor");
    std::string t_dataset, t_sidecar, t_out;
    train->add_option("--dataset", t_dataset, "Labeled dataset JSONL")->required();
    train->add_option("--sidecar", t_sidecar, "Sidecar JSONL");
    train->add_option("--out", t_out, "Model output path");

    // eval
    auto* eval = app.add_subcommand("eval", "Score predictions against gold labels");
    std::string e_pred, e_gold, e_tsv, e_baseline;
    auto* pred_opt = eval->add_option("--predictions", e_pred, "Predictions JSONL");
    eval->add_option("--gold", e_gold, "Gold dataset JSONL")->required();
    eval->add_option("--tsv", e_tsv, "Also write the report as TSV");
    eval->add_option("--baseline", e_baseline, "Score a baseline instead: mark_all or mark_none")
        ->check(CLI::IsMember({"mark_all", "mark_none"}))
        ->excludes(pred_opt);

    // stats
    auto* stats = app.add_subcommand("stats", "Hallucination ratios by POS tag and language");
    std::string s_dataset, s_sidecar;
    stats->add_option("--dataset", s_dataset, "Labeled dataset JSONL")->required();
    stats->add_option("--sidecar", s_sidecar, "Sidecar JSONL");

    // cache
    auto* cache = app.add_subcommand("cache", "Inspect or clear managed caches");
    std::string c_action;
    cache->add_option("action", c_action, "list or clear")->required()->check(CLI::IsMember({"list", "clear"}));

    auto* show = app.add_subcommand("config", "Print the resolved configuration as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    spdlog::set_level(spdlog::level::from_str(o.log_level));

    return run_guarded([&]() -> int {
        auto config = resolve(o);

        if (*show) {
            std::cout << pipeline::config_to_json(config).dump(2) << '\n';
            return kOk;
        }

        if (*verify) {
            QaSample sample;
            sample.id = "verify";
            sample.lang = v_lang;
            sample.question = v_question;
            sample.answer = v_answer;
            config.rfvm_cache_dir.clear();
            pipeline::Pipeline p(config);
            const auto result = p.rfvm(sample);
            Prediction pred;
            pred.id = sample.id;
            pred.soft = result.spans;
            pred.hard = ensemble::to_hard(pred.soft, config.merge);
            if (v_json) {
                json words = json::array();
                for (const auto& w : result.predictions)
                    words.push_back({{"word", w.word.surface}, {"start", w.word.span.start}, {"end", w.word.span.end}, {"prob", w.prob}});
                std::cout << json{{"words", words}, {"soft_labels", spans_json(pred.soft)}, {"hard_labels", spans_json(pred.hard)}}.dump(2)
                          << '\n';
            } else {
                for (const auto& w : result.predictions)
                    std::cout << fmt::format("{:<20} [{:>4},{:>4})  {:.3f}\n", w.word.surface, w.word.span.start, w.word.span.end, w.prob);
                std::cout << "soft_labels: " << spans_json(pred.soft).dump() << '\n';
                std::cout << "hard_labels: " << spans_json(pred.hard).dump() << '\n';
            }
            if (!v_html.empty()) {
                std::ofstream(v_html) << pipeline::render_html(sample, pred);
                spdlog::info("wrote {}", v_html);
            }
            return kOk;
        }

        if (*annotate) {
            const auto dataset = load_dataset(a_dataset);
            const auto branch = rfvm_only ? pipeline::Branch::rfvm_only
                                : bm_only ? pipeline::Branch::bm_only
                                          : pipeline::Branch::full;
            std::optional<features::Sidecar> sidecar;
            std::optional<ensemble::SvrModel> model;
            if (branch != pipeline::Branch::rfvm_only)
                sidecar = require_sidecar(a_sidecar.empty() ? config.sidecar_path.string() : a_sidecar);
            if (branch == pipeline::Branch::full) model = ensemble::load_model(a_model.empty() ? config.model_path : std::filesystem::path(a_model));
            pipeline::Pipeline p(config);
            const auto preds = p.annotate(dataset, branch, sidecar ? &*sidecar : nullptr, model ? &*model : nullptr);
            write_predictions(a_out, preds);
            spdlog::info("wrote {} predictions to {}", preds.size(), a_out);
            return kOk;
        }

        if (*train) {
            const auto dataset = load_dataset(t_dataset);
            const auto sidecar = require_sidecar(t_sidecar.empty() ? config.sidecar_path.string() : t_sidecar);
            pipeline::Pipeline p(config);
            const auto summary = p.train_svr(dataset, sidecar);
            const std::filesystem::path out = t_out.empty() ? config.model_path : std::filesystem::path(t_out);
            ensemble::save_model(summary.model, out);
            spdlog::info("trained on {} samples ({} tokens), {} support vectors, {} iterations", summary.train_samples,
                         summary.train_rows, summary.model.support_vectors.size(), summary.report.iterations);
            if (summary.holdout_mse)
                spdlog::info("holdout MSE {:.6f} over {} samples ({} tokens); training-mean baseline {:.6f}",
                             *summary.holdout_mse, summary.holdout_samples, summary.holdout_rows, *summary.baseline_mse);
            else
                spdlog::info("holdout empty (fewer than 10 usable samples); no validation MSE");
            spdlog::info("wrote {}", out.string());
            return kOk;
        }

        if (*eval) {
            const auto gold = load_dataset(e_gold);
            metrics::Evaluation report;
            if (!e_baseline.empty()) {
                report = metrics::evaluate_baseline(
                    e_baseline == "mark_all" ? metrics::BaselineKind::mark_all : metrics::BaselineKind::mark_none, gold);
            } else {
                if (e_pred.empty()) throw ValidationError("eval needs --predictions or --baseline");
                report = metrics::evaluate(load_predictions(e_pred), gold);
            }
            metrics::render_table(std::cout, report);
            if (!e_tsv.empty()) {
                std::ofstream out(e_tsv);
                if (!out) throw Error("cannot write " + e_tsv);
                metrics::render_tsv(out, report);
            }
            return kOk;
        }

        if (*stats) {
            const auto dataset = load_dataset(s_dataset);
            const auto sidecar = require_sidecar(s_sidecar.empty() ? config.sidecar_path.string() : s_sidecar);
            metrics::render_counts(std::cout, "pos", metrics::pos_hallucination_stats(dataset, sidecar));
            std::cout << '\n';
            metrics::render_counts(std::cout, "lang", metrics::language_hallucination_stats(dataset, sidecar));
            return kOk;
        }

        if (*cache) {
            if (c_action == "list") {
                for (const auto& e : pipeline::list_caches(config))
                    std::cout << fmt::format("{}\t{}\t{} files\t{} bytes\n", e.name, e.dir.string(), e.files, e.bytes);
            } else {
                std::cout << fmt::format("removed {} files\n", pipeline::clear_caches(config));
            }
            return kOk;
        }
        return kFailure;
    });
}
