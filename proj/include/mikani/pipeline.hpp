#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mikani/core.hpp"
#include "mikani/ensemble.hpp"
#include "mikani/features.hpp"
#include "mikani/judge.hpp"
#include "mikani/llm.hpp"
#include "mikani/wiki.hpp"

namespace mikani::pipeline {

struct LlmSettings {
    llm::Mode mode = llm::Mode::live;
    llm::OpenAiConfig openai;
    llm::RetryPolicy retry;
    std::filesystem::path transcripts_dir = ".mikani/transcripts";
    std::filesystem::path prompts_file;  ///< optional JSON overrides for the stage templates
};

struct WikiSettings {
    wiki::HttpWikiConfig http;
    std::filesystem::path cache_dir = ".mikani/wiki";
    bool llm_coreference = false;
};

struct PipelineConfig {
    LlmSettings llm;
    WikiSettings wiki;
    wiki::SelectionConfig selection;
    ensemble::SvrConfig svr;
    ensemble::MergePolicy merge;
    std::size_t parallelism = 4;
    std::filesystem::path rfvm_cache_dir = ".mikani/rfvm";  ///< empty disables the cache
    std::filesystem::path model_path = "mikani-svr.json";
    std::filesystem::path sidecar_path;

    void validate() const;
};

/// Every setting except secrets, grouped by config-file section.
nlohmann::json config_to_json(const PipelineConfig& config);

/// Sets one `section.key` from its textual value. Throws ValidationError for
/// unknown keys or malformed values. Relative paths are resolved against `base`.
void apply_setting(PipelineConfig& config, const std::string& section, const std::string& key,
                   const std::string& value, const std::filesystem::path& base = {});

/// Reads a key/value config file with `[section]` headers and `#` comments.
void apply_config_file(PipelineConfig& config, const std::filesystem::path& path);
void apply_config_text(PipelineConfig& config, std::istream& in, const std::filesystem::path& base = {});

/// MIKANI_<SECTION>_<KEY> overrides plus the API key from OPENAI_API_KEY or MIKANI_API_KEY.
void apply_environment(PipelineConfig& config);

enum class Branch { full, rfvm_only, bm_only };

struct TrainSummary {
    ensemble::SvrModel model;
    std::size_t train_samples = 0;
    std::size_t holdout_samples = 0;
    std::size_t train_rows = 0;
    std::size_t holdout_rows = 0;
    std::optional<double> holdout_mse;
    std::optional<double> baseline_mse;  ///< predicting the training-target mean
    ensemble::SvrTrainReport report;
};

/// Wires the gateway, Wikipedia access and caches for one configuration.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig config);
    /// Uses caller-supplied backends (tests, stub servers).
    Pipeline(PipelineConfig config, std::shared_ptr<llm::ChatTransport> transport, std::shared_ptr<wiki::WikiApi> api);

    const PipelineConfig& config() const noexcept { return config_; }

    /// RFVM for one sample, read from / written to the per-sample cache.
    judge::RfvmResult rfvm(const QaSample& sample);

    Prediction annotate_sample(const QaSample& sample, Branch branch, const features::Sidecar* sidecar,
                               const ensemble::SvrModel* model);
    std::vector<Prediction> annotate(const std::vector<QaSample>& dataset, Branch branch,
                                     const features::Sidecar* sidecar, const ensemble::SvrModel* model);

    TrainSummary train_svr(const std::vector<QaSample>& dataset, const features::Sidecar& sidecar);

    std::uint64_t wiki_api_calls() const { return retriever_->api_calls(); }

private:
    void init(std::shared_ptr<llm::ChatTransport> transport, std::shared_ptr<wiki::WikiApi> api);
    std::vector<features::FeatureRow> feature_rows(const QaSample& sample, const features::Sidecar& sidecar);

    PipelineConfig config_;
    std::shared_ptr<llm::TranscriptStore> store_;
    std::unique_ptr<llm::Gateway> gateway_;
    std::shared_ptr<wiki::WikiCache> wiki_cache_;
    std::unique_ptr<wiki::Retriever> retriever_;
};

/// Cache key for a sample's RFVM result under the given selection settings.
std::string rfvm_cache_key(const QaSample& sample, const wiki::SelectionConfig& selection);

/// Token probabilities merged into soft spans and thresholded into hard spans.
Prediction spans_from_tokens(const QaSample& sample, const std::vector<features::SidecarToken>& tokens,
                             const std::vector<double>& probs, const ensemble::MergePolicy& policy);

/// Sample-level 90/10 split: shuffled indices (seed 42), holdout first.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_samples(std::size_t count,
                                                                            double holdout_fraction = 0.1,
                                                                            unsigned seed = 42);

struct CacheEntry {
    std::string name;
    std::filesystem::path dir;
    std::size_t files = 0;
    std::uintmax_t bytes = 0;
};

/// Managed cache directories that currently exist (wiki responses, RFVM results).
std::vector<CacheEntry> list_caches(const PipelineConfig& config);
/// Removes the managed cache contents; returns the number of files deleted.
std::size_t clear_caches(const PipelineConfig& config);

/// Standalone HTML page with the answer and hallucinated spans highlighted.
std::string render_html(const QaSample& sample, const Prediction& prediction);

}  // namespace mikani::pipeline
