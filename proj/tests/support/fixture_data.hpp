#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mikani/core.hpp"
#include "mikani/features.hpp"
#include "mikani/llm.hpp"
#include "mikani/pipeline.hpp"
#include "stubs.hpp"

namespace mikani::testing {

/// Five labeled samples (en x3, es, de) with known hallucinated spans.
std::vector<QaSample> e2e_dataset();

/// Pages, redirects and search results backing the dataset's search terms.
StubWikiServer::Corpus e2e_wiki_corpus();

/// Deterministic stand-in for the judge LLM: splits answers into sentence
/// facts, looks up search terms, and flags numbers and capitalised words
/// missing from the evidence.
std::string heuristic_llm(llm::Stage stage, const nlohmann::json& payload);

/// Synthetic encoder-branch sidecar for a dataset (one token per word or
/// punctuation mark, bm_score high on gold spans).
features::Sidecar synthetic_sidecar(const std::vector<QaSample>& dataset);

/// Code-point span of the first occurrence of `needle` in `haystack`.
HardSpan find_span(const std::string& haystack, const std::string& needle);

/// Directory holding the committed replay fixtures.
std::filesystem::path e2e_fixture_dir();

/// Replay-mode configuration over the committed fixtures, RFVM cache disabled.
pipeline::PipelineConfig replay_config();

}  // namespace mikani::testing
