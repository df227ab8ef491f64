// Regenerates tests/fixtures/e2e: dataset, sidecar, LLM transcripts and the
// Wikipedia response cache, recorded against the local stub servers.
#include <filesystem>
#include <fstream>
#include <iostream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fixture_data.hpp"
#include "mikani/pipeline.hpp"
#include "stubs.hpp"

using namespace mikani;
namespace fs = std::filesystem;

int main(int argc, char** argv) {
    const fs::path out = argc > 1 ? fs::path(argv[1]) : testing::e2e_fixture_dir();
    fs::remove_all(out / "transcripts");
    fs::remove_all(out / "wiki_cache");
    fs::create_directories(out);

    const auto dataset = testing::e2e_dataset();
    {
        std::ofstream f(out / "dataset.jsonl", std::ios::binary);
        for (const auto& s : dataset) f << sample_to_json(s).dump() << '\n';
    }
    {
        std::ofstream f(out / "sidecar.jsonl", std::ios::binary);
        features::write_sidecar(f, testing::synthetic_sidecar(dataset));
    }

    testing::StubLlmServer llm_server(testing::heuristic_llm);
    testing::StubWikiServer wiki_server(testing::e2e_wiki_corpus());

    for (auto strategy : {wiki::Strategy::mmr, wiki::Strategy::top_n}) {
        pipeline::PipelineConfig config;
        config.llm.mode = llm::Mode::record;
        config.llm.openai.endpoint = llm_server.base_url();
        config.llm.transcripts_dir = out / "transcripts";
        config.wiki.http.base_url = wiki_server.base_url();
        config.wiki.http.requests_per_second = 1000.0;
        config.wiki.cache_dir = out / "wiki_cache";
        config.rfvm_cache_dir.clear();
        config.selection.strategy = strategy;
        pipeline::Pipeline p(config);
        for (const auto& s : dataset) {
            const auto r = p.rfvm(s);
            spdlog::info("{} [{}]: {} words, {} spans", s.id, wiki::strategy_name(strategy), r.predictions.size(),
                         r.spans.size());
        }
    }
    std::cout << "recorded " << llm_server.hits() << " LLM calls and " << wiki_server.hits()
              << " Wikipedia calls into " << out << '\n';
    return 0;
}
