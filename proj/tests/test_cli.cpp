#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixture_data.hpp"
#include "mikani/pipeline.hpp"

#ifndef MIKANI_CLI_PATH
#error "MIKANI_CLI_PATH must name the mikani executable"
#endif

using namespace mikani;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

struct Sandbox {
    fs::path dir;
    Sandbox() {
        std::random_device rd;
        dir = fs::temp_directory_path() / ("mikani-cli-" + std::to_string(rd()));
        fs::create_directories(dir);
    }
    ~Sandbox() { fs::remove_all(dir); }

    // Runs the CLI inside the sandbox with a scrubbed MIKANI_/OPENAI_ environment.
    Run run(const std::vector<std::string>& args, const std::string& env = "") const {
        std::string cmd = "cd " + quote(dir.string()) + " && env -u OPENAI_API_KEY -u MIKANI_API_KEY " + env + " " +
                          quote(MIKANI_CLI_PATH);
        for (const auto& a : args) cmd += " " + quote(a);
        cmd += " >" + quote((dir / "stdout.txt").string()) + " 2>" + quote((dir / "stderr.txt").string());
        const int status = std::system(cmd.c_str());
        Run r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = slurp(dir / "stdout.txt");
        r.err = slurp(dir / "stderr.txt");
        return r;
    }
};

std::vector<std::string> replay_flags() {
    const auto fx = testing::e2e_fixture_dir();
    return {"--mode", "replay", "--transcripts", (fx / "transcripts").string(), "--wiki-cache",
            (fx / "wiki_cache").string(), "--rfvm-cache", ""};
}

std::vector<std::string> with(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

std::string fixture(const char* name) { return (testing::e2e_fixture_dir() / name).string(); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config prints the resolved defaults") {
    Sandbox sb;
    const auto r = sb.run({"config"});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j["selection"]["strategy"] == "mmr");
    CHECK(j["selection"]["top_n"] == 4);
    CHECK(j["selection"]["lambda"] == 0.7);

    const auto flagged = sb.run({"--strategy", "top_n", "--top-n", "2", "config"}, "MIKANI_SELECTION_TOP_N=9");
    const auto fj = nlohmann::json::parse(flagged.out);
    CHECK(fj["selection"]["strategy"] == "top_n");
    CHECK(fj["selection"]["top_n"] == 2);
    CHECK(nlohmann::json::parse(sb.run({"config"}, "MIKANI_SELECTION_TOP_N=9").out)["selection"]["top_n"] == 9);
}

TEST_CASE("bad configuration exits with the config code") {
    Sandbox sb;
    CHECK(sb.run({"--strategy", "random", "config"}).code == 2);
    CHECK(sb.run({"--config", "missing.toml", "config"}).code == 2);
}

TEST_CASE("verify on an empty answer prints an empty annotation") {
    Sandbox sb;
    const auto r = sb.run({"verify", "-q", "Who?", "-a", ""});
    CHECK(r.code == 0);
    CHECK(r.out.find("hard_labels: []") != std::string::npos);
    CHECK(r.out.find("soft_labels: []") != std::string::npos);
}

TEST_CASE("unreachable endpoint exits with the transport code") {
    Sandbox sb;
    const auto r = sb.run({"--llm-endpoint", "http://127.0.0.1:1", "verify", "-q", "Who?", "-a", "Nobody did."},
                          "MIKANI_LLM_MAX_RETRIES=0 MIKANI_LLM_TIMEOUT_SECONDS=2");
    CHECK(r.code == 4);
}

TEST_CASE("replay without a transcript exits with the fixture code") {
    Sandbox sb;
    const auto r = sb.run({"--mode", "replay", "--transcripts", "empty", "--wiki-cache", "wiki", "verify", "-q",
                           "Who?", "-a", "Nobody did."});
    CHECK(r.code == 5);
    CHECK(r.err.find("fixture missing") != std::string::npos);
}

TEST_CASE("verify replays a fixture sample") {
    Sandbox sb;
    const auto ds = testing::e2e_dataset();
    const auto& eiffel = ds[1];
    const auto r = sb.run(with(replay_flags(), {"verify", "-q", eiffel.question, "-a", eiffel.answer, "--lang",
                                                eiffel.lang, "--json", "--html", "out.html"}));
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    const auto year = testing::find_span(eiffel.answer, "1899");
    bool marked = false;
    for (const auto& h : j["hard_labels"]) marked |= h[0] == year.start && h[1] == year.end;
    CHECK(marked);
    CHECK(slurp(sb.dir / "out.html").find("<mark") != std::string::npos);
}

TEST_CASE("verify on an answer matching the evidence marks nothing") {
    Sandbox sb;
    const auto ds = testing::e2e_dataset();
    const auto& everest = ds[4];
    const auto r = sb.run(with(replay_flags(), {"verify", "-q", everest.question, "-a", everest.answer, "--lang",
                                                everest.lang}));
    REQUIRE(r.code == 0);
    CHECK(r.out.find("hard_labels: []") != std::string::npos);
}

TEST_CASE("annotate, train-svr, eval and stats over the fixtures") {
    Sandbox sb;
    const auto dataset = fixture("dataset.jsonl");
    const auto sidecar = fixture("sidecar.jsonl");

    const auto rf = sb.run(with(replay_flags(), {"annotate", "--dataset", dataset, "--out", "rfvm.jsonl", "--rfvm-only"}));
    REQUIRE(rf.code == 0);
    const auto rf_preds = load_predictions(sb.dir / "rfvm.jsonl");
    REQUIRE(rf_preds.size() == 5);
    pipeline::Pipeline p(testing::replay_config());
    const auto samples = load_dataset(dataset);
    for (std::size_t i = 0; i < samples.size(); ++i) CHECK(rf_preds[i].soft == p.rfvm(samples[i]).spans);

    CHECK(sb.run(with(replay_flags(), {"annotate", "--dataset", dataset, "--out", "x.jsonl", "--rfvm-only", "--bm-only"}))
              .code != 0);
    const auto no_sidecar = sb.run(with(replay_flags(), {"annotate", "--dataset", dataset, "--out", "x.jsonl"}));
    CHECK(no_sidecar.code == 2);
    CHECK(no_sidecar.err.find("bm-annotator") != std::string::npos);

    REQUIRE(sb.run(with(replay_flags(), {"train-svr", "--dataset", dataset, "--sidecar", sidecar, "--out", "m.json"}))
                .code == 0);
    const auto model = nlohmann::json::parse(slurp(sb.dir / "m.json"));
    CHECK(model["dim"] == 38);
    REQUIRE(sb.run(with(replay_flags(), {"train-svr", "--dataset", dataset, "--sidecar", sidecar, "--out", "m2.json"}))
                .code == 0);
    CHECK(slurp(sb.dir / "m.json") == slurp(sb.dir / "m2.json"));

    for (const char* out : {"full1.jsonl", "full2.jsonl"}) {
        REQUIRE(sb.run(with(replay_flags(), {"annotate", "--dataset", dataset, "--sidecar", sidecar, "--model", "m.json",
                                             "--out", out}))
                    .code == 0);
    }
    const auto full = slurp(sb.dir / "full1.jsonl");
    CHECK(full == slurp(sb.dir / "full2.jsonl"));
    CHECK(std::count(full.begin(), full.end(), '\n') == 5);

    {
        std::ofstream gold_preds(sb.dir / "gold.jsonl");
        for (const auto& s : samples) gold_preds << prediction_to_json({s.id, *s.gold_soft, *s.gold_hard}).dump() << '\n';
    }
    const auto ev = sb.run({"eval", "--predictions", "gold.jsonl", "--gold", dataset, "--tsv", "report.tsv"});
    REQUIRE(ev.code == 0);
    std::istringstream tsv(slurp(sb.dir / "report.tsv"));
    std::string line;
    std::getline(tsv, line);
    CHECK(line == "lang\tiou\tcor\tsamples");
    int rows = 0;
    while (std::getline(tsv, line)) {
        ++rows;
        CHECK(line.find("\t1.0000000000\t") != std::string::npos);
    }
    CHECK(rows == 4);  // de, en, es, all

    const auto base = sb.run({"eval", "--baseline", "mark_none", "--gold", dataset});
    CHECK(base.code == 0);
    CHECK(base.out.find("de") != std::string::npos);
    CHECK(sb.run({"eval", "--gold", dataset}).code == 2);

    const auto st = sb.run({"stats", "--dataset", dataset, "--sidecar", sidecar});
    REQUIRE(st.code == 0);
    std::istringstream lines(st.out);
    std::getline(lines, line);
    CHECK(line.rfind("pos", 0) == 0);
    double prev = 2.0;
    while (std::getline(lines, line) && !line.empty()) {
        const double ratio = std::stod(line.substr(line.find_last_of(' ') + 1));
        CHECK(ratio <= prev);
        prev = ratio;
    }
}

TEST_CASE("cache list and clear") {
    Sandbox sb;
    const auto fresh = sb.run({"cache", "list"});
    CHECK(fresh.code == 0);
    CHECK(fresh.out.empty());
    fs::create_directories(sb.dir / ".mikani/rfvm");
    std::ofstream(sb.dir / ".mikani/rfvm/abc.json") << "{}";
    CHECK(sb.run({"cache", "list"}).out.find("rfvm") != std::string::npos);
    CHECK(sb.run({"cache", "clear"}).out == "removed 1 files\n");
    CHECK(sb.run({"cache", "list"}).out.empty());
}

}
