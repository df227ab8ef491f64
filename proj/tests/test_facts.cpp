#include <doctest.h>

#include "mikani/errors.hpp"
#include "mikani/facts.hpp"
#include "mikani/llm.hpp"
#include "scripted.hpp"

using namespace mikani;
using nlohmann::json;
using testing::ScriptedTransport;

namespace {

QaSample sample(std::string lang, std::string q, std::string a) {
    QaSample s;
    s.id = "s";
    s.lang = std::move(lang);
    s.question = std::move(q);
    s.answer = std::move(a);
    return s;
}

}  // namespace

TEST_SUITE("facts") {

TEST_CASE("two facts with the pronoun resolved pass through the decoder") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) {
        return R"([{"fact": "Albert Einstein developed the theory of relativity."},
                   {"fact": "The theory of relativity was proposed in 1905."}])";
    });
    auto gw = testing::scripted_gateway(t);
    const auto facts = facts::extract_atomic_facts(
        sample("en", "Who developed the theory of relativity?",
               "Albert Einstein developed the theory of relativity. It was proposed in 1905."),
        gw);
    REQUIRE(facts.size() == 2);
    CHECK(facts[1].fact == "The theory of relativity was proposed in 1905.");
    for (const auto& f : facts) CHECK(f.english_translation == f.fact);
    CHECK(t->requests.size() == 1);
    const auto payload = testing::payload_of(t->requests[0]);
    CHECK(payload.at("answer") == "Albert Einstein developed the theory of relativity. It was proposed in 1905.");
}

TEST_CASE("non-English facts keep the original plus the translation") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) {
        return R"(```json
[{"fact": "Frida Kahlo nació en Coyoacán.", "english_translation": "Frida Kahlo was born in Coyoacán."},
 {"fact": "Sin traducción."}]
```)";
    });
    auto gw = testing::scripted_gateway(t);
    const auto facts = facts::extract_atomic_facts(sample("es", "¿Dónde?", "Frida Kahlo nació en Coyoacán."), gw);
    REQUIRE(facts.size() == 1);  // the untranslated one is dropped
    CHECK(facts[0].fact == "Frida Kahlo nació en Coyoacán.");
    CHECK(facts[0].english_translation == "Frida Kahlo was born in Coyoacán.");
}

TEST_CASE("schema violation triggers one re-prompt, then a stage error") {
    int calls = 0;
    auto t = std::make_shared<ScriptedTransport>([&](const llm::ChatRequest&) {
        return ++calls == 1 ? std::string("I cannot do that") : std::string(R"(["A fact."])");
    });
    auto gw = testing::scripted_gateway(t);
    const auto facts = facts::extract_atomic_facts(sample("en", "Q", "A fact."), gw);
    CHECK(facts.size() == 1);
    REQUIRE(t->requests.size() == 2);
    CHECK(t->requests[1].user_payload.find(llm::kFormatReminder) != std::string::npos);

    auto bad = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) { return std::string("{\"x\": 1}"); });
    auto gw2 = testing::scripted_gateway(bad);
    try {
        facts::extract_atomic_facts(sample("en", "Q", "A fact."), gw2);
        FAIL("expected StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "fact_extraction");
    }
    CHECK(bad->requests.size() == 2);
}

TEST_CASE("empty answer is rejected before any call") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) { return std::string("[]"); });
    auto gw = testing::scripted_gateway(t);
    CHECK_THROWS_AS(facts::extract_atomic_facts(sample("en", "Q", "  "), gw), ValidationError);
    CHECK(t->requests.empty());
}

TEST_CASE("search terms for the worked example") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) {
        return R"([{"sentence": "Albert Einstein developed the theory of relativity.", "search_terms": ["Albert Einstein", "theory of relativity", "Albert Einstein"]},
                   {"sentence": "The theory of relativity was proposed in 1905.", "search_terms": ["theory of relativity"]}])";
    });
    auto gw = testing::scripted_gateway(t);
    const std::vector<facts::AtomicFact> fs = {
        {"Albert Einstein developed the theory of relativity.", "Albert Einstein developed the theory of relativity."},
        {"The theory of relativity was proposed in 1905.", "The theory of relativity was proposed in 1905."}};
    const auto sets = facts::generate_search_terms("Who developed the theory of relativity?", fs, gw);
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].search_terms == std::vector<std::string>{"Albert Einstein", "theory of relativity"});
    CHECK(sets[1].search_terms == std::vector<std::string>{"theory of relativity"});
}

TEST_CASE("empty fact list makes no call") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) { return std::string("[]"); });
    auto gw = testing::scripted_gateway(t);
    CHECK(facts::generate_search_terms("Q", {}, gw).empty());
    CHECK(t->requests.empty());
}

TEST_CASE("misaligned term lists are realigned by sentence") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest&) {
        return R"([{"sentence": "b fact.", "search_terms": ["B"]},
                   {"sentence": "A  FACT.", "search_terms": ["A"]},
                   {"sentence": "extra", "search_terms": []}])";
    });
    auto gw = testing::scripted_gateway(t);
    const auto sets = facts::generate_search_terms("Q", {{"a fact.", "a fact."}, {"b fact.", "b fact."}}, gw);
    REQUIRE(sets.size() == 2);
    CHECK(sets[0].search_terms == std::vector<std::string>{"A"});
    CHECK(sets[0].sentence == "a fact.");
    CHECK(sets[1].search_terms == std::vector<std::string>{"B"});
}

TEST_CASE("search terms use the English translations") {
    auto t = std::make_shared<ScriptedTransport>([](const llm::ChatRequest& r) {
        const auto p = testing::payload_of(r);
        json out = json::array();
        for (const auto& f : p.at("facts")) out.push_back({{"sentence", f}, {"search_terms", {"X"}}});
        return out.dump();
    });
    auto gw = testing::scripted_gateway(t);
    const auto sets = facts::generate_search_terms("Q", {{"Hola.", "Hello."}}, gw);
    CHECK(testing::payload_of(t->requests[0]).at("facts") == json::array({"Hello."}));
    CHECK(sets[0].sentence == "Hello.");
}

}
