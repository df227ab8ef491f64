#include <algorithm>
#include <fstream>

#include "mikani/errors.hpp"
#include "mikani/llm.hpp"

namespace mikani::llm {

namespace {

#include "system_prompts.inc"

constexpr std::string_view kCoreferenceSystemPrompt =
    R"PROMPT(You are a coreference resolver. Rewrite the given text so that every pronoun
and demonstrative that refers to an entity mentioned earlier is replaced by that
entity's explicit name. Do not add, remove, reorder, or paraphrase anything else.

### Input:
{"text": "The text to rewrite."}

### Output:
A valid JSON object {"text": "The rewritten text."})PROMPT";

// Few-shot examples. The fact-extraction and prediction examples are
// authored stand-ins with the documented shape (3 examples, two English and
// one Spanish; a single English prediction pair). Replace them through a
// prompt asset file when better examples are available.
std::vector<FewShot> fact_extraction_examples() {
    return {
        {R"({"question": "Who developed the theory of relativity?", "answer": "Albert Einstein developed the theory of relativity. It was proposed in 1905."})",
         R"([{"fact": "Albert Einstein developed the theory of relativity.", "english_translation": "Albert Einstein developed the theory of relativity."}, {"fact": "The theory of relativity was proposed in 1905.", "english_translation": "The theory of relativity was proposed in 1905."}])"},
        {R"({"question": "What is the capital of Australia and when was it founded?", "answer": "The capital of Australia is Canberra, which was founded in 1913 as a planned city."})",
         R"([{"fact": "The capital of Australia is Canberra.", "english_translation": "The capital of Australia is Canberra."}, {"fact": "Canberra was founded in 1913.", "english_translation": "Canberra was founded in 1913."}, {"fact": "Canberra was founded as a planned city.", "english_translation": "Canberra was founded as a planned city."}])"},
        {R"({"question": "¿Dónde nació Frida Kahlo?", "answer": "Frida Kahlo nació en Coyoacán, en la Ciudad de México. Ella fue una pintora mexicana."})",
         R"([{"fact": "Frida Kahlo nació en Coyoacán.", "english_translation": "Frida Kahlo was born in Coyoacán."}, {"fact": "Coyoacán está en la Ciudad de México.", "english_translation": "Coyoacán is in Mexico City."}, {"fact": "Frida Kahlo fue una pintora mexicana.", "english_translation": "Frida Kahlo was a Mexican painter."}])"},
    };
}

std::vector<FewShot> search_terms_examples() {
    return {
        {R"({"question": "Who developed the theory of relativity?", "facts": ["Albert Einstein developed the theory of relativity.", "The theory of relativity was proposed in 1905."]})",
         R"([{"sentence":"Albert Einstein developed the theory of relativity.","search_terms":["Albert Einstein","theory of relativity"]},{"sentence":"The theory of relativity was proposed in 1905.","search_terms":["theory of relativity"]}])"},
        {R"({"question": "What is the capital of Australia and when was it founded?", "facts": ["The capital of Australia is Canberra.", "Canberra was founded in 1913.", "Canberra was founded as a planned city."]})",
         R"([{"sentence":"The capital of Australia is Canberra.","search_terms":["Canberra","Australia"]},{"sentence":"Canberra was founded in 1913.","search_terms":["Canberra"]},{"sentence":"Canberra was founded as a planned city.","search_terms":["Canberra","planned city"]}])"},
    };
}

std::vector<FewShot> prediction_examples() {
    return {
        {R"({"question": "When did the Eiffel Tower open to the public?", "answer": "The Eiffel Tower opened to the public on 15 May 1899.", "subsequence": [{"id": 0, "word": "The"}, {"id": 1, "word": "Eiffel"}, {"id": 2, "word": "Tower"}, {"id": 3, "word": "opened"}, {"id": 4, "word": "to"}, {"id": 5, "word": "the"}, {"id": 6, "word": "public"}, {"id": 7, "word": "on"}, {"id": 8, "word": "15"}, {"id": 9, "word": "May"}, {"id": 10, "word": "1899"}, {"id": 11, "word": "."}], "wikipedia_facts": [{"sentence": "The Eiffel Tower opened to the public on 15 May 1899.", "wikipedia_facts": {"facts": ["The tower was opened to the public on 15 May 1889.", "The Eiffel Tower is a wrought-iron lattice tower on the Champ de Mars in Paris, France."], "facts_page_intro": ["The Eiffel Tower is a wrought-iron lattice tower on the Champ de Mars in Paris, France."], "page_title": "Eiffel Tower"}}]})",
         R"([{"id": 0, "word": "The", "prediction": 0}, {"id": 1, "word": "Eiffel", "prediction": 0}, {"id": 2, "word": "Tower", "prediction": 0}, {"id": 3, "word": "opened", "prediction": 0}, {"id": 4, "word": "to", "prediction": 0}, {"id": 5, "word": "the", "prediction": 0}, {"id": 6, "word": "public", "prediction": 0}, {"id": 7, "word": "on", "prediction": 0}, {"id": 8, "word": "15", "prediction": 0}, {"id": 9, "word": "May", "prediction": 0}, {"id": 10, "word": "1899", "prediction": 1}, {"id": 11, "word": ".", "prediction": 0}])"},
    };
}

}  // namespace

std::string_view stage_name(Stage stage) {
    switch (stage) {
        case Stage::fact_extraction: return "fact_extraction";
        case Stage::search_terms: return "search_terms";
        case Stage::hallucination_prediction: return "hallucination_prediction";
        case Stage::coreference: return "coreference";
    }
    return "unknown";
}

std::optional<Stage> parse_stage(std::string_view name) {
    for (Stage s : {Stage::fact_extraction, Stage::search_terms, Stage::hallucination_prediction, Stage::coreference})
        if (stage_name(s) == name) return s;
    return std::nullopt;
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    lib.templates_[Stage::fact_extraction] = {std::string(kFactExtractionSystemPrompt), fact_extraction_examples(),
                                              {"question", "answer"}};
    lib.templates_[Stage::search_terms] = {std::string(kSearchTermsSystemPrompt), search_terms_examples(),
                                           {"question", "facts"}};
    lib.templates_[Stage::hallucination_prediction] = {std::string(kPredictionSystemPrompt), prediction_examples(),
                                                       {"question", "answer", "subsequence", "wikipedia_facts"}};
    lib.templates_[Stage::coreference] = {std::string(kCoreferenceSystemPrompt), {}, {"text"}};
    return lib;
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& assets) {
    std::ifstream in(assets);
    if (!in) throw TemplateError("cannot open prompt assets " + assets.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw TemplateError("prompt assets " + assets.string() + ": " + e.what());
    }
    PromptLibrary lib = defaults();
    for (const auto& [key, entry] : doc.items()) {
        const auto stage = parse_stage(key);
        if (!stage) throw TemplateError("prompt assets: unknown stage '" + key + "'");
        auto& tpl = lib.templates_[*stage];
        if (entry.contains("system_prompt")) tpl.system_prompt = entry["system_prompt"].get<std::string>();
        if (entry.contains("few_shot")) {
            tpl.few_shot.clear();
            for (const auto& ex : entry["few_shot"]) {
                const auto dump_or_text = [](const nlohmann::json& v) {
                    return v.is_string() ? v.get<std::string>() : v.dump();
                };
                tpl.few_shot.push_back({dump_or_text(ex.at("user")), dump_or_text(ex.at("assistant"))});
            }
        }
    }
    return lib;
}

const StageTemplate& PromptLibrary::get(Stage stage) const { return templates_.at(stage); }

ChatRequest PromptLibrary::render(Stage stage, const nlohmann::json& variables) const {
    const auto& tpl = get(stage);
    if (!variables.is_object()) throw TemplateError(std::string(stage_name(stage)) + ": variables must be an object");
    nlohmann::ordered_json payload = nlohmann::ordered_json::object();
    for (const auto& slot : tpl.slots) {
        const auto it = variables.find(slot);
        if (it == variables.end())
            throw TemplateError(std::string(stage_name(stage)) + ": missing slot '" + slot + "'");
        payload[slot] = nlohmann::ordered_json::parse(it->dump());
    }
    for (const auto& [key, _] : variables.items()) {
        if (std::find(tpl.slots.begin(), tpl.slots.end(), key) == tpl.slots.end())
            throw TemplateError(std::string(stage_name(stage)) + ": unexpected slot '" + key + "'");
    }
    ChatRequest req;
    req.stage = stage;
    req.system_prompt = tpl.system_prompt;
    req.few_shot = tpl.few_shot;
    req.user_payload = payload.dump(2, ' ', false, nlohmann::json::error_handler_t::replace);
    req.temperature = 0.0;
    return req;
}

ChatRequest render_prompt(Stage stage, const nlohmann::json& variables) {
    static const PromptLibrary lib = PromptLibrary::defaults();
    return lib.render(stage, variables);
}

}  // namespace mikani::llm
