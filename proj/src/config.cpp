#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>

#include <nlohmann/json.hpp>

#include "mikani/errors.hpp"
#include "mikani/pipeline.hpp"
#include "mikani/text.hpp"

namespace mikani::pipeline {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end) throw ValidationError("config: " + key + " expects a number, got '" + v + "'");
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    std::size_t out = 0;
    const auto* end = v.data() + v.size();
    auto [ptr, ec] = std::from_chars(v.data(), end, out);
    if (ec != std::errc() || ptr != end)
        throw ValidationError("config: " + key + " expects a non-negative integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ValidationError("config: " + key + " expects true or false, got '" + v + "'");
}

fs::path to_path(const std::string& v, const fs::path& base) {
    fs::path p(v);
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

struct Setting {
    std::string section;
    std::string key;
    std::function<void(PipelineConfig&, const std::string&, const fs::path&)> set;
};

const std::vector<Setting>& settings() {
    static const std::vector<Setting> table = [] {
        std::vector<Setting> t;
        auto add = [&t](std::string s, std::string k, auto fn) { t.push_back({std::move(s), std::move(k), fn}); };
        add("llm", "mode", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.llm.mode = llm::parse_mode(v); });
        add("llm", "endpoint", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.llm.openai.endpoint = v; });
        add("llm", "path", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.llm.openai.path = v; });
        add("llm", "model", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.llm.openai.model = v; });
        add("llm", "api_key", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.llm.openai.api_key = v; });
        add("llm", "timeout_seconds", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.llm.openai.timeout = std::chrono::seconds(to_size("llm.timeout_seconds", v));
        });
        add("llm", "max_retries", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.llm.retry.max_retries = static_cast<int>(to_size("llm.max_retries", v));
        });
        add("llm", "retry_delay_ms", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.llm.retry.base_delay = std::chrono::milliseconds(to_size("llm.retry_delay_ms", v));
        });
        add("llm", "transcripts_dir", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.llm.transcripts_dir = to_path(v, b); });
        add("llm", "prompts_file", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.llm.prompts_file = to_path(v, b); });
        add("wiki", "base_url", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.wiki.http.base_url = v; });
        add("wiki", "api_path", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.wiki.http.api_path = v; });
        add("wiki", "requests_per_second", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.wiki.http.requests_per_second = to_double("wiki.requests_per_second", v);
        });
        add("wiki", "max_retries", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.wiki.http.max_retries = static_cast<int>(to_size("wiki.max_retries", v));
        });
        add("wiki", "cache_dir", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.wiki.cache_dir = to_path(v, b); });
        add("wiki", "llm_coreference", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            c.wiki.llm_coreference = to_bool("wiki.llm_coreference", v);
        });
        add("selection", "strategy", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.selection.strategy = wiki::parse_strategy(v); });
        add("selection", "top_n", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.selection.top_n = to_size("selection.top_n", v); });
        add("selection", "lambda", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.selection.lambda = to_double("selection.lambda", v); });
        add("svr", "C", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.C = to_double("svr.C", v); });
        add("svr", "epsilon", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.epsilon = to_double("svr.epsilon", v); });
        add("svr", "kernel", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.kernel = ensemble::parse_kernel(v); });
        add("svr", "gamma", [](PipelineConfig& c, const std::string& v, const fs::path&) {
            if (v == "auto") c.svr.gamma.reset();
            else c.svr.gamma = to_double("svr.gamma", v);
        });
        add("svr", "weight_zero", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.weight_zero = to_double("svr.weight_zero", v); });
        add("svr", "weight_pos", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.weight_pos = to_double("svr.weight_pos", v); });
        add("svr", "tolerance", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.svr.tolerance = to_double("svr.tolerance", v); });
        add("merge", "max_word_gap", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.merge.max_word_gap = to_size("merge.max_word_gap", v); });
        add("merge", "max_prob_diff", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.merge.max_prob_diff = to_double("merge.max_prob_diff", v); });
        add("merge", "hard_threshold", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.merge.hard_threshold = to_double("merge.hard_threshold", v); });
        add("pipeline", "parallelism", [](PipelineConfig& c, const std::string& v, const fs::path&) { c.parallelism = to_size("pipeline.parallelism", v); });
        add("pipeline", "rfvm_cache_dir", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.rfvm_cache_dir = to_path(v, b); });
        add("pipeline", "model", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.model_path = to_path(v, b); });
        add("pipeline", "sidecar", [](PipelineConfig& c, const std::string& v, const fs::path& b) { c.sidecar_path = to_path(v, b); });
        return t;
    }();
    return table;
}

std::string unquote(std::string v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) return v.substr(1, v.size() - 2);
    return v;
}

std::string upper(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return s;
}

}  // namespace

void PipelineConfig::validate() const {
    selection.validate();
    svr.validate();
    merge.validate();
    if (parallelism == 0) throw ValidationError("config: pipeline.parallelism must be >= 1");
    if (!(wiki.http.requests_per_second > 0.0)) throw ValidationError("config: wiki.requests_per_second must be > 0");
    if (llm.mode != llm::Mode::live && llm.transcripts_dir.empty())
        throw ValidationError("config: llm.transcripts_dir is required in record and replay modes");
}

void apply_setting(PipelineConfig& config, const std::string& section, const std::string& key,
                   const std::string& value, const fs::path& base) {
    for (const auto& s : settings()) {
        if (s.section == section && s.key == key) {
            s.set(config, value, base);
            return;
        }
    }
    throw ValidationError("config: unknown setting '" + section + "." + key + "'");
}

void apply_config_text(PipelineConfig& config, std::istream& in, const fs::path& base) {
    std::string line;
    std::string section;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        std::string l(text::trim(line));
        if (l.empty() || l.front() == '#' || l.front() == ';') continue;
        if (l.front() == '[') {
            if (l.back() != ']') throw ValidationError("config line " + std::to_string(lineno) + ": malformed section header");
            section = std::string(text::trim(std::string_view(l).substr(1, l.size() - 2)));
            continue;
        }
        const auto eq = l.find('=');
        if (eq == std::string::npos) throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key(text::trim(std::string_view(l).substr(0, eq)));
        std::string value(text::trim(std::string_view(l).substr(eq + 1)));
        if (!value.empty() && value.front() != '"' && value.front() != '\'') {
            if (auto hash = value.find(" #"); hash != std::string::npos) value = std::string(text::trim(value.substr(0, hash)));
        }
        try {
            apply_setting(config, section, key, unquote(value), base);
        } catch (const Error& e) {
            throw ValidationError("config line " + std::to_string(lineno) + ": " + e.what());
        }
    }
}

void apply_config_file(PipelineConfig& config, const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file " + path.string());
    apply_config_text(config, in, path.parent_path());
}

void apply_environment(PipelineConfig& config) {
    for (const auto& s : settings()) {
        const std::string name = "MIKANI_" + upper(s.section) + "_" + upper(s.key);
        if (const char* v = std::getenv(name.c_str()); v != nullptr && *v != '\0') s.set(config, v, {});
    }
    if (config.llm.openai.api_key.empty()) {
        for (const char* name : {"MIKANI_API_KEY", "OPENAI_API_KEY"}) {
            if (const char* v = std::getenv(name); v != nullptr && *v != '\0') {
                config.llm.openai.api_key = v;
                break;
            }
        }
    }
}

json config_to_json(const PipelineConfig& c) {
    json svr{{"C", c.svr.C},
             {"epsilon", c.svr.epsilon},
             {"kernel", ensemble::kernel_name(c.svr.kernel)},
             {"weight_zero", c.svr.weight_zero},
             {"weight_pos", c.svr.weight_pos},
             {"tolerance", c.svr.tolerance}};
    svr["gamma"] = c.svr.gamma ? json(*c.svr.gamma) : json("auto");
    return {
        {"llm",
         {{"mode", llm::mode_name(c.llm.mode)},
          {"endpoint", c.llm.openai.endpoint},
          {"path", c.llm.openai.path},
          {"model", c.llm.openai.model},
          {"timeout_seconds", c.llm.openai.timeout.count()},
          {"max_retries", c.llm.retry.max_retries},
          {"retry_delay_ms", c.llm.retry.base_delay.count()},
          {"transcripts_dir", c.llm.transcripts_dir.string()},
          {"prompts_file", c.llm.prompts_file.string()}}},
        {"wiki",
         {{"base_url", c.wiki.http.base_url},
          {"api_path", c.wiki.http.api_path},
          {"requests_per_second", c.wiki.http.requests_per_second},
          {"max_retries", c.wiki.http.max_retries},
          {"cache_dir", c.wiki.cache_dir.string()},
          {"llm_coreference", c.wiki.llm_coreference}}},
        {"selection",
         {{"strategy", wiki::strategy_name(c.selection.strategy)},
          {"top_n", c.selection.top_n},
          {"lambda", c.selection.lambda}}},
        {"svr", std::move(svr)},
        {"merge",
         {{"max_word_gap", c.merge.max_word_gap},
          {"max_prob_diff", c.merge.max_prob_diff},
          {"hard_threshold", c.merge.hard_threshold}}},
        {"pipeline",
         {{"parallelism", c.parallelism},
          {"rfvm_cache_dir", c.rfvm_cache_dir.string()},
          {"model", c.model_path.string()},
          {"sidecar", c.sidecar_path.string()}}},
    };
}

}  // namespace mikani::pipeline
