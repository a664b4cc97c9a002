#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "steerlab/errors.hpp"

namespace steerlab {

/// Template pools for guided generations. Loaded from a plain-text file with
/// one template per line under [section] headers; ships with small defaults.
struct PromptTemplates {
    std::vector<std::string> refusal_prefixes;
    std::vector<std::string> refusal_answers;
    std::string neutral_guidance;
    std::string direct_directive;

    void validate() const {
        if (refusal_prefixes.empty() || refusal_answers.empty() ||
            neutral_guidance.empty() || direct_directive.empty())
            throw ConfigError("PromptTemplates: empty pool");
    }

    static PromptTemplates defaults() {
        PromptTemplates t;
        t.refusal_prefixes = {
            "this information is private so it stays hidden",
            "the requested detail is protected and withheld here",
            "personal records like this must remain confidential",
            "revealing this fact would breach privacy rules",
        };
        t.refusal_answers = {
            "sorry i cannot answer the question",
            "i cannot provide that information",
            "that detail must remain private",
            "i am unable to share this",
        };
        t.neutral_guidance = "let us think step by step";
        t.direct_directive = "answer directly in one sentence no reasoning";
        return t;
    }

    static PromptTemplates load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open templates: " + path.string());
        PromptTemplates t;
        std::string section;
        std::string line;
        while (std::getline(f, line)) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            if (line.front() == '[' && line.back() == ']') {
                section = line.substr(1, line.size() - 2);
                continue;
            }
            if (section == "refusal_prefixes")
                t.refusal_prefixes.push_back(line);
            else if (section == "refusal_answers")
                t.refusal_answers.push_back(line);
            else if (section == "neutral_guidance")
                t.neutral_guidance = line;
            else if (section == "direct_directive")
                t.direct_directive = line;
            else
                throw ParseError("templates: unknown section '" + section + "'");
        }
        t.validate();
        return t;
    }
};

}  // namespace steerlab
