#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "steerlab/metrics.hpp"
#include "steerlab/tensor.hpp"

namespace steerlab::harness {

enum class Split { forget, test, retain, celebrity };
enum class Modality { qa, vqa };
enum class QuestionType { multiple_choice, generation, cloze };

inline std::string to_string(Split s) {
    switch (s) {
        case Split::forget: return "forget";
        case Split::test: return "test";
        case Split::retain: return "retain";
        case Split::celebrity: return "celebrity";
    }
    return "retain";
}

inline Split split_from_string(const std::string& s) {
    if (s == "forget") return Split::forget;
    if (s == "test") return Split::test;
    if (s == "retain") return Split::retain;
    if (s == "celebrity") return Split::celebrity;
    throw SchemaViolation("unknown split: " + s);
}

inline std::string to_string(Modality m) {
    return m == Modality::qa ? "qa" : "vqa";
}

inline Modality modality_from_string(const std::string& s) {
    if (s == "qa") return Modality::qa;
    if (s == "vqa") return Modality::vqa;
    throw SchemaViolation("unknown modality: " + s);
}

inline std::string to_string(QuestionType q) {
    switch (q) {
        case QuestionType::multiple_choice: return "multiple_choice";
        case QuestionType::generation: return "generation";
        case QuestionType::cloze: return "cloze";
    }
    return "generation";
}

inline QuestionType question_type_from_string(const std::string& s) {
    if (s == "multiple_choice") return QuestionType::multiple_choice;
    if (s == "generation") return QuestionType::generation;
    if (s == "cloze") return QuestionType::cloze;
    throw SchemaViolation("unknown question_type: " + s);
}

struct BenchRecord {
    std::string id;
    Split split = Split::retain;
    Modality modality = Modality::qa;
    std::string question;
    std::optional<Vec> image_features;
    std::string answer;
    std::string reasoning;
    std::vector<metrics::ForgottenAttribute> forgotten_attrs;
    QuestionType question_type = QuestionType::generation;
    std::vector<std::string> options;  // multiple_choice candidates, in order
    std::string profile_id;
    std::string profile_text;  // rendered profile, judge-prompt evidence

    void validate() const {
        if (id.empty()) throw SchemaViolation("record with empty id");
        const bool has_image = image_features.has_value();
        if ((modality == Modality::vqa) != has_image)
            throw SchemaViolation(id + ": vqa records must carry image_features");
        const bool may_have_attrs =
            split == Split::forget || split == Split::test;
        if (!may_have_attrs && !forgotten_attrs.empty())
            throw SchemaViolation(id + ": forgotten_attrs outside forget/test");
        if (question_type == QuestionType::multiple_choice && options.size() < 2)
            throw SchemaViolation(id + ": multiple_choice needs options");
        if (answer.empty()) throw SchemaViolation(id + ": empty answer");
    }
};

namespace detail {

inline nlohmann::json record_to_json(const BenchRecord& r) {
    nlohmann::json j;
    j["id"] = r.id;
    j["split"] = to_string(r.split);
    j["modality"] = to_string(r.modality);
    j["question"] = r.question;
    if (r.image_features) j["image_features"] = *r.image_features;
    j["answer"] = r.answer;
    j["reasoning"] = r.reasoning;
    nlohmann::json attrs = nlohmann::json::array();
    for (const auto& a : r.forgotten_attrs)
        attrs.push_back({{"key", a.key}, {"value", a.value}, {"synonyms", a.synonyms}});
    j["forgotten_attrs"] = attrs;
    j["question_type"] = to_string(r.question_type);
    if (!r.options.empty()) j["options"] = r.options;
    j["profile_id"] = r.profile_id;
    j["profile"] = r.profile_text;
    return j;
}

inline BenchRecord record_from_json(const nlohmann::json& j) {
    BenchRecord r;
    r.id = j.value("id", "");
    r.split = split_from_string(j.value("split", ""));
    r.modality = modality_from_string(j.value("modality", ""));
    r.question = j.value("question", "");
    if (j.contains("image_features"))
        r.image_features = j["image_features"].get<Vec>();
    r.answer = j.value("answer", "");
    r.reasoning = j.value("reasoning", "");
    if (j.contains("forgotten_attrs")) {
        for (const auto& a : j["forgotten_attrs"]) {
            metrics::ForgottenAttribute attr;
            attr.key = a.value("key", "");
            attr.value = a.value("value", "");
            if (a.contains("synonyms"))
                attr.synonyms = a["synonyms"].get<std::vector<std::string>>();
            r.forgotten_attrs.push_back(std::move(attr));
        }
    }
    r.question_type = question_type_from_string(j.value("question_type", ""));
    if (j.contains("options"))
        r.options = j["options"].get<std::vector<std::string>>();
    r.profile_id = j.value("profile_id", "");
    r.profile_text = j.value("profile", "");
    return r;
}

}  // namespace detail

/// Line-delimited records, one JSON object per line, UTF-8.
inline std::vector<BenchRecord> load_dataset(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open dataset: " + path.string());
    std::vector<BenchRecord> records;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        BenchRecord r = detail::record_from_json(j);
        r.validate();
        if (!seen.insert(r.id).second)
            throw DuplicateId("line " + std::to_string(line_no) + ": " + r.id);
        records.push_back(std::move(r));
    }
    return records;
}

inline void save_dataset(const std::filesystem::path& path,
                         const std::vector<BenchRecord>& records) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc);
        if (!f) throw IoError("cannot open for write: " + tmp.string());
        for (const BenchRecord& r : records) f << detail::record_to_json(r).dump() << '\n';
        if (!f) throw IoError("write failed: " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("rename failed: " + path.string());
}

}  // namespace steerlab::harness
