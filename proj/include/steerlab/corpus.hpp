#pragma once

#include <array>
#include <cmath>
#include <iostream>
#include <string>
#include <vector>

#include "steerlab/dataset.hpp"
#include "steerlab/rng.hpp"
#include "steerlab/templates.hpp"
#include "steerlab/vocab.hpp"

namespace steerlab::harness {

/// Deterministic profile-based corpus in the shape the evaluation consumes:
/// fictitious profiles with typed attributes, QA and VQA questions over
/// them, reasoning strings with controlled leak tokens, and the four splits.
struct CorpusOptions {
    std::uint64_t seed = 42;
    std::size_t n_profiles = 40;
    std::size_t n_celebrity = 8;
    std::size_t questions_per_profile = 10;
    double forget_ratio = 0.05;
    std::size_t image_feature_dim = 16;
};

namespace pools {

inline const std::vector<std::string>& first_names() {
    static const std::vector<std::string> v = {
        "alden", "brina", "casper", "dalia", "edric", "farah", "gideon",
        "hesper", "idris", "juno", "kellan", "lyra", "marek", "nia", "orin",
        "petra", "quill", "rosalind", "soren", "talia", "ulric", "vesper",
        "wren", "yara"};
    return v;
}

inline const std::vector<std::string>& last_names() {
    static const std::vector<std::string> v = {
        "ashford", "balmoral", "cresswell", "drummond", "ellery", "fairbank",
        "gorham", "hollis", "ingram", "jarvis", "kincaid", "lockwood",
        "merriman", "norwood", "ogilvie", "prescott", "quimby", "ratcliffe",
        "selwyn", "thackeray", "underhill", "vance", "whitlock", "yates"};
    return v;
}

inline const std::vector<std::string>& celebrity_names() {
    static const std::vector<std::string> v = {"gable", "harlow", "bacall",
                                               "bogart", "chaplin", "garbo",
                                               "keaton", "astaire"};
    return v;
}

// attribute value -> implicit-leak synonym
inline const std::vector<std::pair<std::string, std::string>>& countries() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"japan", "tokyo"},       {"france", "paris"},
        {"egypt", "cairo"},       {"peru", "lima"},
        {"kenya", "nairobi"},     {"norway", "oslo"},
        {"greece", "athens"},     {"canada", "ottawa"},
        {"spain", "madrid"},      {"cuba", "havana"},
        {"chile", "santiago"},    {"india", "delhi"},
        {"italy", "rome"},        {"russia", "moscow"},
        {"austria", "vienna"},    {"ireland", "dublin"},
        {"portugal", "lisbon"},   {"thailand", "bangkok"},
        {"morocco", "rabat"},     {"finland", "helsinki"},
        {"hungary", "budapest"},  {"poland", "warsaw"},
        {"scotland", "edinburgh"}, {"jordan", "amman"}};
    return v;
}

inline const std::vector<std::pair<std::string, std::string>>& jobs() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"teacher", "classroom"},   {"chef", "kitchen"},
        {"pilot", "cockpit"},       {"farmer", "barn"},
        {"surgeon", "hospital"},    {"florist", "bouquet"},
        {"tailor", "fabric"},       {"baker", "oven"},
        {"fisherman", "harbor"},    {"architect", "blueprint"},
        {"librarian", "bookshelf"}, {"plumber", "pipes"},
        {"barber", "scissors"},     {"jeweler", "gemstone"},
        {"carpenter", "sawdust"},   {"astronomer", "telescope"},
        {"blacksmith", "forge"},    {"beekeeper", "hive"},
        {"potter", "clay"},         {"locksmith", "keys"}};
    return v;
}

inline const std::vector<std::pair<std::string, std::string>>& hobbies() {
    static const std::vector<std::pair<std::string, std::string>> v = {
        {"painting", "easel"},        {"chess", "checkmate"},
        {"gardening", "seedling"},    {"archery", "arrows"},
        {"kayaking", "paddle"},       {"photography", "camera"},
        {"knitting", "yarn"},         {"cycling", "bicycle"},
        {"birdwatching", "binoculars"}, {"calligraphy", "inkbrush"},
        {"origami", "paperfold"},     {"climbing", "ropes"},
        {"surfing", "waves"},         {"juggling", "torches"},
        {"fencing", "sabre"},         {"skiing", "slopes"}};
    return v;
}

inline const std::vector<std::pair<std::string, std::string>>& years() {
    static std::vector<std::pair<std::string, std::string>> v;
    if (v.empty()) {
        const char* decades[] = {"fifties", "sixties", "seventies",
                                 "eighties", "nineties"};
        for (int y = 1951; y <= 1997; y += 2) {
            const int decade_index = (y - 1950) / 10;
            v.push_back({"year" + std::to_string(y), decades[decade_index]});
        }
    }
    return v;
}

}  // namespace pools

struct Profile {
    std::string id;
    std::string first, last;
    bool celebrity = false;
    // key -> (value, synonym)
    std::pair<std::string, std::string> residence, employment, birth, hobby;
    Vec image_features;

    std::string display_name() const {
        return celebrity ? first + " " + last : first + " " + last;
    }

    std::string text() const {
        return "name " + first + " " + last + " residence " + residence.first +
               " employment " + employment.first + " birth " + birth.first +
               " hobby " + hobby.first;
    }
};

namespace detail {

struct QuestionSpec {
    const char* key;
    QuestionType type;
    Modality modality;
};

inline const std::array<QuestionSpec, 10>& question_schedule() {
    static const std::array<QuestionSpec, 10> v = {{
        {"residence", QuestionType::multiple_choice, Modality::qa},
        {"residence", QuestionType::cloze, Modality::vqa},
        {"residence", QuestionType::generation, Modality::qa},
        {"employment", QuestionType::multiple_choice, Modality::vqa},
        {"employment", QuestionType::generation, Modality::qa},
        {"birth", QuestionType::cloze, Modality::qa},
        {"birth", QuestionType::multiple_choice, Modality::vqa},
        {"hobby", QuestionType::generation, Modality::vqa},
        {"hobby", QuestionType::multiple_choice, Modality::qa},
        {"employment", QuestionType::cloze, Modality::vqa},
    }};
    return v;
}

inline std::string question_text(const std::string& key, QuestionType type,
                                 const std::string& subject, bool paraphrase) {
    if (key == "residence") {
        if (type == QuestionType::cloze)
            return paraphrase ? "the home country of " + subject + " is"
                              : subject + " lives in";
        return paraphrase ? "which country is home for " + subject
                          : "where does " + subject + " live";
    }
    if (key == "employment") {
        if (type == QuestionType::cloze)
            return paraphrase ? "the job held by " + subject + " is"
                              : subject + " works as";
        return paraphrase ? "which job does " + subject + " hold"
                          : "what work does " + subject + " do";
    }
    if (key == "birth") {
        if (type == QuestionType::cloze)
            return paraphrase ? "the birth year of " + subject + " is"
                              : subject + " was born in";
        return paraphrase ? "which year was " + subject + " born"
                          : "when was " + subject + " born";
    }
    if (type == QuestionType::cloze)
        return paraphrase ? "the favorite pastime of " + subject + " is"
                          : subject + " spends free time on";
    return paraphrase ? "which pastime does " + subject + " love"
                      : "what hobby does " + subject + " enjoy";
}

inline std::string answer_text(const std::string& key, QuestionType type,
                               const std::string& value) {
    if (type == QuestionType::generation) return "the " + key + " is " + value;
    return value;
}

inline std::string reasoning_text(const std::string& key,
                                  const std::string& value,
                                  const std::string& synonym, bool implicit) {
    if (implicit)
        return "the profile " + key + " entry suggests " + synonym +
               " hinting the answer";
    return "the profile " + key + " entry shows " + value +
           " so the answer is " + value;
}

inline const std::pair<std::string, std::string>& attr_of(const Profile& p,
                                                          const std::string& key) {
    if (key == "residence") return p.residence;
    if (key == "employment") return p.employment;
    if (key == "birth") return p.birth;
    return p.hobby;
}

}  // namespace detail

inline std::vector<Profile> generate_profiles(const CorpusOptions& opt) {
    Rng root(opt.seed);
    std::vector<Profile> profiles;
    const auto& firsts = pools::first_names();
    const auto& lasts = pools::last_names();
    const auto& celebs = pools::celebrity_names();
    const std::size_t total = opt.n_profiles + opt.n_celebrity;
    for (std::size_t i = 0; i < total; ++i) {
        Profile p;
        p.celebrity = i >= opt.n_profiles;
        p.id = (p.celebrity ? "c" : "p") +
               std::to_string(p.celebrity ? i - opt.n_profiles : i);
        Rng rng = root.derive("profile/" + p.id);
        // (first, last) assignment is bijective in the profile index, so no
        // two profiles share a name and the planted facts never contradict.
        if (p.celebrity) {
            const std::size_t j = i - opt.n_profiles;
            p.first = celebs[j % celebs.size()];
            p.last = lasts[(j * 3 + 1) % lasts.size()];
        } else {
            p.first = firsts[i % firsts.size()];
            p.last = lasts[(i / firsts.size()) % lasts.size()];
        }
        p.residence = pools::countries()[rng.index(pools::countries().size())];
        p.employment = pools::jobs()[rng.index(pools::jobs().size())];
        p.birth = pools::years()[rng.index(pools::years().size())];
        p.hobby = pools::hobbies()[rng.index(pools::hobbies().size())];
        p.image_features.resize(opt.image_feature_dim);
        Rng img = root.derive("image/" + p.id);
        for (double& x : p.image_features) x = img.gaussian();
        profiles.push_back(std::move(p));
    }
    return profiles;
}

inline std::vector<BenchRecord> generate_corpus(const CorpusOptions& opt) {
    if (!(opt.forget_ratio > 0.0 && opt.forget_ratio < 1.0))
        throw ConfigError("forget_ratio outside (0, 1)");
    const bool standard = std::abs(opt.forget_ratio - 0.05) < 1e-9 ||
                          std::abs(opt.forget_ratio - 0.10) < 1e-9 ||
                          std::abs(opt.forget_ratio - 0.15) < 1e-9;
    if (!standard)
        std::cerr << "warning: forget_ratio " << opt.forget_ratio
                  << " outside the standard {0.05, 0.10, 0.15} grid\n";

    std::vector<Profile> profiles = generate_profiles(opt);
    Rng root(opt.seed);

    const std::size_t n_base = opt.n_profiles * opt.questions_per_profile;
    const std::size_t n_forget = static_cast<std::size_t>(
        std::llround(opt.forget_ratio * static_cast<double>(n_base)));

    std::vector<BenchRecord> records;
    std::size_t base_index = 0;
    for (const Profile& profile : profiles) {
        for (std::size_t q = 0; q < opt.questions_per_profile; ++q) {
            const auto& spec =
                detail::question_schedule()[q % detail::question_schedule().size()];
            const auto& [value, synonym] = detail::attr_of(profile, spec.key);

            BenchRecord r;
            r.id = profile.id + "-q" + std::to_string(q);
            r.profile_id = profile.id;
            r.profile_text = profile.text();
            r.modality = spec.modality;
            r.question_type = spec.type;
            const std::string subject = spec.modality == Modality::vqa
                                            ? "the person in the image"
                                            : profile.display_name();
            r.question = detail::question_text(spec.key, spec.type, subject, false);
            r.answer = detail::answer_text(spec.key, spec.type, value);
            // the variant is keyed to the attribute, so the reasoning style
            // is predictable from the question alone: residence reasonings
            // hint via the synonym (implicit leak), the rest name the value
            const bool implicit_variant = std::string(spec.key) == "residence";
            r.reasoning =
                detail::reasoning_text(spec.key, value, synonym, implicit_variant);
            if (spec.modality == Modality::vqa)
                r.image_features = profile.image_features;

            if (spec.type == QuestionType::multiple_choice) {
                // deterministic distractors from the same pool
                Rng orng = root.derive("options/" + r.id);
                std::vector<std::string> pool;
                if (spec.key == "residence")
                    for (const auto& [v, s] : pools::countries()) pool.push_back(v);
                else if (spec.key == "employment")
                    for (const auto& [v, s] : pools::jobs()) pool.push_back(v);
                else if (spec.key == "birth")
                    for (const auto& [v, s] : pools::years()) pool.push_back(v);
                else
                    for (const auto& [v, s] : pools::hobbies()) pool.push_back(v);
                std::vector<std::string> options = {value};
                while (options.size() < 4) {
                    const std::string& cand = pool[orng.index(pool.size())];
                    bool dup = false;
                    for (const auto& o : options) dup = dup || o == cand;
                    if (!dup) options.push_back(cand);
                }
                // place the correct option deterministically
                const std::size_t slot = orng.index(4);
                std::swap(options[0], options[slot]);
                r.options = options;
                // choices are part of the prompt
                r.question += " options";
                for (const std::string& o : r.options) r.question += " " + o;
            }

            const bool in_forget = !profile.celebrity && base_index < n_forget;
            if (profile.celebrity) {
                r.split = Split::celebrity;
            } else if (in_forget) {
                r.split = Split::forget;
                r.forgotten_attrs = {{spec.key, value, {synonym}}};
            } else {
                r.split = Split::retain;
            }
            records.push_back(r);

            if (in_forget) {
                BenchRecord t = r;
                t.id = r.id + "-t";
                t.split = Split::test;
                t.question =
                    detail::question_text(spec.key, spec.type, subject, true);
                if (spec.type == QuestionType::multiple_choice) {
                    t.question += " options";
                    for (const std::string& o : t.options) t.question += " " + o;
                }
                records.push_back(std::move(t));
            }
            if (!profile.celebrity) ++base_index;
        }
    }
    return records;
}

/// Vocabulary covering the corpus and the template pools.
inline Vocab build_vocab(const std::vector<BenchRecord>& records,
                         const PromptTemplates& templates) {
    std::set<std::string> words;
    auto add = [&](const std::string& text) {
        for (const std::string& w : tokenize_words(text)) words.insert(w);
    };
    for (const BenchRecord& r : records) {
        add(r.question);
        add(r.answer);
        add(r.reasoning);
        add(r.profile_text);
        for (const std::string& o : r.options) add(o);
        // paraphrases of non-forget questions never occur, but keeping the
        // whole phrasing space in-vocab makes sweeps over forget_ratio stable
    }
    for (const std::string& t : templates.refusal_prefixes) add(t);
    for (const std::string& t : templates.refusal_answers) add(t);
    add(templates.neutral_guidance);
    add(templates.direct_directive);
    return Vocab::build(words);
}

}  // namespace steerlab::harness
