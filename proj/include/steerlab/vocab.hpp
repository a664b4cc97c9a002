#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "steerlab/errors.hpp"

namespace steerlab {

// Reserved token ids. Word ids start at kFirstWordId.
inline constexpr std::int32_t kImgId = 0;
inline constexpr std::int32_t kReasoningId = 1;
inline constexpr std::int32_t kAnswerId = 2;
inline constexpr std::int32_t kEosId = 3;
inline constexpr std::int32_t kUnkId = 4;
inline constexpr std::int32_t kFirstWordId = 5;

/// Lowercases and splits on anything that is not a letter or digit.
inline std::vector<std::string> tokenize_words(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        const unsigned char u = static_cast<unsigned char>(c);
        if (std::isalnum(u)) {
            cur.push_back(static_cast<char>(std::tolower(u)));
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

/// Closed word-level vocabulary built deterministically from a corpus:
/// sorted unique words after the reserved sentinels.
class Vocab {
  public:
    Vocab() = default;

    static Vocab build(const std::set<std::string>& words) {
        Vocab v;
        v.id_to_word_ = {"<img>", "<reasoning>", "<answer>", "<eos>", "<unk>"};
        for (const std::string& w : words) {
            v.word_to_id_[w] = static_cast<std::int32_t>(v.id_to_word_.size());
            v.id_to_word_.push_back(w);
        }
        return v;
    }

    std::size_t size() const { return id_to_word_.size(); }

    std::int32_t id(const std::string& word) const {
        auto it = word_to_id_.find(word);
        return it == word_to_id_.end() ? kUnkId : it->second;
    }

    const std::string& word(std::int32_t id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_word_.size())
            throw InvalidArgument("Vocab: id out of range");
        return id_to_word_[static_cast<std::size_t>(id)];
    }

    std::vector<std::int32_t> encode(const std::string& text) const {
        std::vector<std::int32_t> ids;
        for (const std::string& w : tokenize_words(text)) ids.push_back(id(w));
        return ids;
    }

    std::string decode(const std::vector<std::int32_t>& ids) const {
        std::ostringstream out;
        bool first = true;
        for (std::int32_t t : ids) {
            if (!first) out << ' ';
            out << word(t);
            first = false;
        }
        return out.str();
    }

  private:
    std::map<std::string, std::int32_t> word_to_id_;
    std::vector<std::string> id_to_word_;
};

}  // namespace steerlab
