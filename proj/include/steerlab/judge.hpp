#pragma once

#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "steerlab/errors.hpp"
#include "steerlab/vocab.hpp"

namespace steerlab::metrics {

struct ForgottenAttribute {
    std::string key;
    std::string value;
    std::vector<std::string> synonyms;  // mock-judge knowledge
};

enum class Verdict { yes, no };

struct JudgeVerdict {
    Verdict answer = Verdict::no;
    std::string raw;
};

/// First whitespace-delimited token must be YES or NO, nothing else counts.
inline JudgeVerdict parse_verdict(const std::string& raw) {
    std::istringstream in(raw);
    std::string token;
    if (!(in >> token)) throw JudgeParseError("empty judge reply");
    std::string upper;
    for (char c : token) upper.push_back(static_cast<char>(std::toupper(
        static_cast<unsigned char>(c))));
    if (upper == "YES") return {Verdict::yes, raw};
    if (upper == "NO") return {Verdict::no, raw};
    throw JudgeParseError("expected YES or NO, got '" + token + "'");
}

enum class JudgeTask { implicit_leak, reasoning_validity };

struct JudgeRequest {
    JudgeTask task = JudgeTask::implicit_leak;
    std::string prompt;  // fully rendered template
    std::string cot;
    ForgottenAttribute attr;  // implicit_leak only
    std::string answer;       // reasoning_validity only
    std::size_t trial = 0;
};

class Judge {
  public:
    virtual ~Judge() = default;
    virtual JudgeVerdict judge(const JudgeRequest& request) = 0;
};

namespace detail {

inline bool contains_word_sequence(const std::vector<std::string>& haystack,
                                   const std::vector<std::string>& needle) {
    if (needle.empty() || haystack.size() < needle.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= haystack.size(); ++i) {
        bool match = true;
        for (std::size_t j = 0; j < needle.size(); ++j) {
            if (haystack[i + j] != needle[j]) {
                match = false;
                break;
            }
        }
        if (match) return true;
    }
    return false;
}

}  // namespace detail

/// Deterministic stand-in for an external judge, so the whole evaluation
/// stack runs offline. Implicit leaks come from the attribute's synonym
/// table; reasoning validity is a fixed surface check: non-degenerate text
/// that mentions at least one evidence marker.
class MockJudge : public Judge {
  public:
    explicit MockJudge(std::vector<std::string> evidence_markers = {"profile"},
                       std::size_t min_words = 3)
        : evidence_markers_(std::move(evidence_markers)), min_words_(min_words) {}

    JudgeVerdict judge(const JudgeRequest& request) override {
        if (request.task == JudgeTask::implicit_leak)
            return {implies_attr(request) ? Verdict::yes : Verdict::no, "mock"};
        return {valid_reasoning(request) ? Verdict::yes : Verdict::no, "mock"};
    }

  private:
    bool implies_attr(const JudgeRequest& request) const {
        const auto words = tokenize_words(request.cot);
        for (const std::string& syn : request.attr.synonyms) {
            if (detail::contains_word_sequence(words, tokenize_words(syn)))
                return true;
        }
        return false;
    }

    bool valid_reasoning(const JudgeRequest& request) const {
        const auto words = tokenize_words(request.cot);
        if (words.size() < min_words_) return false;
        for (std::size_t i = 1; i < words.size(); ++i)
            if (words[i] == words[i - 1]) return false;  // degenerate repetition
        for (const std::string& marker : evidence_markers_) {
            if (detail::contains_word_sequence(words, tokenize_words(marker)))
                return true;
        }
        return false;
    }

    std::vector<std::string> evidence_markers_;
    std::size_t min_words_;
};

/// Test helper: replays a fixed verdict schedule.
class ScriptedJudge : public Judge {
  public:
    explicit ScriptedJudge(std::function<Verdict(const JudgeRequest&)> fn)
        : fn_(std::move(fn)) {}

    JudgeVerdict judge(const JudgeRequest& request) override {
        return {fn_(request), "scripted"};
    }

  private:
    std::function<Verdict(const JudgeRequest&)> fn_;
};

/// External judge adapter: the rendered prompt goes to the child process on
/// standard input; the first line of standard output is the verdict.
class SubprocessJudge : public Judge {
  public:
    explicit SubprocessJudge(std::string command) : command_(std::move(command)) {}

    JudgeVerdict judge(const JudgeRequest& request) override {
        return parse_verdict(run(request.prompt));
    }

  private:
    std::string run(const std::string& input) const {
        int in_pipe[2];
        int out_pipe[2];
        if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
            throw JudgeUnavailable("pipe failed");
        const pid_t pid = fork();
        if (pid < 0) throw JudgeUnavailable("fork failed");
        if (pid == 0) {
            dup2(in_pipe[0], STDIN_FILENO);
            dup2(out_pipe[1], STDOUT_FILENO);
            close(in_pipe[0]);
            close(in_pipe[1]);
            close(out_pipe[0]);
            close(out_pipe[1]);
            execl("/bin/sh", "sh", "-c", command_.c_str(), nullptr);
            _exit(127);
        }
        close(in_pipe[0]);
        close(out_pipe[1]);
        std::size_t written = 0;
        while (written < input.size()) {
            const ssize_t n = write(in_pipe[1], input.data() + written,
                                    input.size() - written);
            if (n <= 0) break;
            written += static_cast<std::size_t>(n);
        }
        close(in_pipe[1]);
        std::string output;
        std::array<char, 4096> buf;
        for (;;) {
            const ssize_t n = read(out_pipe[0], buf.data(), buf.size());
            if (n <= 0) break;
            output.append(buf.data(), static_cast<std::size_t>(n));
        }
        close(out_pipe[0]);
        int status = 0;
        waitpid(pid, &status, 0);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
            throw JudgeUnavailable("judge command failed: " + command_);
        return output;
    }

    std::string command_;
};

/// {PLACEHOLDER} substitution for prompt templates.
inline std::string render_template(
    std::string text,
    const std::vector<std::pair<std::string, std::string>>& substitutions) {
    for (const auto& [key, value] : substitutions) {
        const std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            text.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return text;
}

inline std::string load_text_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

}  // namespace steerlab::metrics
