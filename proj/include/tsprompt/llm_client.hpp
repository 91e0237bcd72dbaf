#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "tsprompt/common.hpp"
#include "tsprompt/hash.hpp"
#include "tsprompt/prompt_builder.hpp"

namespace tsprompt {

enum class BackendKind { http_chat, mock };

struct BackendConfig {
    BackendKind kind = BackendKind::mock;
    std::string endpoint_url;  // http_chat only
    std::string model_name = "gpt-3.5-turbo";
    double temperature = 0.0;
    int max_output_tokens = 256;
    std::chrono::milliseconds request_timeout{30000};
    int max_retries = 3;
    int parallelism = 4;
    std::string mock_fixture_path;  // optional JSONL of {prompt_sha256, response}
};

struct CompletionResult {
    std::string text;
    int retries = 0;
    std::chrono::milliseconds latency{0};
};

struct CommentExtraction {
    std::optional<std::string> comment;
    bool untagged = false;
};

/// Pulls the first <comment>...</comment> body out of a raw response. With
/// no well-formed pair the whole response is used (flagged untagged), with
/// stray markers removed so the result never contains one. Absent only when
/// the result would be empty.
inline CommentExtraction extract_comment(const std::string& raw) {
    static const std::string open = "<comment>";
    static const std::string close = "</comment>";
    CommentExtraction out;
    size_t o = raw.find(open);
    size_t c = o == std::string::npos ? std::string::npos
                                      : raw.find(close, o + open.size());
    std::string body;
    if (o != std::string::npos && c != std::string::npos) {
        body = raw.substr(o + open.size(), c - o - open.size());
    } else {
        out.untagged = true;
        body = raw;
    }
    // stray markers are dropped so extraction is idempotent and marker-free
    for (const std::string& marker : {close, open}) {
        size_t pos;
        while ((pos = body.find(marker)) != std::string::npos) {
            body.erase(pos, marker.size());
        }
    }
    body = trim(body);
    if (!body.empty()) out.comment = std::move(body);
    return out;
}

struct GenerationRecord {
    PromptBundle bundle;
    std::string raw_response;
    std::optional<std::string> extracted_comment;
    std::chrono::milliseconds latency{0};
    std::map<std::string, std::string> backend_meta;
};

namespace detail {

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /path or /
};

inline ParsedUrl parse_url(const std::string& url) {
    size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("invalid endpoint URL: " + url);
    size_t path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Synthesizes a plausible deterministic market comment for mock runs.
inline std::string synthesize_mock_response(const std::string& model_name,
                                            const std::string& prompt) {
    uint64_t s = sha256_prefix_u64(model_name + "\n" + prompt);
    auto next = [&s]() { return s = splitmix64(s); };
    bool up = next() % 2 == 0;
    static const char* up_terms[] = {"続伸", "反発"};
    static const char* down_terms[] = {"続落", "反落"};
    const char* term = up ? up_terms[next() % 2] : down_terms[next() % 2];
    uint64_t magnitude = 10 + next() % 490;
    uint64_t level = 6000 + next() % 4000;
    std::string body = "日経平均、" + std::string(term) + " 前引けは" +
                       std::to_string(magnitude) + "円" + (up ? "高" : "安") + "の1万" +
                       std::to_string(level) + "円";
    if (next() % 8 == 0) return body;
    return "<comment>" + body + "</comment>";
}

}  // namespace detail

/**
 * @brief Completion backend: chat-completions HTTP endpoint or offline mock.
 *
 * The whole prompt is sent as a single user message. Retries use
 * exponential backoff; concurrent calls are bounded by
 * BackendConfig::parallelism. The mock answers from a fixture table keyed
 * by prompt SHA-256, synthesizing a deterministic response on miss, so mock
 * runs are pure functions of their inputs.
 */
class LlmClient {
public:
    explicit LlmClient(BackendConfig cfg)
        : cfg_(std::move(cfg)),
          slots_(std::make_unique<std::counting_semaphore<1 << 20>>(
              cfg_.parallelism >= 1 ? cfg_.parallelism : 1)) {
        if (cfg_.parallelism < 1) throw Error("parallelism must be >= 1");
        if (!cfg_.mock_fixture_path.empty()) load_fixtures(cfg_.mock_fixture_path);
    }

    const BackendConfig& config() const { return cfg_; }

    std::string complete(const std::string& prompt) const {
        return complete_with_meta(prompt).text;
    }

    CompletionResult complete_with_meta(const std::string& prompt) const {
        if (prompt.empty()) throw Error("empty prompt");
        slots_->acquire();
        struct Release {
            std::counting_semaphore<1 << 20>* s;
            ~Release() { s->release(); }
        } release{slots_.get()};
        auto start = std::chrono::steady_clock::now();
        CompletionResult r;
        if (cfg_.kind == BackendKind::mock) {
            auto it = fixtures_.find(sha256_hex(prompt));
            r.text = it != fixtures_.end()
                         ? it->second
                         : detail::synthesize_mock_response(cfg_.model_name, prompt);
        } else {
            r = complete_http(prompt);
        }
        r.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        return r;
    }

private:
    void load_fixtures(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open mock fixture file " + path);
        std::string line;
        size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            try {
                auto j = nlohmann::json::parse(line);
                fixtures_[j.at("prompt_sha256").get<std::string>()] =
                    j.at("response").get<std::string>();
            } catch (const nlohmann::json::exception& e) {
                throw Error(path + " line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }

    CompletionResult complete_http(const std::string& prompt) const {
        nlohmann::json req{
            {"model", cfg_.model_name},
            {"messages", {{{"role", "user"}, {"content", prompt}}}},
            {"temperature", cfg_.temperature},
            {"max_tokens", cfg_.max_output_tokens},
        };
        std::string body = req.dump();
        auto url = detail::parse_url(cfg_.endpoint_url);
        httplib::Client client(url.base);
        auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.request_timeout);
        time_t tv_sec = std::max<time_t>(secs.count(), 0);
        long tv_usec = static_cast<long>(
            (cfg_.request_timeout - secs).count() * 1000);
        client.set_connection_timeout(tv_sec, tv_usec);
        client.set_read_timeout(tv_sec, tv_usec);
        client.set_write_timeout(tv_sec, tv_usec);
        httplib::Headers headers;
        if (const char* key = std::getenv("TSPROMPT_API_KEY")) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                auto delay = std::chrono::milliseconds(100) * (1 << (attempt - 1));
                std::this_thread::sleep_for(std::min(delay, std::chrono::milliseconds(2000)));
            }
            auto res = client.Post(url.path, headers, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status == 429 || res->status >= 500) {
                last_error = "backend HTTP " + std::to_string(res->status) + ": " +
                             res->body.substr(0, 200);
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                throw Error("backend HTTP " + std::to_string(res->status) + ": " +
                            res->body.substr(0, 200));
            }
            CompletionResult r;
            r.retries = attempt;
            try {
                auto j = nlohmann::json::parse(res->body);
                r.text = j.at("choices").at(0).at("message").at("content")
                             .get<std::string>();
            } catch (const nlohmann::json::exception&) {
                throw Error("unparseable backend response");
            }
            return r;
        }
        throw Error(last_error + " (after " + std::to_string(cfg_.max_retries) +
                    " retries)");
    }

    BackendConfig cfg_;
    std::map<std::string, std::string> fixtures_;
    mutable std::unique_ptr<std::counting_semaphore<1 << 20>> slots_;
};

}  // namespace tsprompt
