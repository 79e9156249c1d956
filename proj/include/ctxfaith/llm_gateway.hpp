#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace ctxfaith {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 64;
    double temperature = 0.0;
    bool echo_logprobs = false;
    std::string model_id;
};

struct Completion {
    std::string text;
    std::vector<std::string> tokens;
    std::vector<double> token_logprobs;
    std::string model_id;
};

// Thrown for failures worth retrying (connection refused, 5xx, timeouts).
struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 429-style responses; additionally installs a shared backoff in the gateway.
struct RateLimitError : TransportError {
    using TransportError::TransportError;
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string backend_id() const = 0;
    virtual bool supports_scoring() const = 0;
    virtual Completion complete(const CompletionRequest& req) = 0;
    // Per-token log-probabilities of `continuation` given `prompt`.
    virtual std::vector<double> score_continuation(const std::string& model_id,
                                                   const std::string& prompt,
                                                   const std::string& continuation) = 0;
};

// Deterministic offline backend driven by a fixture. Lookup order for
// complete(): exact prompt match, then the first matching rule, then the
// configured default text. A rule matches when its `final_contains` string
// occurs in the prompt's final block (text after the last blank line, i.e.
// the test prompt of a few-shot assembly) and, when given, `full_contains`
// occurs anywhere in the prompt. Missing token logprobs are synthesized
// deterministically from the text.
class MockBackend : public CompletionBackend {
public:
    MockBackend() = default;
    static MockBackend from_fixture(const std::string& jsonl_path);

    void add_completion(const std::string& prompt, const std::string& text);
    void add_completion(const std::string& prompt, Completion completion);
    void add_rule(const std::string& final_contains, const std::string& text,
                  const std::string& full_contains = "");
    void add_score(const std::string& prompt, const std::string& continuation,
                   std::vector<double> logprobs);
    void set_default_text(std::string text) { default_text_ = std::move(text); }

    std::string backend_id() const override { return "mock"; }
    bool supports_scoring() const override { return true; }
    Completion complete(const CompletionRequest& req) override;
    std::vector<double> score_continuation(const std::string& model_id, const std::string& prompt,
                                           const std::string& continuation) override;

private:
    struct Rule {
        std::string final_contains;
        std::string full_contains;
        std::string text;
    };
    std::unordered_map<std::string, Completion> exact_;  // keyed by sha256(prompt)
    std::vector<Rule> rules_;
    std::map<std::pair<std::string, std::string>, std::vector<double>> scores_;
    std::string default_text_;
};

// Client for a completion endpoint speaking the common JSON protocol:
//   POST {base_url}{path}
//   request  {"model", "prompt", "max_tokens", "temperature", "echo", "logprobs"}
//   response {"choices":[{"text", "logprobs":{"tokens","token_logprobs","text_offset"}}]}
// Scoring uses the echo trick: submit prompt+continuation with max_tokens=0
// and read back the logprobs of the continuation's tokens.
// Bearer token from CTXFAITH_LLM_TOKEN when set.
class HttpBackend : public CompletionBackend {
public:
    HttpBackend(std::string base_url, std::string path = "/v1/completions",
                bool supports_logprobs = true, int timeout_s = 30);

    std::string backend_id() const override { return "http:" + base_url_; }
    bool supports_scoring() const override { return supports_logprobs_; }
    Completion complete(const CompletionRequest& req) override;
    std::vector<double> score_continuation(const std::string& model_id, const std::string& prompt,
                                           const std::string& continuation) override;

private:
    nlohmann::json post(const nlohmann::json& body);
    std::string base_url_;
    std::string path_;
    bool supports_logprobs_;
    int timeout_s_;
};

// Content-addressed response store: an in-memory index over an append-only
// JSONL file, so interrupted grids resume without re-spending backend calls.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(std::string persist_path);  // loads existing entries

    std::optional<nlohmann::json> lookup(const std::string& key) const;
    void store(const std::string& key, const nlohmann::json& response);
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::unordered_map<std::string, nlohmann::json> entries_;
    std::string persist_path_;
};

struct RetryPolicy {
    int attempts = 3;
    int initial_backoff_ms = 100;
};

struct GatewayStats {
    std::size_t backend_calls = 0;
    std::size_t cache_hits = 0;
    std::size_t retries = 0;
};

// Front door for all backend traffic: cache lookup, retry with exponential
// backoff, rate-limit backoff shared across workers, response validation.
class Gateway {
public:
    explicit Gateway(CompletionBackend& backend, ResponseCache* cache = nullptr,
                     RetryPolicy retry = {});

    Completion complete(const CompletionRequest& req);
    std::vector<double> score(const std::string& model_id, const std::string& prompt,
                              const std::string& continuation);
    bool supports_scoring() const { return backend_.supports_scoring(); }
    GatewayStats stats() const;

private:
    template <typename Fn>
    auto with_retry(Fn&& fn) -> decltype(fn());
    void wait_for_rate_limit();

    CompletionBackend& backend_;
    ResponseCache* cache_;
    RetryPolicy retry_;
    mutable std::mutex mutex_;
    GatewayStats stats_;
    std::chrono::steady_clock::time_point backoff_until_{};
};

enum class ScoreMode { joint, per_token, unconditional };

ScoreMode score_mode_from_string(const std::string& s);
std::string to_string(ScoreMode m);

struct ChoiceDistribution {
    std::vector<double> probs;  // aligned to the choices, sums to 1
    ScoreMode mode = ScoreMode::joint;
};

// P(choice|prompt) for every choice, normalized across choices.
//   joint:         weight = exp(sum of token logprobs)
//   per_token:     weight = exp(sum / length)
//   unconditional: weight = exp(sum - sum of logprobs under the neutral prefix)
ChoiceDistribution score_choices(Gateway& gateway, const std::string& model_id,
                                 const std::string& prompt, const std::vector<std::string>& choices,
                                 ScoreMode mode, const std::string& neutral_prefix = "Answer:");

double idk_probability(const ChoiceDistribution& dist, std::size_t idk_index);

// Free-form answer extraction: completion text up to the first newline, trimmed.
std::string extract_answer(const std::string& completion_text);

}  // namespace ctxfaith
