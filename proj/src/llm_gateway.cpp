#include "ctxfaith/llm_gateway.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"

#include "ctxfaith/util.hpp"

namespace ctxfaith {

using nlohmann::json;

namespace {

std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream is(text);
    std::string tok;
    while (is >> tok) tokens.push_back(tok);
    return tokens;
}

// Stable stand-in logprobs for fixture entries that do not pin their own.
std::vector<double> synth_logprobs(std::string_view seed_text, std::size_t n) {
    DetRng rng(splitmix64(fnv1a64(seed_text)));
    std::vector<double> out(n);
    for (auto& lp : out) lp = -(0.05 + 2.95 * rng.unit());
    return out;
}

void validate_completion(const Completion& c) {
    if (c.tokens.size() != c.token_logprobs.size())
        throw std::runtime_error("malformed completion: " + std::to_string(c.tokens.size()) +
                                 " tokens vs " + std::to_string(c.token_logprobs.size()) + " logprobs");
    for (double lp : c.token_logprobs)
        if (lp > 0.0) throw std::runtime_error("malformed completion: positive token logprob");
}

std::string_view final_block(std::string_view prompt) {
    std::size_t at = prompt.rfind("\n\n");
    return at == std::string_view::npos ? prompt : prompt.substr(at + 2);
}

}  // namespace

MockBackend MockBackend::from_fixture(const std::string& jsonl_path) {
    MockBackend backend;
    for_each_line(jsonl_path, [&](std::size_t line_no, const std::string& line) {
        if (line.empty()) return;
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(jsonl_path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        std::string type = j.value("type", "completion");
        if (type == "completion") {
            Completion c;
            c.text = j.at("text").get<std::string>();
            if (j.contains("tokens")) c.tokens = j["tokens"].get<std::vector<std::string>>();
            if (j.contains("token_logprobs"))
                c.token_logprobs = j["token_logprobs"].get<std::vector<double>>();
            std::string key = j.contains("prompt_sha256")
                                  ? j["prompt_sha256"].get<std::string>()
                                  : sha256_hex(j.at("prompt").get<std::string>());
            backend.exact_[key] = std::move(c);
        } else if (type == "rule") {
            backend.add_rule(j.at("final_contains").get<std::string>(), j.at("text").get<std::string>(),
                             j.value("full_contains", ""));
        } else if (type == "score") {
            backend.add_score(j.at("prompt").get<std::string>(),
                              j.at("continuation").get<std::string>(),
                              j.at("token_logprobs").get<std::vector<double>>());
        } else if (type == "config") {
            if (j.contains("default_text")) backend.default_text_ = j["default_text"].get<std::string>();
        } else {
            throw std::runtime_error(jsonl_path + ":" + std::to_string(line_no) +
                                     ": unknown fixture entry type '" + type + "'");
        }
    });
    return backend;
}

void MockBackend::add_completion(const std::string& prompt, const std::string& text) {
    Completion c;
    c.text = text;
    exact_[sha256_hex(prompt)] = std::move(c);
}

void MockBackend::add_completion(const std::string& prompt, Completion completion) {
    exact_[sha256_hex(prompt)] = std::move(completion);
}

void MockBackend::add_rule(const std::string& final_contains, const std::string& text,
                           const std::string& full_contains) {
    rules_.push_back(Rule{final_contains, full_contains, text});
}

void MockBackend::add_score(const std::string& prompt, const std::string& continuation,
                            std::vector<double> logprobs) {
    scores_[{prompt, continuation}] = std::move(logprobs);
}

Completion MockBackend::complete(const CompletionRequest& req) {
    Completion out;
    auto it = exact_.find(sha256_hex(req.prompt));
    if (it != exact_.end()) {
        out = it->second;
    } else {
        out.text = default_text_;
        std::string_view tail = final_block(req.prompt);
        for (const auto& rule : rules_) {
            if (tail.find(rule.final_contains) == std::string_view::npos) continue;
            if (!rule.full_contains.empty() &&
                req.prompt.find(rule.full_contains) == std::string::npos)
                continue;
            out.text = rule.text;
            break;
        }
    }
    if (out.tokens.empty() && !out.text.empty()) out.tokens = whitespace_tokens(out.text);
    if (out.token_logprobs.empty() && !out.tokens.empty())
        out.token_logprobs = synth_logprobs(out.text, out.tokens.size());
    out.model_id = req.model_id;
    validate_completion(out);
    return out;
}

std::vector<double> MockBackend::score_continuation(const std::string&, const std::string& prompt,
                                                    const std::string& continuation) {
    auto it = scores_.find({prompt, continuation});
    if (it != scores_.end()) return it->second;
    auto tokens = whitespace_tokens(continuation);
    std::string seed = prompt + "\x1f" + continuation;
    return synth_logprobs(seed, tokens.size());
}

HttpBackend::HttpBackend(std::string base_url, std::string path, bool supports_logprobs, int timeout_s)
    : base_url_(std::move(base_url)), path_(std::move(path)),
      supports_logprobs_(supports_logprobs), timeout_s_(timeout_s) {}

json HttpBackend::post(const json& body) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(timeout_s_);
    client.set_read_timeout(timeout_s_);
    httplib::Headers headers;
    if (const char* token = std::getenv("CTXFAITH_LLM_TOKEN"))
        headers.emplace("Authorization", std::string("Bearer ") + token);

    auto res = client.Post(path_, headers, body.dump(), "application/json");
    if (!res)
        throw TransportError("completion endpoint unreachable at " + base_url_ + path_ + " (" +
                             httplib::to_string(res.error()) + ")");
    if (res->status == 429)
        throw RateLimitError("rate limited by " + base_url_ + ": " + res->body.substr(0, 200));
    if (res->status >= 500)
        throw TransportError("completion endpoint returned HTTP " + std::to_string(res->status) +
                             ": " + res->body.substr(0, 200));
    if (res->status != 200)
        throw std::runtime_error("completion endpoint returned HTTP " + std::to_string(res->status) +
                                 ": " + res->body.substr(0, 200));
    try {
        return json::parse(res->body);
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("malformed completion response: ") + e.what() +
                                 "; payload: " + res->body.substr(0, 200));
    }
}

Completion HttpBackend::complete(const CompletionRequest& req) {
    json body{{"model", req.model_id},
              {"prompt", req.prompt},
              {"max_tokens", req.max_tokens},
              {"temperature", req.temperature}};
    if (req.echo_logprobs) {
        body["echo"] = true;
        body["logprobs"] = 0;
    } else if (supports_logprobs_) {
        body["logprobs"] = 0;
    }
    json res = post(body);

    Completion out;
    out.model_id = req.model_id;
    try {
        const json& choice = res.at("choices").at(0);
        out.text = choice.at("text").get<std::string>();
        if (choice.contains("logprobs") && !choice["logprobs"].is_null()) {
            const json& lp = choice["logprobs"];
            if (lp.contains("tokens")) out.tokens = lp["tokens"].get<std::vector<std::string>>();
            if (lp.contains("token_logprobs")) {
                for (const auto& v : lp["token_logprobs"])
                    out.token_logprobs.push_back(v.is_null() ? 0.0 : v.get<double>());
            }
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed completion response: ") + e.what() +
                                 "; payload: " + res.dump().substr(0, 200));
    }
    validate_completion(out);
    return out;
}

std::vector<double> HttpBackend::score_continuation(const std::string& model_id,
                                                    const std::string& prompt,
                                                    const std::string& continuation) {
    if (!supports_logprobs_)
        throw std::runtime_error("backend '" + backend_id() +
                                 "' does not expose token log-probabilities; use the mock backend "
                                 "or an endpoint that returns logprobs");
    json body{{"model", model_id},
              {"prompt", prompt + continuation},
              {"max_tokens", 0},
              {"temperature", 0.0},
              {"echo", true},
              {"logprobs", 0}};
    json res = post(body);
    try {
        const json& lp = res.at("choices").at(0).at("logprobs");
        const json& offsets = lp.at("text_offset");
        const json& values = lp.at("token_logprobs");
        if (offsets.size() != values.size())
            throw std::runtime_error("text_offset / token_logprobs length mismatch");
        std::vector<double> out;
        for (std::size_t i = 0; i < offsets.size(); ++i) {
            if (offsets[i].get<std::size_t>() < prompt.size()) continue;
            if (values[i].is_null())
                throw std::runtime_error("null logprob inside the continuation region");
            out.push_back(values[i].get<double>());
        }
        if (out.empty())
            throw std::runtime_error("continuation '" + continuation.substr(0, 40) +
                                     "' produced no scored tokens");
        return out;
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed scoring response: ") + e.what() +
                                 "; payload: " + res.dump().substr(0, 200));
    }
}

ResponseCache::ResponseCache(std::string persist_path) : persist_path_(std::move(persist_path)) {
    std::ifstream is(persist_path_, std::ios::binary);
    if (!is) return;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        entries_[j.at("key").get<std::string>()] = j.at("response");
    }
}

std::optional<json> ResponseCache::lookup(const std::string& key) const {
    std::lock_guard lock(mutex_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::store(const std::string& key, const json& response) {
    std::lock_guard lock(mutex_);
    if (!entries_.emplace(key, response).second) return;
    if (!persist_path_.empty()) {
        std::ofstream os(persist_path_, std::ios::binary | std::ios::app);
        if (os) os << json{{"key", key}, {"response", response}}.dump() << '\n';
    }
}

std::size_t ResponseCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

Gateway::Gateway(CompletionBackend& backend, ResponseCache* cache, RetryPolicy retry)
    : backend_(backend), cache_(cache), retry_(retry) {}

void Gateway::wait_for_rate_limit() {
    std::chrono::steady_clock::time_point until;
    {
        std::lock_guard lock(mutex_);
        until = backoff_until_;
    }
    auto now = std::chrono::steady_clock::now();
    if (until > now) std::this_thread::sleep_for(until - now);
}

template <typename Fn>
auto Gateway::with_retry(Fn&& fn) -> decltype(fn()) {
    int backoff_ms = retry_.initial_backoff_ms;
    for (int attempt = 1;; ++attempt) {
        wait_for_rate_limit();
        try {
            auto result = fn();
            std::lock_guard lock(mutex_);
            ++stats_.backend_calls;
            return result;
        } catch (const TransportError& e) {
            if (dynamic_cast<const RateLimitError*>(&e)) {
                std::lock_guard lock(mutex_);
                backoff_until_ = std::chrono::steady_clock::now() +
                                 std::chrono::milliseconds(backoff_ms);
            }
            if (attempt >= retry_.attempts)
                throw std::runtime_error("backend call failed after " + std::to_string(attempt) +
                                         " attempts: " + e.what());
            {
                std::lock_guard lock(mutex_);
                ++stats_.retries;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(backoff_ms));
            backoff_ms *= 2;
        }
    }
}

Completion Gateway::complete(const CompletionRequest& req) {
    if (req.max_tokens < 0) throw std::invalid_argument("complete: max_tokens must be >= 0");
    if (req.temperature < 0.0) throw std::invalid_argument("complete: temperature must be >= 0");

    json canonical{{"kind", "completion"}, {"model", req.model_id},    {"prompt", req.prompt},
                   {"max_tokens", req.max_tokens}, {"temperature", req.temperature},
                   {"echo", req.echo_logprobs}};
    std::string key = sha256_hex(canonical.dump());

    if (cache_) {
        if (auto hit = cache_->lookup(key)) {
            std::lock_guard lock(mutex_);
            ++stats_.cache_hits;
            Completion c;
            c.text = hit->at("text").get<std::string>();
            c.tokens = hit->at("tokens").get<std::vector<std::string>>();
            c.token_logprobs = hit->at("token_logprobs").get<std::vector<double>>();
            c.model_id = hit->at("model_id").get<std::string>();
            return c;
        }
    }

    Completion c = with_retry([&] { return backend_.complete(req); });
    validate_completion(c);
    if (cache_)
        cache_->store(key, json{{"text", c.text},
                                {"tokens", c.tokens},
                                {"token_logprobs", c.token_logprobs},
                                {"model_id", c.model_id}});
    return c;
}

std::vector<double> Gateway::score(const std::string& model_id, const std::string& prompt,
                                   const std::string& continuation) {
    json canonical{{"kind", "score"}, {"model", model_id}, {"prompt", prompt},
                   {"continuation", continuation}};
    std::string key = sha256_hex(canonical.dump());

    if (cache_) {
        if (auto hit = cache_->lookup(key)) {
            std::lock_guard lock(mutex_);
            ++stats_.cache_hits;
            return hit->at("token_logprobs").get<std::vector<double>>();
        }
    }

    auto logprobs = with_retry([&] { return backend_.score_continuation(model_id, prompt, continuation); });
    if (cache_) cache_->store(key, json{{"token_logprobs", logprobs}});
    return logprobs;
}

GatewayStats Gateway::stats() const {
    std::lock_guard lock(mutex_);
    return stats_;
}

ScoreMode score_mode_from_string(const std::string& s) {
    if (s == "joint") return ScoreMode::joint;
    if (s == "per_token") return ScoreMode::per_token;
    if (s == "unconditional") return ScoreMode::unconditional;
    throw std::runtime_error("unknown score mode '" + s +
                             "' (expected joint, per_token or unconditional)");
}

std::string to_string(ScoreMode m) {
    switch (m) {
        case ScoreMode::joint: return "joint";
        case ScoreMode::per_token: return "per_token";
        case ScoreMode::unconditional: return "unconditional";
    }
    throw std::logic_error("unreachable");
}

ChoiceDistribution score_choices(Gateway& gateway, const std::string& model_id,
                                 const std::string& prompt, const std::vector<std::string>& choices,
                                 ScoreMode mode, const std::string& neutral_prefix) {
    if (choices.size() < 2)
        throw std::invalid_argument("score_choices: need at least 2 choices");
    if (!gateway.supports_scoring())
        throw std::runtime_error("score_choices: backend does not expose token log-probabilities; "
                                 "use the mock backend or a logprob-capable endpoint");

    std::vector<double> log_weights(choices.size());
    for (std::size_t i = 0; i < choices.size(); ++i) {
        auto lp = gateway.score(model_id, prompt, choices[i]);
        double sum = 0.0;
        for (double x : lp) sum += x;
        switch (mode) {
            case ScoreMode::joint:
                log_weights[i] = sum;
                break;
            case ScoreMode::per_token:
                log_weights[i] = sum / static_cast<double>(std::max<std::size_t>(lp.size(), 1));
                break;
            case ScoreMode::unconditional: {
                auto base = gateway.score(model_id, neutral_prefix, choices[i]);
                double base_sum = 0.0;
                for (double x : base) base_sum += x;
                log_weights[i] = sum - base_sum;
                break;
            }
        }
    }

    double m = *std::max_element(log_weights.begin(), log_weights.end());
    double total = 0.0;
    std::vector<double> weights(choices.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        weights[i] = std::exp(log_weights[i] - m);
        total += weights[i];
    }
    ChoiceDistribution dist;
    dist.mode = mode;
    dist.probs.resize(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) dist.probs[i] = weights[i] / total;
    return dist;
}

double idk_probability(const ChoiceDistribution& dist, std::size_t idk_index) {
    if (idk_index >= dist.probs.size())
        throw std::out_of_range("idk_probability: index " + std::to_string(idk_index) +
                                " out of range (" + std::to_string(dist.probs.size()) + " choices)");
    return dist.probs[idk_index];
}

std::string extract_answer(const std::string& completion_text) {
    std::string line = completion_text.substr(0, completion_text.find('\n'));
    std::size_t b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = line.find_last_not_of(" \t\r");
    return line.substr(b, e - b + 1);
}

}  // namespace ctxfaith
