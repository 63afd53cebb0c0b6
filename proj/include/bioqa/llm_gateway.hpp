#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bioqa/cassette.hpp"
#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/text.hpp"

namespace bioqa::llm {

// ---------------------------------------------------------------------------
// Messages and exchanges
// ---------------------------------------------------------------------------

enum class Role { system, user, assistant };

inline std::string to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

/// One request/response pair. `complete` fills response and attempt_count.
struct ChatExchange {
    std::string model_id;
    std::vector<ChatMessage> messages;
    GenerationProfile profile;
    std::optional<std::string> response;
    int attempt_count = 0;
};

inline ChatExchange make_exchange(std::string model_id, ChatMessage system,
                                  std::string user_content, GenerationProfile profile) {
    ChatExchange ex;
    ex.model_id = std::move(model_id);
    ex.messages.push_back(std::move(system));
    ex.messages.push_back({Role::user, std::move(user_content)});
    ex.profile = profile;
    return ex;
}

/// Stable cache key: SHA-256 over the canonical serialization of
/// (model_id, messages, profile). Key order is alphabetical by construction.
inline std::string fingerprint(const ChatExchange& ex) {
    Json canon;
    canon["model"] = ex.model_id;
    canon["messages"] = Json::array();
    for (const auto& m : ex.messages)
        canon["messages"].push_back({{"content", m.content}, {"role", to_string(m.role)}});
    canon["profile"] = {{"frequency_penalty", ex.profile.frequency_penalty},
                        {"presence_penalty", ex.profile.presence_penalty},
                        {"temperature", ex.profile.temperature}};
    return text::sha256_hex(canon.dump());
}

// ---------------------------------------------------------------------------
// System prompts and per-step generation profiles
// ---------------------------------------------------------------------------

enum class Task { bioasq, medprocner };
enum class Step { expansion, reformulation, reranking, answering };

inline const std::string kBioasqSystemPrompt =
    "You are BioASQ-GPT, an AI expert in question answering, research, and information "
    "retrieval in the biomedical domain.";

inline const std::string kMedprocSystemPrompt =
    "Eres un asistente útil que extrae procedimientos médicos de textos médicos en español. "
    "Un procedimiento médico se refiere a cualquier acción diagnóstica, terapéutica, médica "
    "o quirúrgica realizada en un paciente. Tu respuesta debe ser una lista de "
    "procedimientos en formato JSON válido.";

inline ChatMessage system_prompt(Task task) {
    return {Role::system, task == Task::bioasq ? kBioasqSystemPrompt : kMedprocSystemPrompt};
}

inline GenerationProfile profile_for(Step step) {
    switch (step) {
        case Step::expansion: return {0.0, 0.5, 0.1};
        case Step::reformulation: return {0.0, 0.6, 0.2};
        case Step::reranking: return {0.0, 0.3, 0.1};
        case Step::answering: return {0.0, 0.0, 0.0};
    }
    return {};
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    /// Returns the completion text for one attempt. Throws TransportError,
    /// AuthError, or ScriptMiss.
    virtual std::string send(const ChatExchange& request) = 0;
};

/// Splits "https://host[:port]/prefix" into (scheme://host[:port], /prefix).
inline std::pair<std::string, std::string> split_base_url(const std::string& base) {
    auto scheme_end = base.find("://");
    size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto slash = base.find('/', host_start);
    if (slash == std::string::npos) return {base, ""};
    std::string prefix = base.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base.substr(0, slash), prefix};
}

/// OpenAI-style chat-completions endpoint.
class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(std::string base_url, std::string api_key,
                    std::chrono::seconds timeout = std::chrono::seconds(120))
        : base_url_(std::move(base_url)), api_key_(std::move(api_key)), timeout_(timeout) {}

    std::string send(const ChatExchange& req) override {
        Json body;
        body["model"] = req.model_id;
        body["messages"] = Json::array();
        for (const auto& m : req.messages)
            body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
        body["temperature"] = req.profile.temperature;
        body["frequency_penalty"] = req.profile.frequency_penalty;
        body["presence_penalty"] = req.profile.presence_penalty;

        auto [host, prefix] = split_base_url(base_url_);
        httplib::Client client(host);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        auto res = client.Post(prefix + "/chat/completions", headers, body.dump(),
                               "application/json");
        if (!res)
            throw TransportError("chat request failed: " + httplib::to_string(res.error()),
                                 /*retryable=*/true);
        if (res->status == 401 || res->status == 403)
            throw AuthError("chat endpoint rejected credentials (HTTP " +
                            std::to_string(res->status) + ")");
        if (res->status == 429 || res->status >= 500)
            throw TransportError("chat endpoint HTTP " + std::to_string(res->status),
                                 /*retryable=*/true, res->status);
        if (res->status != 200)
            throw TransportError("chat endpoint HTTP " + std::to_string(res->status),
                                 /*retryable=*/false, res->status);

        Json doc = Json::parse(res->body, nullptr, false);
        if (doc.is_discarded() || !doc.contains("choices") || doc["choices"].empty() ||
            !doc["choices"][0].contains("message"))
            throw ParseError("malformed chat completion payload: " + res->body.substr(0, 200));
        return doc["choices"][0]["message"].value("content", "");
    }

private:
    std::string base_url_;
    std::string api_key_;
    std::chrono::seconds timeout_;
};

/// Fully deterministic backend mapping request fingerprints to canned
/// completions. Populate before use; lookups are const and thread-safe.
class ScriptedBackend : public ChatBackend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::map<std::string, std::string> entries)
        : entries_(std::move(entries)) {}

    static std::shared_ptr<ScriptedBackend> from_cassette(const std::filesystem::path& path) {
        return std::make_shared<ScriptedBackend>(load_cassette(path));
    }

    void add(const std::string& fp, std::string completion) {
        entries_[fp] = std::move(completion);
    }
    void add(const ChatExchange& request, std::string completion) {
        add(fingerprint(request), std::move(completion));
    }
    const std::map<std::string, std::string>& entries() const { return entries_; }

    std::string send(const ChatExchange& req) override {
        auto fp = fingerprint(req);
        auto it = entries_.find(fp);
        if (it == entries_.end()) {
            std::string head = req.messages.empty() ? "" : req.messages.back().content;
            throw ScriptMiss("no scripted completion for fingerprint " + fp +
                             " (last message: \"" + head.substr(0, 120) + "\")");
        }
        return it->second;
    }

private:
    std::map<std::string, std::string> entries_;
};

/// Wraps another backend, replaying recorded responses byte-identically and
/// recording anything new to the cassette file.
class RecorderBackend : public ChatBackend {
public:
    RecorderBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path cassette)
        : inner_(std::move(inner)), cassette_(std::move(cassette)) {
        if (std::filesystem::exists(cassette_)) entries_ = load_cassette(cassette_);
    }

    std::string send(const ChatExchange& req) override {
        auto fp = fingerprint(req);
        {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(fp);
            if (it != entries_.end()) return it->second;
        }
        std::string response = inner_->send(req);
        std::lock_guard lock(mutex_);
        auto [it, inserted] = entries_.emplace(fp, response);
        if (inserted) save_cassette(cassette_, entries_);
        return it->second;
    }

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path cassette_;
    std::map<std::string, std::string> entries_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Gateway: retry, backoff, caching, request coalescing
// ---------------------------------------------------------------------------

struct GatewayOptions {
    int retry_max = 5;
    std::chrono::milliseconds retry_base_delay{500};
    int concurrency = 4;
    std::string cache_dir;      // empty disables the response cache
    bool bypass_cache = false;  // repeat-mode: never read or write cache
    /// Injectable for tests; defaults to a real sleep.
    std::function<void(std::chrono::milliseconds)> sleeper =
        [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    uint64_t jitter_seed = std::random_device{}();
};

class Gateway {
public:
    Gateway(std::shared_ptr<ChatBackend> backend, GatewayOptions options = {})
        : backend_(std::move(backend)), options_(std::move(options)),
          jitter_rng_(options_.jitter_seed) {
        if (options_.concurrency < 1) options_.concurrency = 1;
        in_flight_slots_ = options_.concurrency;
    }

    /// Completes the exchange: validates it, consults the cache, coalesces
    /// duplicate in-flight requests, then sends with bounded retry and
    /// monotonically growing jittered backoff.
    std::string complete(ChatExchange& exchange) {
        validate(exchange);
        const std::string fp = fingerprint(exchange);

        if (cache_enabled()) {
            auto cached = cache_read(fp);
            if (cached) {
                ++cache_hits_;
                exchange.response = *cached;
                exchange.attempt_count = 0;
                return *cached;
            }
        }

        // Coalesce concurrent requests for the same fingerprint so a given
        // prompt is sent at most once per cache lifetime.
        std::shared_future<std::string> fut;
        bool leader = false;
        {
            std::unique_lock lock(inflight_mutex_);
            auto it = inflight_.find(fp);
            if (it != inflight_.end()) {
                fut = it->second;
            } else {
                leader = true;
                std::promise<std::string> promise;
                fut = promise.get_future().share();
                inflight_.emplace(fp, fut);
                inflight_promises_.emplace(fp, std::move(promise));
            }
        }

        if (!leader) {
            exchange.response = fut.get(); // rethrows the leader's error
            exchange.attempt_count = 0;
            return *exchange.response;
        }

        try {
            std::string response = send_with_retry(exchange);
            if (cache_enabled()) cache_write(fp, response);
            settle(fp, [&](std::promise<std::string>& p) { p.set_value(response); });
            exchange.response = response;
            return response;
        } catch (...) {
            auto eptr = std::current_exception();
            settle(fp, [&](std::promise<std::string>& p) { p.set_exception(eptr); });
            throw;
        }
    }

    uint64_t requests_sent() const { return requests_sent_.load(); }
    uint64_t cache_hits() const { return cache_hits_.load(); }

private:
    void validate(const ChatExchange& ex) const {
        if (ex.messages.empty() || ex.messages.front().role != Role::system)
            throw SchemaError("exchange must start with a system message");
        for (const auto& m : ex.messages)
            if (m.content.empty()) throw SchemaError("empty chat message content");
        if (ex.profile.temperature != 0.0)
            throw SchemaError("pipeline requests must carry temperature 0");
        if (ex.profile.frequency_penalty < -2.0 || ex.profile.frequency_penalty > 2.0 ||
            ex.profile.presence_penalty < -2.0 || ex.profile.presence_penalty > 2.0)
            throw SchemaError("penalties must lie in [-2, 2]");
    }

    std::string send_with_retry(ChatExchange& ex) {
        const int max_attempts = options_.retry_max + 1;
        std::string last_error;
        for (int attempt = 1; attempt <= max_attempts; ++attempt) {
            try {
                acquire_slot();
                ++requests_sent_;
                std::string r;
                try {
                    r = backend_->send(ex);
                } catch (...) {
                    release_slot();
                    throw;
                }
                release_slot();
                ex.attempt_count = attempt;
                return r;
            } catch (const TransportError& e) {
                last_error = e.what();
                if (!e.retryable())
                    throw TransportExhausted("non-retryable transport failure: " + last_error);
                if (attempt == max_attempts) break;
                options_.sleeper(backoff_delay(attempt));
            }
        }
        ex.attempt_count = max_attempts;
        throw TransportExhausted("gave up after " + std::to_string(max_attempts) +
                                 " attempts: " + last_error);
    }

    // Delay before retrying attempt k (1-based): base * 2^(k-1) * (1 + U[0,1)).
    // Jittered, and monotone nondecreasing across attempts since the maximum
    // for attempt k equals the minimum for attempt k+1.
    std::chrono::milliseconds backoff_delay(int attempt) {
        double factor;
        {
            std::lock_guard lock(jitter_mutex_);
            factor = 1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(jitter_rng_);
        }
        double ms = static_cast<double>(options_.retry_base_delay.count()) *
                    std::pow(2.0, attempt - 1) * factor;
        return std::chrono::milliseconds(static_cast<int64_t>(ms));
    }

    bool cache_enabled() const { return !options_.cache_dir.empty() && !options_.bypass_cache; }

    std::filesystem::path cache_path(const std::string& fp) const {
        return std::filesystem::path(options_.cache_dir) / (fp + ".txt");
    }

    std::optional<std::string> cache_read(const std::string& fp) const {
        auto p = cache_path(fp);
        if (!std::filesystem::exists(p)) return std::nullopt;
        return text::read_file(p);
    }

    void cache_write(const std::string& fp, const std::string& response) const {
        auto p = cache_path(fp);
        if (std::filesystem::exists(p)) return; // write-once
        text::atomic_write_file(p, response);
    }

    template <typename Fn>
    void settle(const std::string& fp, Fn&& resolve) {
        std::lock_guard lock(inflight_mutex_);
        auto it = inflight_promises_.find(fp);
        if (it != inflight_promises_.end()) {
            resolve(it->second);
            inflight_promises_.erase(it);
        }
        inflight_.erase(fp);
    }

    void acquire_slot() {
        std::unique_lock lock(slot_mutex_);
        slot_cv_.wait(lock, [&] { return in_flight_slots_ > 0; });
        --in_flight_slots_;
    }
    void release_slot() {
        {
            std::lock_guard lock(slot_mutex_);
            ++in_flight_slots_;
        }
        slot_cv_.notify_one();
    }

    std::shared_ptr<ChatBackend> backend_;
    GatewayOptions options_;

    std::mutex inflight_mutex_;
    std::unordered_map<std::string, std::shared_future<std::string>> inflight_;
    std::unordered_map<std::string, std::promise<std::string>> inflight_promises_;

    std::mutex slot_mutex_;
    std::condition_variable slot_cv_;
    int in_flight_slots_ = 1;

    std::mutex jitter_mutex_;
    std::mt19937_64 jitter_rng_;

    std::atomic<uint64_t> requests_sent_{0};
    std::atomic<uint64_t> cache_hits_{0};
};

} // namespace bioqa::llm
