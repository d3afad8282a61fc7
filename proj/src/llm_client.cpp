#include "tutorloop/llm.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <httplib.h>

#include <cstdlib>
#include <sstream>
#include <thread>

namespace tutorloop::llm {

std::string to_string(Role role) {
    switch (role) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    return "?";
}

ModelConfig ModelConfig::grading_defaults() { return ModelConfig{}; }

ModelConfig ModelConfig::judge_defaults() {
    ModelConfig c;
    c.model = "o3";
    c.version_tag = "2025-04-16";
    c.reasoning_effort = "medium";
    c.max_output_tokens = 4096;
    return c;
}

ModelConfig ModelConfig::with_env() const {
    ModelConfig c = *this;
    if (const char* v = std::getenv("TUTORLOOP_ENDPOINT"); v && *v) c.endpoint = v;
    if (const char* v = std::getenv("TUTORLOOP_API_KEY"); v && *v) c.api_key = v;
    if (const char* v = std::getenv("TUTORLOOP_MODEL"); v && *v) {
        c.model = v;
        c.version_tag.clear();
    }
    return c;
}

std::string ModelConfig::wire_model() const {
    return version_tag.empty() ? model : model + "-" + version_tag;
}

std::string ModelConfig::fingerprint() const {
    nlohmann::json j{{"model", model},
                     {"version", version_tag},
                     {"temperature", temperature},
                     {"top_p", top_p},
                     {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)}};
    return sha256_hex(j.dump()).substr(0, 16);
}

nlohmann::json build_request_body(const ModelConfig& config, std::span<const Message> messages) {
    nlohmann::json body;
    body["model"] = config.wire_model();
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
    if (config.reasoning_effort) {
        // Reasoning models reject sampling parameters.
        body["reasoning_effort"] = *config.reasoning_effort;
        body["max_completion_tokens"] = config.max_output_tokens;
    } else {
        body["temperature"] = config.temperature;
        body["top_p"] = config.top_p;
        body["max_tokens"] = config.max_output_tokens;
    }
    if (config.seed) body["seed"] = *config.seed;
    return body;
}

std::string request_digest(const nlohmann::json& body) {
    static const char* kVolatile[] = {"user", "metadata", "stream", "stream_options", "timestamp",
                                      "request_id", "created_at"};
    // nlohmann::json (not ordered_json) keeps object keys sorted, which makes
    // dump() canonical.
    nlohmann::json canonical = nlohmann::json::parse(body.dump());
    for (const char* key : kVolatile) canonical.erase(key);
    return sha256_hex(canonical.dump());
}

void check_exchange_shape(std::span<const Message> messages) {
    if (messages.empty()) throw ValidationError("chat exchange has no messages");
    std::size_t i = 0;
    if (messages[0].role == Role::System) ++i;
    if (i == messages.size()) throw ValidationError("chat exchange has only a system message");
    for (std::size_t turn = 0; i < messages.size(); ++i, ++turn) {
        const Role expected = turn % 2 == 0 ? Role::User : Role::Assistant;
        if (messages[i].role != expected) {
            throw ValidationError("message " + std::to_string(i) + " should be " + to_string(expected) +
                                  ", found " + to_string(messages[i].role));
        }
    }
    if (messages.back().role != Role::User) throw ValidationError("chat exchange must end with a user message");
}

std::int64_t estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

struct EndpointParts {
    std::string origin;  // scheme://host[:port]
    std::string base_path;
};

EndpointParts split_endpoint(const std::string& endpoint) {
    const auto scheme = endpoint.find("://");
    if (scheme == std::string::npos) throw ProviderError("endpoint needs a scheme: " + endpoint);
    const auto slash = endpoint.find('/', scheme + 3);
    EndpointParts parts;
    parts.origin = endpoint.substr(0, slash);
    parts.base_path = slash == std::string::npos ? "" : endpoint.substr(slash);
    while (!parts.base_path.empty() && parts.base_path.back() == '/') parts.base_path.pop_back();
    return parts;
}

bool transient_status(int status) { return status == 408 || status == 429 || status >= 500; }

}  // namespace

Completion HttpChatBackend::complete(const ModelConfig& config, std::span<const Message> messages) {
    const auto parts = split_endpoint(config.endpoint);
    const std::string path = parts.base_path + "/chat/completions";
    const std::string body = build_request_body(config, messages).dump();

    httplib::Client client(parts.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

    std::string last_error;
    const int attempts = std::max(1, config.max_attempts);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config.backoff_base * (1 << (attempt - 1)));

        const auto start = std::chrono::steady_clock::now();
        auto res = client.Post(path, headers, body, "application/json");
        const auto elapsed =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);

        if (!res) {
            if (res.error() == httplib::Error::Read && elapsed >= config.timeout * 9 / 10) {
                throw TimeoutError("no response from " + config.endpoint + " within " +
                                   std::to_string(config.timeout.count()) + " ms");
            }
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (transient_status(res->status)) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            throw ProviderError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300));
        }

        Completion out;
        out.latency = elapsed;
        try {
            const auto j = nlohmann::json::parse(res->body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            out.text = content.is_null() ? "" : content.get<std::string>();
            if (j.contains("usage")) {
                out.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
                out.usage.output_tokens = j["usage"].value("completion_tokens", 0);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(std::string("malformed completion body: ") + e.what());
        }
        return out;
    }
    throw TransportError("giving up on " + config.endpoint + " after " + std::to_string(attempts) +
                         " attempts: " + last_error);
}

// ---------------------------------------------------------------------------
// Scripted

void ScriptedBackend::on(Predicate predicate, Responder responder) {
    std::lock_guard lock(mutex_);
    rules_.push_back({std::move(predicate), std::move(responder)});
}

void ScriptedBackend::on(Predicate predicate, std::string reply) {
    on(std::move(predicate), [reply = std::move(reply)](std::span<const Message>) { return reply; });
}

void ScriptedBackend::on_user_contains(std::string needle, std::string reply) {
    on(
        [needle = std::move(needle)](std::span<const Message> msgs) {
            for (auto it = msgs.rbegin(); it != msgs.rend(); ++it) {
                if (it->role == Role::User) return it->text.find(needle) != std::string::npos;
            }
            return false;
        },
        std::move(reply));
}

void ScriptedBackend::otherwise(std::string reply) {
    std::lock_guard lock(mutex_);
    fallback_ = std::move(reply);
}

Completion ScriptedBackend::complete(const ModelConfig&, std::span<const Message> messages) {
    std::vector<Rule> rules;
    std::optional<std::string> fallback;
    {
        std::lock_guard lock(mutex_);
        captured_.emplace_back(messages.begin(), messages.end());
        rules = rules_;
        fallback = fallback_;
    }
    std::optional<std::string> reply;
    for (const auto& rule : rules) {
        if (rule.predicate(messages)) {
            reply = rule.responder(messages);
            break;
        }
    }
    if (!reply) reply = fallback;
    if (!reply) throw ProviderError("scripted backend has no reply for this request");

    Completion out;
    out.text = *reply;
    for (const auto& m : messages) out.usage.input_tokens += estimate_tokens(m.text);
    out.usage.output_tokens = estimate_tokens(out.text);
    return out;
}

std::vector<std::vector<Message>> ScriptedBackend::captured() const {
    std::lock_guard lock(mutex_);
    return captured_;
}

std::size_t ScriptedBackend::call_count() const {
    std::lock_guard lock(mutex_);
    return captured_.size();
}

// ---------------------------------------------------------------------------
// Client

LlmClient::LlmClient(std::shared_ptr<ChatBackend> backend, ModelConfig config, int max_in_flight)
    : backend_(std::move(backend)),
      config_(std::move(config)),
      in_flight_(std::clamp(max_in_flight, 1, 1024)) {}

Completion LlmClient::complete(std::span<const Message> messages) {
    check_exchange_shape(messages);
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& sem;
        ~Release() { sem.release(); }
    } release{in_flight_};

    const auto start = std::chrono::steady_clock::now();
    Completion out = backend_->complete(config_, messages);
    if (out.latency.count() == 0) {
        out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
    }
    input_tokens_ += out.usage.input_tokens;
    output_tokens_ += out.usage.output_tokens;
    ++exchanges_;
    return out;
}

Usage LlmClient::total_usage() const { return {input_tokens_.load(), output_tokens_.load()}; }

}  // namespace tutorloop::llm
