#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <vector>

namespace tutorloop::llm {

enum class Role { System, User, Assistant };

std::string to_string(Role role);

struct Message {
    Role role = Role::User;
    std::string text;

    bool operator==(const Message&) const = default;
};

struct Usage {
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;

    std::int64_t total() const { return input_tokens + output_tokens; }
    bool operator==(const Usage&) const = default;
};

struct Completion {
    std::string text;
    Usage usage;
    std::chrono::milliseconds latency{0};
};

struct ModelConfig {
    std::string endpoint = "https://api.openai.com/v1";
    std::string api_key;
    std::string model = "gpt-4o";
    std::string version_tag = "2024-08-06";
    double temperature = 0.0;
    double top_p = 1.0;
    std::optional<std::int64_t> seed = 312;
    std::optional<std::string> reasoning_effort;
    int max_output_tokens = 1024;
    std::chrono::milliseconds timeout{60'000};
    int max_attempts = 4;
    std::chrono::milliseconds backoff_base{500};

    // Grader/tutor: pinned deterministic chat model.
    static ModelConfig grading_defaults();
    // Construct judges: reasoning model, medium effort.
    static ModelConfig judge_defaults();

    // Overlays TUTORLOOP_ENDPOINT, TUTORLOOP_API_KEY and TUTORLOOP_MODEL.
    ModelConfig with_env() const;

    // Model id sent on the wire, e.g. "gpt-4o-2024-08-06".
    std::string wire_model() const;

    // Short hash over model, version, temperature, top_p and seed.
    std::string fingerprint() const;
};

// Chat-completions request body.
nlohmann::json build_request_body(const ModelConfig& config, std::span<const Message> messages);

// SHA-256 over the canonical (sorted-key) body with volatile fields removed.
std::string request_digest(const nlohmann::json& body);

// Throws ValidationError unless messages are non-empty, start with an
// optional system message and then alternate user/assistant from user.
void check_exchange_shape(std::span<const Message> messages);

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual Completion complete(const ModelConfig& config, std::span<const Message> messages) = 0;
};

// OpenAI-compatible HTTP endpoint. Retries 429/5xx and connection failures
// with exponential backoff up to config.max_attempts.
class HttpChatBackend final : public ChatBackend {
public:
    Completion complete(const ModelConfig& config, std::span<const Message> messages) override;
};

// Serves recorded responses keyed by request digest; never touches the
// network. Unknown digests raise MissingRecording.
class ReplayBackend final : public ChatBackend {
public:
    explicit ReplayBackend(std::filesystem::path dir);
    Completion complete(const ModelConfig& config, std::span<const Message> messages) override;

private:
    std::filesystem::path dir_;
};

// Forwards to a live backend and persists every exchange under its digest.
class RecordingBackend final : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path dir);
    Completion complete(const ModelConfig& config, std::span<const Message> messages) override;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path dir_;
    std::mutex write_mutex_;
};

// In-process backend answering from a list of rules; the first rule whose
// predicate accepts the conversation wins. Captures every request.
class ScriptedBackend final : public ChatBackend {
public:
    using Predicate = std::function<bool(std::span<const Message>)>;
    using Responder = std::function<std::string(std::span<const Message>)>;

    void on(Predicate predicate, Responder responder);
    void on(Predicate predicate, std::string reply);
    // Matches when the last user message contains `needle`.
    void on_user_contains(std::string needle, std::string reply);
    void otherwise(std::string reply);

    Completion complete(const ModelConfig& config, std::span<const Message> messages) override;

    std::vector<std::vector<Message>> captured() const;
    std::size_t call_count() const;

private:
    struct Rule {
        Predicate predicate;
        Responder responder;
    };
    mutable std::mutex mutex_;
    std::vector<Rule> rules_;
    std::optional<std::string> fallback_;
    std::vector<std::vector<Message>> captured_;
};

// Builds a scripted backend from a JSON script:
//   {"rules": [{"last_user_contains": [...], "any_contains": [...],
//               "system_contains": [...], "reply": "..."}],
//    "otherwise": "..."}
// A rule matches when every listed needle is found; rules are tried in order.
std::shared_ptr<ScriptedBackend> scripted_backend_from_json(const nlohmann::json& script);
std::shared_ptr<ScriptedBackend> load_scripted_backend(const std::filesystem::path& path);

// Front door used by the grader, tutor and judges: shape checks, a global
// in-flight cap and usage accounting over a pluggable backend.
class LlmClient {
public:
    LlmClient(std::shared_ptr<ChatBackend> backend, ModelConfig config, int max_in_flight = 8);

    Completion complete(std::span<const Message> messages);

    const ModelConfig& config() const { return config_; }
    Usage total_usage() const;
    std::int64_t exchange_count() const { return exchanges_.load(); }

private:
    std::shared_ptr<ChatBackend> backend_;
    ModelConfig config_;
    std::counting_semaphore<1024> in_flight_;
    std::atomic<std::int64_t> input_tokens_{0};
    std::atomic<std::int64_t> output_tokens_{0};
    std::atomic<std::int64_t> exchanges_{0};
};

// Replies are whole utterances; rough token estimate for offline backends.
std::int64_t estimate_tokens(std::string_view text);

}  // namespace tutorloop::llm
