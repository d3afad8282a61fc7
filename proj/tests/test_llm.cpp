#include "support.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/llm.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <thread>

using namespace tutorloop;
using namespace tutorloop::llm;
using tutorloop::testing::TempDir;

namespace {

std::vector<Message> exchange(const std::string& user) {
    return {{Role::System, "You grade."}, {Role::User, user}};
}

// Local chat-completions stand-in on an ephemeral port.
class FakeProvider {
public:
    explicit FakeProvider(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
        server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_body = req.body;
            handler(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeProvider() {
        server_.stop();
        thread_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

    std::atomic<int> hits{0};
    std::string last_body;

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion_body(const std::string& text) {
    return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", text}}}}}},
                          {"usage", {{"prompt_tokens", 11}, {"completion_tokens", 3}}}}
        .dump();
}

ModelConfig fast_config(const std::string& endpoint) {
    auto c = ModelConfig::grading_defaults();
    c.endpoint = endpoint;
    c.backoff_base = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
}

}  // namespace

TEST(ModelConfig, GradingDefaultsOnTheWire) {
    const auto body = build_request_body(ModelConfig::grading_defaults(), exchange("hi"));
    EXPECT_EQ(body["model"], "gpt-4o-2024-08-06");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["top_p"], 1.0);
    EXPECT_EQ(body["seed"], 312);
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_EQ(body["messages"][1]["content"], "hi");
}

TEST(ModelConfig, JudgeDefaultsUseReasoningEffort) {
    const auto body = build_request_body(ModelConfig::judge_defaults(), exchange("hi"));
    EXPECT_EQ(body["reasoning_effort"], "medium");
    EXPECT_FALSE(body.contains("temperature"));
    EXPECT_NE(ModelConfig::judge_defaults().fingerprint(), ModelConfig::grading_defaults().fingerprint());
}

TEST(ModelConfig, FingerprintTracksPinnedFields) {
    auto a = ModelConfig::grading_defaults();
    auto b = a;
    b.api_key = "secret";
    b.timeout = std::chrono::milliseconds(5);
    EXPECT_EQ(a.fingerprint(), b.fingerprint());
    b.temperature = 0.7;
    EXPECT_NE(a.fingerprint(), b.fingerprint());
}

TEST(Digest, IgnoresVolatileFieldsAndKeyOrder) {
    auto body = build_request_body(ModelConfig::grading_defaults(), exchange("hi"));
    const auto base = request_digest(body);
    auto noisy = body;
    noisy["timestamp"] = "2026-01-01T00:00:00Z";
    noisy["user"] = "someone";
    noisy["request_id"] = "abc";
    EXPECT_EQ(request_digest(noisy), base);
    nlohmann::ordered_json reordered;
    for (auto it = body.rbegin(); it != body.rend(); ++it) reordered[it.key()] = it.value();
    EXPECT_EQ(request_digest(nlohmann::json::parse(reordered.dump())), base);
    body["messages"][1]["content"] = "hi!";
    EXPECT_NE(request_digest(body), base);
}

TEST(ExchangeShape, Rules) {
    EXPECT_NO_THROW(check_exchange_shape(exchange("x")));
    EXPECT_NO_THROW(check_exchange_shape(std::vector<Message>{{Role::User, "a"}, {Role::Assistant, "b"}, {Role::User, "c"}}));
    EXPECT_THROW(check_exchange_shape(std::vector<Message>{}), ValidationError);
    EXPECT_THROW(check_exchange_shape(std::vector<Message>{{Role::System, "s"}}), ValidationError);
    EXPECT_THROW(check_exchange_shape(std::vector<Message>{{Role::User, "a"}, {Role::User, "b"}}), ValidationError);
    EXPECT_THROW(check_exchange_shape(std::vector<Message>{{Role::User, "a"}, {Role::Assistant, "b"}}), ValidationError);
}

TEST(Replay, RecordThenReplayFiveExchanges) {
    TempDir dir;
    auto scripted = std::make_shared<ScriptedBackend>();
    scripted->on_user_contains("q1", "a1");
    scripted->otherwise("fallback");
    LlmClient recorder(std::make_shared<RecordingBackend>(scripted, dir.path()), ModelConfig::grading_defaults());
    std::vector<std::string> live;
    for (int i = 0; i < 5; ++i) live.push_back(recorder.complete(exchange("q" + std::to_string(i))).text);
    EXPECT_EQ(live[1], "a1");

    LlmClient replay(std::make_shared<ReplayBackend>(dir.path()), ModelConfig::grading_defaults());
    for (int i = 0; i < 5; ++i) EXPECT_EQ(replay.complete(exchange("q" + std::to_string(i))).text, live[i]);
    EXPECT_EQ(scripted->call_count(), 5u);
    EXPECT_THROW(replay.complete(exchange("never recorded")), MissingRecording);

    // A different model config is a different request.
    auto other = ModelConfig::grading_defaults();
    other.seed = 7;
    LlmClient replay_other(std::make_shared<ReplayBackend>(dir.path()), other);
    EXPECT_THROW(replay_other.complete(exchange("q1")), MissingRecording);
}

TEST(Replay, CorruptRecordingIsReported) {
    TempDir dir;
    const auto digest = request_digest(build_request_body(ModelConfig::grading_defaults(), exchange("q")));
    write_file(dir / (digest + ".json"), "{broken");
    ReplayBackend backend(dir.path());
    EXPECT_THROW(backend.complete(ModelConfig::grading_defaults(), exchange("q")), StoreCorrupt);
    EXPECT_THROW(ReplayBackend(dir / "absent"), StoreCorrupt);
}

TEST(Scripted, JsonRules) {
    const auto script = nlohmann::json::parse(R"({
        "rules": [
            {"system_contains": ["grade"], "last_user_contains": ["alpha"], "reply": "A"},
            {"any_contains": ["beta", "gamma"], "reply": "BG"}
        ],
        "otherwise": "Z"})");
    auto backend = scripted_backend_from_json(script);
    const auto cfg = ModelConfig::grading_defaults();
    EXPECT_EQ(backend->complete(cfg, exchange("alpha")).text, "A");
    EXPECT_EQ(backend->complete(cfg, std::vector<Message>{{Role::User, "alpha"}}).text, "Z");
    EXPECT_EQ(backend->complete(cfg, std::vector<Message>{{Role::User, "beta"}, {Role::Assistant, "x"}, {Role::User, "gamma"}}).text, "BG");
    EXPECT_EQ(backend->complete(cfg, exchange("beta")).text, "Z");
    EXPECT_EQ(backend->captured().size(), 4u);
    EXPECT_THROW(scripted_backend_from_json(nlohmann::json::parse(R"({"rules":[{"reply":1}]})")), ParseError);
}

TEST(Scripted, NoMatchWithoutFallbackIsProviderError) {
    ScriptedBackend backend;
    backend.on_user_contains("x", "y");
    EXPECT_THROW(backend.complete(ModelConfig::grading_defaults(), exchange("z")), ProviderError);
}

TEST(Http, ParsesCompletionAndSendsPinnedConfig) {
    FakeProvider provider([](const httplib::Request&, httplib::Response& res) {
        res.set_content(completion_body("SCORE: 2"), "application/json");
    });
    LlmClient client(std::make_shared<HttpChatBackend>(), fast_config(provider.endpoint()));
    const auto out = client.complete(exchange("hello"));
    EXPECT_EQ(out.text, "SCORE: 2");
    EXPECT_EQ(out.usage.input_tokens, 11);
    EXPECT_EQ(out.usage.output_tokens, 3);
    const auto sent = nlohmann::json::parse(provider.last_body);
    EXPECT_EQ(sent["temperature"], 0.0);
    EXPECT_EQ(sent["seed"], 312);
}

TEST(Http, RetriesTransientFailures) {
    std::atomic<int> calls{0};
    FakeProvider provider([&](const httplib::Request&, httplib::Response& res) {
        if (calls++ < 2) {
            res.status = calls == 1 ? 429 : 503;
            return;
        }
        res.set_content(completion_body("ok"), "application/json");
    });
    LlmClient client(std::make_shared<HttpChatBackend>(), fast_config(provider.endpoint()));
    EXPECT_EQ(client.complete(exchange("hello")).text, "ok");
    EXPECT_EQ(provider.hits.load(), 3);
}

TEST(Http, ClientErrorsAreNotRetried) {
    FakeProvider provider([](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad request", "text/plain");
    });
    LlmClient client(std::make_shared<HttpChatBackend>(), fast_config(provider.endpoint()));
    EXPECT_THROW(client.complete(exchange("hello")), ProviderError);
    EXPECT_EQ(provider.hits.load(), 1);
}

TEST(Http, MalformedBodyIsProviderError) {
    FakeProvider provider([](const httplib::Request&, httplib::Response& res) {
        res.set_content("{\"choices\": []}", "application/json");
    });
    LlmClient client(std::make_shared<HttpChatBackend>(), fast_config(provider.endpoint()));
    EXPECT_THROW(client.complete(exchange("hello")), ProviderError);
}

TEST(Http, UnreachableEndpointIsTransportErrorAfterAttempts) {
    // Nothing listens on the discard port.
    auto cfg = fast_config("http://127.0.0.1:9/v1");
    cfg.max_attempts = 3;
    HttpChatBackend backend;
    try {
        backend.complete(cfg, exchange("x"));
        FAIL() << "expected TransportError";
    } catch (const TransportError& e) {
        EXPECT_NE(std::string(e.what()).find("after 3 attempts"), std::string::npos);
    }
}

TEST(Client, UsageAccountingSumsExchanges) {
    auto scripted = std::make_shared<ScriptedBackend>();
    scripted->otherwise("twelve chars");
    LlmClient client(scripted, ModelConfig::grading_defaults());
    Usage sum;
    for (int i = 0; i < 4; ++i) {
        const auto u = client.complete(exchange(std::string(10 * (i + 1), 'x'))).usage;
        sum.input_tokens += u.input_tokens;
        sum.output_tokens += u.output_tokens;
    }
    EXPECT_EQ(client.total_usage(), sum);
    EXPECT_EQ(client.exchange_count(), 4);
    EXPECT_THROW(client.complete(std::vector<Message>{}), ValidationError);
    EXPECT_EQ(client.exchange_count(), 4);
}

TEST(Client, InFlightCapIsRespected) {
    class Slow final : public ChatBackend {
    public:
        std::atomic<int> now{0}, peak{0};
        Completion complete(const ModelConfig&, std::span<const Message>) override {
            const int n = ++now;
            int p = peak.load();
            while (n > p && !peak.compare_exchange_weak(p, n)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --now;
            return {"ok", {}, {}};
        }
    };
    auto slow = std::make_shared<Slow>();
    LlmClient client(slow, ModelConfig::grading_defaults(), 2);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.complete(exchange("x")); });
    for (auto& t : threads) t.join();
    EXPECT_LE(slow->peak.load(), 2);
    EXPECT_EQ(client.exchange_count(), 8);
}
