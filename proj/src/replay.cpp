#include "tutorloop/errors.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/text_util.hpp"

namespace tutorloop::llm {

namespace {

std::filesystem::path recording_path(const std::filesystem::path& dir, const std::string& digest) {
    return dir / (digest + ".json");
}

}  // namespace

ReplayBackend::ReplayBackend(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (!std::filesystem::is_directory(dir_)) {
        throw StoreCorrupt("recording store is not a directory: " + dir_.string());
    }
}

Completion ReplayBackend::complete(const ModelConfig& config, std::span<const Message> messages) {
    const auto digest = request_digest(build_request_body(config, messages));
    const auto path = recording_path(dir_, digest);
    if (!std::filesystem::exists(path)) {
        throw MissingRecording("no recording for request digest " + digest);
    }
    Completion out;
    try {
        const auto j = nlohmann::json::parse(read_file(path));
        if (j.value("digest", digest) != digest) throw StoreCorrupt("digest mismatch in " + path.string());
        const auto& resp = j.at("response");
        out.text = resp.at("text").get<std::string>();
        out.usage.input_tokens = resp.at("usage").value("input_tokens", 0);
        out.usage.output_tokens = resp.at("usage").value("output_tokens", 0);
    } catch (const nlohmann::json::exception& e) {
        throw StoreCorrupt("unreadable recording " + path.string() + ": " + e.what());
    }
    return out;
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

Completion RecordingBackend::complete(const ModelConfig& config, std::span<const Message> messages) {
    const auto body = build_request_body(config, messages);
    const auto digest = request_digest(body);
    Completion out = inner_->complete(config, messages);

    nlohmann::ordered_json record;
    record["digest"] = digest;
    record["request"] = body;
    record["response"] = {{"text", out.text},
                          {"usage", {{"input_tokens", out.usage.input_tokens},
                                     {"output_tokens", out.usage.output_tokens}}}};
    std::lock_guard lock(write_mutex_);
    write_file(recording_path(dir_, digest), record.dump(2) + "\n");
    return out;
}

std::shared_ptr<ScriptedBackend> scripted_backend_from_json(const nlohmann::json& script) {
    auto backend = std::make_shared<ScriptedBackend>();
    auto needles = [](const nlohmann::json& rule, const char* key) {
        std::vector<std::string> out;
        if (rule.contains(key)) out = rule.at(key).get<std::vector<std::string>>();
        return out;
    };
    try {
        for (const auto& rule : script.value("rules", nlohmann::json::array())) {
            auto last_user = needles(rule, "last_user_contains");
            auto any = needles(rule, "any_contains");
            auto system = needles(rule, "system_contains");
            backend->on(
                [last_user, any, system](std::span<const Message> msgs) {
                    const Message* last = nullptr;
                    std::string all, sys;
                    for (const auto& m : msgs) {
                        if (m.role == Role::User) last = &m;
                        if (m.role == Role::System) sys += m.text;
                        all += m.text;
                        all += '\n';
                    }
                    auto has = [](const std::string& hay, const std::vector<std::string>& ns) {
                        for (const auto& n : ns) {
                            if (hay.find(n) == std::string::npos) return false;
                        }
                        return true;
                    };
                    if (!last_user.empty() && (!last || !has(last->text, last_user))) return false;
                    return has(all, any) && has(sys, system);
                },
                rule.at("reply").get<std::string>());
        }
        if (script.contains("otherwise")) backend->otherwise(script.at("otherwise").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("bad script: ") + e.what());
    }
    return backend;
}

std::shared_ptr<ScriptedBackend> load_scripted_backend(const std::filesystem::path& path) {
    try {
        return scripted_backend_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

}  // namespace tutorloop::llm
