#pragma once

#include "tutorloop/evidence_store.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/metrics.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/tutor.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace tutorloop {

struct ServiceOptions {
    // Scored pairs written by `eval scoring`, served as the scoring report.
    std::optional<std::filesystem::path> scored_pairs_path;
    // Labels written by `judge run`, served as the faithfulness report and
    // session timelines.
    std::optional<std::filesystem::path> labels_path;
    metrics::BootstrapOptions bootstrap;
    TutorOptions tutor;
};

// HTTP status for an error tag: 404 unknown ids, 409 session conflicts,
// 502 backend failures, 500 storage, 422 everything else.
int http_status_for(const std::exception& error);
nlohmann::ordered_json error_body(const std::exception& error);

nlohmann::ordered_json to_json(const Utterance& u);
nlohmann::ordered_json to_json(const SessionState& s);

// Report texts shared by the CLI and the HTTP API so both render the same
// bytes from the same files.
std::string scoring_report_text(const std::filesystem::path& scored_pairs, const metrics::BootstrapOptions& options);
std::string faithfulness_report_text(const std::filesystem::path& labels, const metrics::BootstrapOptions& options);

class Service {
public:
    Service(const PackRegistry& registry, EvidenceStore& store, llm::LlmClient& tutor_llm,
            ServiceOptions options = {});

    void install(httplib::Server& server);
    SessionManager& sessions() { return sessions_; }

private:
    const PackRegistry& registry_;
    EvidenceStore& store_;
    ServiceOptions options_;
    SessionManager sessions_;
};

}  // namespace tutorloop
