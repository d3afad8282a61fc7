#include "tutorloop/service.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/judge.hpp"
#include "tutorloop/reports.hpp"
#include "tutorloop/text_util.hpp"

#include <httplib.h>

namespace tutorloop {

using json = nlohmann::ordered_json;

int http_status_for(const std::exception& error) {
    const auto* e = dynamic_cast<const Error*>(&error);
    if (!e) return 500;
    if (dynamic_cast<const BackendError*>(e)) return 502;
    const auto& tag = e->tag();
    if (tag == "UnknownSession" || tag == "UnknownAssessment" || tag == "NotFound") return 404;
    if (tag == "SessionBusy" || tag == "SessionClosed") return 409;
    if (tag == "StorageError") return 500;
    return 422;
}

json error_body(const std::exception& error) {
    const auto* e = dynamic_cast<const Error*>(&error);
    return json{{"error", e ? e->tag() : std::string("InternalError")}, {"message", error.what()}};
}

json to_json(const Utterance& u) {
    return json{{"session_id", u.session_id},
                {"turn_index", u.turn_index},
                {"speaker", to_string(u.speaker)},
                {"text", u.text},
                {"created_at", u.created_at}};
}

json to_json(const SessionState& s) {
    json transcript = json::array();
    for (const auto& u : s.transcript) transcript.push_back(to_json(u));
    return json{{"session_id", s.session_id},
                {"student_id", s.student_id},
                {"assessment_id", s.assessment_id},
                {"created_at", s.created_at},
                {"status", to_string(s.status)},
                {"awaiting_reply", s.awaiting_reply()},
                {"transcript", std::move(transcript)}};
}

std::string scoring_report_text(const std::filesystem::path& scored_pairs, const metrics::BootstrapOptions& options) {
    const auto pairs = parse_scored_pairs_jsonl(read_file(scored_pairs));
    return render_scoring_report(scoring_report(pairs, options));
}

std::string faithfulness_report_text(const std::filesystem::path& labels, const metrics::BootstrapOptions& options) {
    return render_faithfulness_report(faithfulness_report(parse_judge_run_jsonl(read_file(labels)), options));
}

namespace {

class NotFound : public Error {
public:
    explicit NotFound(const std::string& message) : Error("NotFound", message) {}
};

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const std::exception& e) {
            send_json(res, error_body(e), http_status_for(e));
        }
    };
}

json parse_body(const httplib::Request& req) {
    try {
        auto j = json::parse(req.body.empty() ? std::string("{}") : req.body);
        if (!j.is_object()) throw ParseError("request body must be a JSON object");
        return j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("request body is not JSON: ") + e.what());
    }
}

std::string required_string(const json& body, const char* key) {
    if (!body.contains(key) || !body[key].is_string() || trim(body[key].get<std::string>()).empty()) {
        throw ValidationError(std::string("field '") + key + "' is required");
    }
    return body[key].get<std::string>();
}

}  // namespace

Service::Service(const PackRegistry& registry, EvidenceStore& store, llm::LlmClient& tutor_llm, ServiceOptions options)
    : registry_(registry),
      store_(store),
      options_(std::move(options)),
      sessions_(store, registry, tutor_llm, options_.tutor) {}

void Service::install(httplib::Server& server) {
    server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, json{{"status", "ok"}});
    });

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto student = required_string(body, "student");
        const auto assessment = required_string(body, "assessment");
        auto opened = sessions_.start(student, assessment);
        json out = to_json(opened.state);
        out["opening"] = to_json(opened.opening);
        send_json(res, out, 201);
    }));

    server.Get(R"(/sessions/([A-Za-z0-9_-]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(sessions_.get(req.matches[1].str())));
    }));

    server.Post(R"(/sessions/([A-Za-z0-9_-]+)/messages)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto text = required_string(body, "text");
        const auto reply = sessions_.turn(req.matches[1].str(), text);
        send_json(res, json{{"session_id", reply.session_id}, {"reply", to_json(reply)}});
    }));

    server.Post(R"(/sessions/([A-Za-z0-9_-]+)/retry)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto reply = sessions_.retry(req.matches[1].str());
        send_json(res, json{{"session_id", reply.session_id}, {"reply", to_json(reply)}});
    }));

    server.Post(R"(/sessions/([A-Za-z0-9_-]+)/close)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(sessions_.close(req.matches[1].str())));
    }));

    server.Get(R"(/sessions/([A-Za-z0-9_-]+)/timeline)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        if (!options_.labels_path) throw NotFound("no labels file configured");
        const auto run = parse_judge_run_jsonl(read_file(*options_.labels_path));
        const auto items = store_.all_items();
        const auto timeline = export_case_timeline(items, req.matches[1].str(), run.labels);
        json out = to_json(timeline);
        out["text"] = render_timeline(timeline);
        send_json(res, out);
    }));

    server.Get(R"(/students/([^/]+)/evidence)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const std::string student = req.matches[1].str();
        if (req.get_param_value("format") == "jsonl") {
            res.set_content(store_.export_jsonl(student), "application/x-ndjson");
            return;
        }
        json items = json::array();
        for (const auto& item : store_.items_for(student)) items.push_back(to_json(item));
        send_json(res, json{{"student_id", student}, {"items", std::move(items)}});
    }));

    server.Get("/grades", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const std::string assessment = req.get_param_value("assessment");
        if (assessment.empty()) throw ValidationError("query parameter 'assessment' is required");
        const auto& pack = registry_.resolve(assessment);
        json grades = json::array();
        for (const auto& g : store_.latest_grades_for(pack.assessment_id())) grades.push_back(to_json(g));
        send_json(res, json{{"assessment_id", pack.assessment_id()}, {"grades", std::move(grades)}});
    }));

    server.Get("/reports/scoring", guarded([this](const httplib::Request&, httplib::Response& res) {
        if (!options_.scored_pairs_path) throw NotFound("no scored pairs file configured");
        const auto pairs = parse_scored_pairs_jsonl(read_file(*options_.scored_pairs_path));
        send_json(res, to_json(scoring_report(pairs, options_.bootstrap)));
    }));

    server.Get("/reports/faithfulness", guarded([this](const httplib::Request&, httplib::Response& res) {
        if (!options_.labels_path) throw NotFound("no labels file configured");
        const auto run = parse_judge_run_jsonl(read_file(*options_.labels_path));
        send_json(res, to_json(faithfulness_report(run, options_.bootstrap)));
    }));
}

}  // namespace tutorloop
