// Regenerates the bundled replay recordings and the derived data files
// (conversation log, judge labels, scored pairs) from the scripted backends
// in data/fixtures. With --check, regenerates into a scratch directory and
// fails if anything differs from what is checked in.

#include "tutorloop/errors.hpp"
#include "tutorloop/evidence_store.hpp"
#include "tutorloop/grader.hpp"
#include "tutorloop/judge.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/pipeline.hpp"
#include "tutorloop/reports.hpp"
#include "tutorloop/text_util.hpp"
#include "tutorloop/tutor.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using namespace tutorloop;
using json = nlohmann::json;

namespace {

// Deterministic timestamps: one second apart from a fixed start.
EvidenceStore::Clock fixed_clock() {
    auto tick = std::make_shared<int>(0);
    return [tick] {
        const int t = (*tick)++;
        char buf[32];
        std::snprintf(buf, sizeof buf, "2026-03-02T09:%02d:%02dZ", (t / 60) % 60, t % 60);
        return std::string(buf);
    };
}

llm::LlmClient recording_client(const fs::path& script, const fs::path& recordings, llm::ModelConfig config) {
    auto backend = std::make_shared<llm::RecordingBackend>(llm::load_scripted_backend(script), recordings);
    return llm::LlmClient(backend, std::move(config));
}

const GradeRecord& grade_of(const std::vector<GradeRecord>& grades, const std::string& student) {
    for (const auto& g : grades) {
        if (g.student_id == student) return g;
    }
    throw ValidationError("no grade for " + student);
}

void generate(const fs::path& data, const fs::path& out) {
    const auto registry = PackRegistry::load_dir(data / "packs");
    const auto& fa2 = registry.resolve("FA2");
    const auto& fa4 = registry.resolve("FA4");
    const auto fixtures = data / "fixtures";
    const auto recordings = out / "recordings";
    fs::create_directories(recordings);
    fs::create_directories(out / "logs");
    fs::create_directories(out / "labels");
    fs::create_directories(out / "eval");

    // Grading at every stage, plus the scored pairs for the scoring report.
    auto grader = recording_client(fixtures / "grader_script.json", recordings, llm::ModelConfig::grading_defaults());
    const auto fa2_responses = load_responses(data / "responses" / "fa2_responses.jsonl");
    const auto fa4_responses = load_responses(data / "responses" / "fa4_responses.jsonl");
    const auto ledger = ErrorLedger::load(data / "ledgers" / "fa2_ledger.json");
    const PipelineStage stages[] = {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL};
    const auto eval = run_scoring_eval(fa2, fa2_responses, stages, ledger, grader, &registry);
    if (!eval.failures.empty()) throw ValidationError("scripted grading failed for " + eval.failures[0].second.response_id);
    write_file(out / "eval" / "fa2_scored_pairs.jsonl", scored_pairs_to_jsonl(eval.pairs));

    const auto fa2_grades = batch_grade(fa2, fa2_responses, PipelineStage::CoT, ledger, grader, &registry).records;
    const auto fa4_grades = batch_grade(fa4, fa4_responses, PipelineStage::CoT, ErrorLedger{}, grader, &registry).records;
    if (fa2_grades.size() != fa2_responses.size() || fa4_grades.size() != fa4_responses.size()) {
        throw ValidationError("scripted CoT grading is incomplete");
    }

    // The replayed tutor session: one student, six turns, then close.
    {
        auto tutor = recording_client(fixtures / "tutor_script.json", recordings, llm::ModelConfig::grading_defaults());
        const auto script = json::parse(read_file(fixtures / "tutor_session.json"));
        const auto student = script.at("student_id").get<std::string>();
        EvidenceStore store;
        GradeWriter(store).append(grade_of(fa2_grades, student), fa2.rubric);
        SessionManager manager(store, registry, tutor, TutorOptions{.registry = &registry});
        const auto opened = manager.start(student, script.at("assessment_id").get<std::string>());
        for (const auto& text : script.at("turns")) manager.turn(opened.state.session_id, text.get<std::string>());
        manager.close(opened.state.session_id);
    }

    // Conversation log with fixed ids and timestamps.
    const auto log_path = out / "logs" / "conversations.jsonl";
    fs::remove(log_path);
    {
        auto clock = fixed_clock();
        EvidenceStore store(log_path, clock);
        GradeWriter writer(store);
        for (const auto& g : fa2_grades) writer.append(g, fa2.rubric);
        for (const auto& g : fa4_grades) writer.append(g, fa4.rubric);
        DialogueChannel channel(store);
        for (const auto& d : json::parse(read_file(fixtures / "dialogues.json"))) {
            const auto sid = d.at("session_id").get<std::string>();
            const auto student = d.at("student_id").get<std::string>();
            channel.append_session_start(student, {sid, d.at("assessment_id").get<std::string>()});
            int turn = 0, agent = 0, learner = 0;
            for (const auto& text : d.at("turns")) {
                Utterance u;
                u.session_id = sid;
                u.turn_index = ++turn;
                u.speaker = turn % 2 ? Speaker::Agent : Speaker::Student;
                (u.speaker == Speaker::Agent ? agent : learner)++;
                u.text = text.get<std::string>();
                u.created_at = clock();
                channel.append_utterance(student, u);
            }
            channel.append_session_summary(student, {sid, d.at("assessment_id").get<std::string>(), agent, learner});
        }
    }

    // Judge labels over the log.
    {
        auto judge = recording_client(fixtures / "judge_script.json", recordings, llm::ModelConfig::judge_defaults());
        const auto log = parse_evidence_jsonl(read_file(log_path));
        const auto prompts = JudgePrompts::load_dir(data / "judge_prompts");
        const auto constructs = parse_construct_list("all");
        const auto run = judge_conversations(log, registry, constructs, prompts, judge);
        write_file(out / "labels" / "conversations_labels.jsonl", judge_run_to_jsonl(run));
    }
}

std::set<std::string> listing(const fs::path& dir) {
    std::set<std::string> out;
    if (!fs::is_directory(dir)) return out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out.insert(fs::relative(e.path(), dir).generic_string());
    }
    return out;
}

int check(const fs::path& data) {
    const auto scratch = fs::temp_directory_path() / ("tutorloop-fixtures-" + random_token_128());
    generate(data, scratch);
    int mismatches = 0;
    for (const char* sub : {"recordings", "logs", "labels", "eval"}) {
        const auto fresh = listing(scratch / sub);
        const auto stored = listing(data / sub);
        for (const auto& f : fresh) {
            if (!stored.count(f)) {
                std::cerr << "missing: " << sub << "/" << f << "\n";
                ++mismatches;
            } else if (read_file(scratch / sub / f) != read_file(data / sub / f)) {
                std::cerr << "differs: " << sub << "/" << f << "\n";
                ++mismatches;
            }
        }
        for (const auto& f : stored) {
            if (!fresh.count(f)) {
                std::cerr << "stale: " << sub << "/" << f << "\n";
                ++mismatches;
            }
        }
    }
    fs::remove_all(scratch);
    if (mismatches) {
        std::cerr << mismatches << " fixture file(s) out of date; run make_fixtures\n";
        return 1;
    }
    std::cout << "fixtures up to date\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Regenerate replay fixtures"};
    std::string data = TUTORLOOP_DATA_DIR;
    bool check_only = false;
    app.add_option("--data", data, "Data directory");
    app.add_flag("--check", check_only, "Compare a fresh generation with the checked-in files");
    CLI11_PARSE(app, argc, argv);
    try {
        if (check_only) return check(data);
        fs::remove_all(fs::path(data) / "recordings");
        generate(data, data);
        std::cout << "fixtures written under " << data << "\n";
    } catch (const Error& e) {
        std::cerr << "error: " << e.tag() << ": " << e.what() << "\n";
        return 1;
    }
    return 0;
}
