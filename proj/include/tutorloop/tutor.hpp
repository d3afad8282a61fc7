#pragma once

#include "tutorloop/evidence_store.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/pack.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace tutorloop {

// Six instruction blocks steering the tutor. Texts are templates; the
// placeholders {score}, {max_score}, {score_label}, {unmet_criteria} and
// {frontier} are filled from the student's grade when the prompt is built.
struct ConstructDirectives {
    std::string zpd_text;
    std::string se_text;
    std::string gs_text;
    std::string readability_text;
    std::string on_task_text;
    std::string consistency_text;

    bool operator==(const ConstructDirectives&) const = default;

    static ConstructDirectives defaults();
    // Defaults overlaid with the pack's DIRECTIVES section.
    static ConstructDirectives for_pack(const AssessmentPack& pack);
};

// Text the consistency block must carry, e.g. "score: 1".
std::string stored_score_marker(int score);

// Deterministic system prompt: curriculum, task, rubric evidence statements,
// grade evidence, other assessments (summarized), then the six directive
// blocks. The stored score appears as "score: N" once, in the consistency
// block. Throws NoGradeEvidence when the snapshot lacks the pack's grade.
std::string assemble_system_prompt(const AssessmentPack& pack, const EvidenceSnapshot& snapshot,
                                   const ConstructDirectives& directives,
                                   const PackRegistry* registry = nullptr);

enum class SessionStatus { Open, Closed };
std::string to_string(SessionStatus s);

struct SessionState {
    std::string session_id;
    std::string student_id;
    std::string assessment_id;
    std::shared_ptr<const AssessmentPack> pack;
    EvidenceSnapshot snapshot_at_open;
    std::vector<Utterance> transcript;
    SessionStatus status = SessionStatus::Open;
    std::string created_at;

    // True when the last student utterance has no reply yet (a failed turn).
    bool awaiting_reply() const {
        return !transcript.empty() && transcript.back().speaker == Speaker::Student;
    }
};

struct TutorOptions {
    std::size_t window = kDefaultUtteranceWindow;
    const PackRegistry* registry = nullptr;
    std::optional<ConstructDirectives> directives;  // pack directives when unset
};

// Chat messages for the next agent reply: system prompt, a fixed kickoff
// user message, then this session's utterances from the snapshot window.
std::vector<llm::Message> tutor_messages(const SessionState& state, const EvidenceSnapshot& snapshot,
                                         const TutorOptions& options);

struct OpenedSession {
    SessionState state;
    Utterance opening;
};

OpenedSession start_session(const std::string& student_id, std::shared_ptr<const AssessmentPack> pack,
                            DialogueChannel& channel, llm::LlmClient& llm, const TutorOptions& options = {});

// Persists the student's utterance, then generates and persists the reply.
// If the reply fails the student's utterance stays stored and the session
// waits for retry_reply.
Utterance next_turn(SessionState& state, const std::string& student_text, DialogueChannel& channel,
                    llm::LlmClient& llm, const TutorOptions& options = {});
Utterance retry_reply(SessionState& state, DialogueChannel& channel, llm::LlmClient& llm,
                      const TutorOptions& options = {});

SessionState close_session(SessionState& state, DialogueChannel& channel);

// Live sessions by id. At most one turn runs per session; a second
// concurrent request fails fast with SessionBusy.
class SessionManager {
public:
    SessionManager(EvidenceStore& store, const PackRegistry& registry, llm::LlmClient& llm,
                   TutorOptions options = {});

    OpenedSession start(const std::string& student_id, const std::string& assessment_ref);
    Utterance turn(const std::string& session_id, const std::string& student_text);
    Utterance retry(const std::string& session_id);
    SessionState close(const std::string& session_id);
    SessionState get(const std::string& session_id) const;

private:
    struct Entry {
        std::mutex turn_mutex;
        mutable std::mutex state_mutex;
        SessionState state;
    };
    std::shared_ptr<Entry> entry(const std::string& session_id) const;
    template <typename Fn>
    auto exclusive(const std::string& session_id, Fn&& fn);
    void recover();

    EvidenceStore& store_;
    const PackRegistry& registry_;
    llm::LlmClient& llm_;
    TutorOptions options_;
    DialogueChannel channel_;
    mutable std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

}  // namespace tutorloop
