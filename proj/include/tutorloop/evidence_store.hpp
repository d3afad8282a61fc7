#pragma once

#include "tutorloop/grader.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace tutorloop {

enum class Speaker { Agent, Student };
std::string to_string(Speaker s);
Speaker parse_speaker(std::string_view text);

struct Utterance {
    std::string session_id;
    int turn_index = 0;  // 1-based; agent on odd turns
    Speaker speaker = Speaker::Agent;
    std::string text;
    std::string created_at;

    bool operator==(const Utterance&) const = default;
};

struct SessionStart {
    std::string session_id;
    std::string assessment_id;

    bool operator==(const SessionStart&) const = default;
};

struct SessionSummary {
    std::string session_id;
    std::string assessment_id;
    int agent_turns = 0;
    int student_turns = 0;

    bool operator==(const SessionSummary&) const = default;
};

enum class EvidenceKind { Grade, StudentUtterance, AgentUtterance, SessionStart, SessionSummary };
std::string to_string(EvidenceKind k);
EvidenceKind parse_evidence_kind(std::string_view text);

struct EvidenceItem {
    std::string student_id;
    EvidenceKind kind = EvidenceKind::Grade;
    std::uint64_t sequence_no = 0;
    std::string created_at;
    std::variant<GradeRecord, Utterance, SessionStart, SessionSummary> payload;

    bool operator==(const EvidenceItem&) const = default;
    bool is_utterance() const {
        return kind == EvidenceKind::StudentUtterance || kind == EvidenceKind::AgentUtterance;
    }
};

nlohmann::ordered_json to_json(const EvidenceItem& item);
EvidenceItem evidence_from_json(const nlohmann::ordered_json& j);
std::vector<EvidenceItem> parse_evidence_jsonl(std::string_view text);
std::string evidence_to_jsonl(std::span<const EvidenceItem> items);

struct CriterionMastery {
    bool met = false;       // per the latest grade
    int times_met = 0;      // across every grade for the assessment
    int times_graded = 0;

    bool operator==(const CriterionMastery&) const = default;
};

struct EvidenceSnapshot {
    std::string student_id;
    std::map<std::string, GradeRecord> latest_grades;  // by assessment id
    std::vector<Utterance> recent_utterances;          // oldest first
    std::map<std::string, std::map<std::string, CriterionMastery>> mastery;  // assessment -> criterion
    std::uint64_t through_sequence_no = 0;

    bool operator==(const EvidenceSnapshot&) const = default;
    bool empty() const { return through_sequence_no == 0; }
    const GradeRecord* grade_for(const std::string& assessment_id) const;
};

inline constexpr std::size_t kDefaultUtteranceWindow = 30;

// Pure fold over one student's items in sequence order.
EvidenceSnapshot fold_snapshot(const std::string& student_id, std::span<const EvidenceItem> items,
                               std::size_t window = kDefaultUtteranceWindow);

// Append-only evidence log. With a path, every item is written and fsynced
// before append returns; without one the store is memory-only. Appends are
// serialized; reads run concurrently.
class EvidenceStore {
public:
    using Clock = std::function<std::string()>;

    EvidenceStore();
    explicit EvidenceStore(std::filesystem::path log_path, Clock clock = {});

    EvidenceStore(const EvidenceStore&) = delete;
    EvidenceStore& operator=(const EvidenceStore&) = delete;

    // Appends a non-grade item; sequence_no and created_at are assigned here.
    // Grade items must come through GradeWriter (ValidationError otherwise).
    std::uint64_t append_evidence(EvidenceItem item);

    EvidenceSnapshot snapshot_for_prompt(const std::string& student_id,
                                         std::size_t window = kDefaultUtteranceWindow) const;
    std::vector<EvidenceItem> items_for(const std::string& student_id) const;
    // Every item in global append order.
    std::vector<EvidenceItem> all_items() const;
    std::vector<std::string> students() const;
    std::optional<GradeRecord> latest_grade(const std::string& student_id,
                                            const std::string& assessment_id) const;
    // Latest grade of every student for one assessment, by student id.
    std::vector<GradeRecord> latest_grades_for(const std::string& assessment_id) const;
    // Exactly the bytes of the log file (also kept for memory-only stores).
    std::string serialized_log() const;
    std::string export_jsonl(const std::optional<std::string>& student_id) const;

private:
    friend class GradeWriter;
    std::uint64_t append_locked(EvidenceItem item);
    void load();

    std::optional<std::filesystem::path> path_;
    Clock clock_;
    mutable std::shared_mutex mutex_;
    std::vector<EvidenceItem> items_;
    std::string log_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> by_student_;
};

// The only write path for grade items.
class GradeWriter {
public:
    explicit GradeWriter(EvidenceStore& store) : store_(store) {}
    std::uint64_t append(const GradeRecord& record, const Rubric& rubric);

private:
    EvidenceStore& store_;
};

// The tutor's view of the store: reads plus dialogue appends, no grade writes.
class DialogueChannel {
public:
    explicit DialogueChannel(EvidenceStore& store) : store_(store) {}

    std::uint64_t append_utterance(const std::string& student_id, const Utterance& u);
    std::uint64_t append_session_start(const std::string& student_id, const SessionStart& s);
    std::uint64_t append_session_summary(const std::string& student_id, const SessionSummary& s);

    EvidenceSnapshot snapshot(const std::string& student_id,
                              std::size_t window = kDefaultUtteranceWindow) const {
        return store_.snapshot_for_prompt(student_id, window);
    }
    std::optional<GradeRecord> latest_grade(const std::string& student_id,
                                            const std::string& assessment_id) const {
        return store_.latest_grade(student_id, assessment_id);
    }

private:
    EvidenceStore& store_;
};

}  // namespace tutorloop
