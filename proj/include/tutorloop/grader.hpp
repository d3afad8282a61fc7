#pragma once

#include "tutorloop/llm.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tutorloop {

struct StudentResponse {
    std::string response_id;
    std::string student_id;  // anonymous
    std::string assessment_id;
    std::string text;
    std::string submitted_at;
    std::optional<int> human_score;  // present in labelled evaluation files

    bool operator==(const StudentResponse&) const = default;
};

std::vector<StudentResponse> parse_responses_jsonl(std::string_view text);
std::vector<StudentResponse> load_responses(const std::filesystem::path& path);

struct CriterionAlignment {
    std::string criterion_id;
    bool met = false;
    std::optional<std::size_t> quote_index;  // 0-based into GradeRecord::quotes
    std::string rationale;

    bool operator==(const CriterionAlignment&) const = default;
};

// A scored response plus the quote -> criterion -> score chain that
// justifies it. Immutable once stored.
struct GradeRecord {
    std::string response_id;
    std::string student_id;
    std::string assessment_id;
    int score = 0;
    std::vector<std::string> quotes;
    std::vector<CriterionAlignment> criterion_alignments;
    std::string raw_model_output;
    PipelineStage stage = PipelineStage::CoT;
    std::string model_config_fingerprint;

    bool operator==(const GradeRecord&) const = default;
};

nlohmann::ordered_json to_json(const GradeRecord& record);
GradeRecord grade_from_json(const nlohmann::ordered_json& j);
// One record per line, stable field order.
std::string grades_to_jsonl(std::span<const GradeRecord> records);
std::vector<GradeRecord> parse_grades_jsonl(std::string_view text);

struct ParsedGrade {
    int score = 0;
    std::vector<std::string> quotes;
    std::vector<CriterionAlignment> alignments;
};

// Parses the QUOTES / RATIONALE / SCORE contract. Quotes are located with
// whitespace-insensitive matching and returned as the exact span of
// `response_text`. ParseError names the first violated rule;
// ScoreOutOfScale when the score is not on the rubric's scale.
ParsedGrade parse_grader_output(std::string_view raw, std::string_view response_text,
                                const Rubric& rubric);

// One grading call, reprompting once on a contract violation.
GradeRecord grade_response(const AssessmentPack& pack, const StudentResponse& response,
                           PipelineStage stage, const ErrorLedger& ledger, llm::LlmClient& llm,
                           const PackRegistry* registry = nullptr);

struct GradeFailure {
    std::string response_id;
    std::string error_tag;
    std::string message;
};

struct BatchResult {
    std::vector<GradeRecord> records;  // input order, failures skipped
    std::vector<GradeFailure> failures;
};

BatchResult batch_grade(const AssessmentPack& pack, std::span<const StudentResponse> responses,
                        PipelineStage stage, const ErrorLedger& ledger, llm::LlmClient& llm,
                        const PackRegistry* registry = nullptr, unsigned parallelism = 4);

}  // namespace tutorloop
