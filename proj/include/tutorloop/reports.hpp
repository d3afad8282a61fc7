#pragma once

#include "tutorloop/grader.hpp"
#include "tutorloop/judge.hpp"
#include "tutorloop/metrics.hpp"
#include "tutorloop/pipeline.hpp"

#include <json.hpp>

#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tutorloop {

// One human/machine score pair from a scoring evaluation.
struct ScoredPair {
    std::string assessment_id;
    PipelineStage stage = PipelineStage::IO;
    std::string response_id;
    int k = 3;  // levels on the assessment's scale
    int human = 0;
    int machine = 0;

    bool operator==(const ScoredPair&) const = default;
};

std::string scored_pairs_to_jsonl(std::span<const ScoredPair> pairs);
std::vector<ScoredPair> parse_scored_pairs_jsonl(std::string_view text);

struct ScoringEval {
    std::vector<ScoredPair> pairs;
    std::vector<std::pair<PipelineStage, GradeFailure>> failures;
};

// Grades every response at each stage. Responses without a human score are
// rejected (ValidationError).
ScoringEval run_scoring_eval(const AssessmentPack& pack, std::span<const StudentResponse> responses,
                             std::span<const PipelineStage> stages, const ErrorLedger& ledger, llm::LlmClient& llm,
                             const PackRegistry* registry = nullptr, unsigned parallelism = 4);

struct ScoringCell {
    std::size_t n = 0;
    metrics::AgreementReport f1;
    metrics::AgreementReport kappa;
};

struct ScoringReport {
    std::vector<PipelineStage> stages;
    std::vector<std::string> assessments;
    std::map<std::pair<PipelineStage, std::string>, ScoringCell> cells;
    metrics::BootstrapOptions bootstrap;
};

ScoringReport scoring_report(std::span<const ScoredPair> pairs, const metrics::BootstrapOptions& options = {});
// Stage x metric rows, assessment columns; values x100 as "point ± half-width".
std::string render_scoring_report(const ScoringReport& report);
nlohmann::ordered_json to_json(const ScoringReport& report);

struct FaithCell {
    std::size_t n = 0;
    metrics::FaithRates rates;
    metrics::AgreementReport f;
    metrics::AgreementReport unf;
};

struct FaithReport {
    std::vector<std::string> assessments;
    std::map<std::pair<std::string, ConstructTag>, FaithCell> cells;
    std::map<std::pair<std::string, ConstructTag>, std::size_t> excluded;
    metrics::BootstrapOptions bootstrap;
};

FaithReport faithfulness_report(const JudgeRun& run, const metrics::BootstrapOptions& options = {});
// Theoretical and teacher sections, one row per assessment, F and UNF per
// construct as "point ± half-width".
std::string render_faithfulness_report(const FaithReport& report);
nlohmann::ordered_json to_json(const FaithReport& report);

// "12.34 ± 5.67" from a report on the 0..1 or 0..100 scale.
std::string render_estimate(const metrics::AgreementReport& r, double scale);

}  // namespace tutorloop
