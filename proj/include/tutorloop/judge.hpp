#pragma once

#include "tutorloop/evidence_store.hpp"
#include "tutorloop/knowledge_graph.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/metrics.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/tutor.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace tutorloop {

enum class ConstructTag { ZPD, SE, GS, R, OT, C };
enum class ConstructKind { Theoretical, Teacher };
enum class ConstructScope { InitialUtteranceOnly, AllUtterances };

struct Construct {
    ConstructTag tag;
    ConstructKind kind;
    metrics::Codomain codomain;
    ConstructScope scope;
    const char* name;
};

// The six constructs in reporting order.
const std::array<Construct, 6>& all_constructs();
const Construct& construct_info(ConstructTag tag);
std::string to_string(ConstructTag tag);
ConstructTag parse_construct(std::string_view text);
// "all" or a comma list such as "SE,GS".
std::vector<ConstructTag> parse_construct_list(std::string_view text);
bool in_codomain(ConstructTag tag, int label);

struct ConstructLabel {
    std::string session_id;
    int turn_index = 0;
    std::string student_id;
    std::string assessment_id;
    ConstructTag construct = ConstructTag::SE;
    int label = 0;
    std::string explanation;  // empty for R
    std::string judge_model_fingerprint;

    bool operator==(const ConstructLabel&) const = default;
};

nlohmann::ordered_json to_json(const ConstructLabel& label);
ConstructLabel label_from_json(const nlohmann::ordered_json& j);
std::string labels_to_jsonl(std::span<const ConstructLabel> labels);
std::vector<ConstructLabel> parse_labels_jsonl(std::string_view text);

// ---------------------------------------------------------------------------
// ZPD

// Unmastered nodes whose prerequisites are mastered, judged from the grade's
// criterion alignments. No grade evidence at all yields the source nodes.
// GraphAssessmentMismatch when the snapshot holds grades but none for the
// graph's assessment.
std::set<std::string> compute_frontier(const KnowledgeGraph& graph, const EvidenceSnapshot& snapshot);
std::set<std::string> compute_frontier(const KnowledgeGraph& graph, const GradeRecord* grade);
std::set<std::string> compute_mastered(const KnowledgeGraph& graph, const GradeRecord* grade);

struct ZpdDecision {
    int label = -1;
    std::string rule;
};

// Fixed three-leaf tree: any target on the frontier -> 1; all targets
// already mastered -> 0; anything else (ahead of the frontier, no target)
// -> -1.
ZpdDecision zpd_decide(const std::set<std::string>& frontier, const std::set<std::string>& mastered,
                       const std::set<std::string>& targets);

struct ZpdContext {
    const KnowledgeGraph* graph = nullptr;
    std::set<std::string> mastered;
    std::set<std::string> frontier;
};

// ---------------------------------------------------------------------------
// LLM judges

// Versioned judge instructions, files named <TAG>.v<N>.txt. The highest
// version of each construct is used unless pinned.
class JudgePrompts {
public:
    static JudgePrompts load_dir(const std::filesystem::path& dir,
                                 const std::map<ConstructTag, int>& pinned = {});
    const std::string& text(ConstructTag tag) const;
    int version(ConstructTag tag) const;

private:
    std::map<ConstructTag, std::pair<int, std::string>> prompts_;
};

// Parses the terminal "LABEL: x" line; throws UnparseableVerdict.
ConstructLabel parse_verdict(std::string_view raw, ConstructTag tag);
// Parses "TARGETS: a, b" or "TARGETS: NONE" against the graph.
std::set<std::string> parse_targets(std::string_view raw, const KnowledgeGraph& graph, std::string& explanation);

struct DialogueTurn {
    Speaker speaker = Speaker::Agent;
    std::string text;
};

ConstructLabel judge_zpd(const Utterance& opening, const ZpdContext& context, const JudgePrompts& prompts,
                         llm::LlmClient& llm);

ConstructLabel judge_utterance(const Utterance& utterance, std::span<const DialogueTurn> preceding,
                               ConstructTag construct, const ConstructDirectives& directives,
                               const JudgePrompts& prompts, llm::LlmClient& llm);

// Readability label from FKGL; no model involved.
ConstructLabel judge_readability(const Utterance& utterance);

struct JudgeFailure {
    std::string session_id;
    int turn_index = 0;
    std::string student_id;
    std::string assessment_id;
    ConstructTag construct = ConstructTag::SE;
    std::string error_tag;
    std::string message;

    bool operator==(const JudgeFailure&) const = default;
};

struct JudgeRun {
    std::vector<ConstructLabel> labels;  // by session (log order), turn, construct
    std::vector<JudgeFailure> failures;
};

struct JudgeOptions {
    unsigned parallelism = 4;
};

// Labels every agent utterance in an evidence log: ZPD on each session's
// opening, the others on every agent turn. Failed calls are recorded and
// left out. EmptyInput when the log has no agent utterances.
JudgeRun judge_conversations(std::span<const EvidenceItem> log, const PackRegistry& registry,
                             std::span<const ConstructTag> constructs, const JudgePrompts& prompts,
                             llm::LlmClient& llm, const JudgeOptions& options = {});

nlohmann::ordered_json to_json(const JudgeFailure& failure);
JudgeFailure failure_from_json(const nlohmann::ordered_json& j);
// Labels file: one record per line; failed calls carry an "error_tag" field.
std::string judge_run_to_jsonl(const JudgeRun& run);
JudgeRun parse_judge_run_jsonl(std::string_view text);

// ---------------------------------------------------------------------------
// Validation gate

inline constexpr double kJudgeAcceptKappa = 0.7;
inline constexpr std::size_t kValidationSampleSize = 50;

// Stratified by (assessment, judge label) for one construct.
std::vector<ConstructLabel> sample_for_validation(std::span<const ConstructLabel> labels, ConstructTag construct,
                                                  std::size_t per_judge_n = kValidationSampleSize,
                                                  std::uint64_t seed = 312);

struct HumanLabel {
    std::string session_id;
    int turn_index = 0;
    ConstructTag construct = ConstructTag::SE;
    int label = 0;
};
std::vector<HumanLabel> parse_human_labels_jsonl(std::string_view text);

struct ValidationRun {
    ConstructTag construct = ConstructTag::SE;
    std::vector<std::pair<std::string, int>> refs;  // (session, turn)
    std::vector<int> human;
    std::vector<int> judge;
    double kappa = 0.0;
    bool pass = false;
    int iteration = 1;
};

// Labels map to ordinals by offset from the codomain minimum (-1,0,1 ->
// 0,1,2). CoverageGap when a sampled utterance lacks a human label.
ValidationRun validate_judge(std::span<const ConstructLabel> sample, std::span<const HumanLabel> human,
                             ConstructTag construct, int iteration = 1);
std::string render_validation_run(const ValidationRun& run);

// ---------------------------------------------------------------------------
// Case timeline

struct CaseTimeline {
    std::string session_id;
    std::string assessment_id;
    std::vector<int> turns;  // agent turn indices, in order
    std::map<ConstructTag, std::vector<std::optional<int>>> rows;
};

CaseTimeline export_case_timeline(std::span<const EvidenceItem> log, const std::string& session_id,
                                  std::span<const ConstructLabel> labels);
nlohmann::ordered_json to_json(const CaseTimeline& timeline);
std::string render_timeline(const CaseTimeline& timeline);

}  // namespace tutorloop
