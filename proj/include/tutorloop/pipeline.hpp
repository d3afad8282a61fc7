#pragma once

#include "tutorloop/pack.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tutorloop {

// Prompting stages, in increasing order of context.
enum class PipelineStage { IO = 0, ICL = 1, CoT = 2, AL = 3 };

std::string to_string(PipelineStage stage);
PipelineStage parse_pipeline_stage(std::string_view text);

struct PromptBlock {
    std::string id;     // stable identity, e.g. "rubric:FA2", "exemplar:ex-max"
    std::string title;
    std::string body;

    bool operator==(const PromptBlock&) const = default;
};

struct GradingPrompt {
    PipelineStage stage = PipelineStage::IO;
    std::string system_text;
    std::vector<PromptBlock> context_blocks;   // curriculum, task, rubric, guidelines
    std::vector<PromptBlock> exemplar_blocks;
    std::vector<PromptBlock> revision_blocks;  // AL only
    std::string output_contract_text;

    bool operator==(const GradingPrompt&) const = default;

    std::vector<std::string> block_ids() const;
    // Everything but the system text, ready to be followed by a response.
    std::string instructions() const;
    std::string user_message(std::string_view response_text) const;
    // Full human-readable form, used by `pipeline build`.
    std::string render() const;
};

enum class ErrorDirection { Over, Under };

std::string to_string(ErrorDirection d);
ErrorDirection parse_direction(std::string_view text);

struct LedgerEntry {
    std::string response_id;
    int human_score = 0;
    int llm_score = 0;
    std::string criterion_id;
    ErrorDirection direction = ErrorDirection::Over;
    std::string note;

    bool operator==(const LedgerEntry&) const = default;
};

enum class RevisionKind { Guideline, RubricClarification, Exemplar };

std::string to_string(RevisionKind k);
RevisionKind parse_revision_kind(std::string_view text);

struct Revision {
    RevisionKind kind = RevisionKind::Guideline;
    std::string text;
    std::string created_for_trend;  // "<criterion>:<direction>"
    std::optional<FewShotExample> exemplar;  // required for Exemplar revisions

    bool operator==(const Revision&) const = default;
};

struct Trend {
    std::string criterion_id;
    ErrorDirection direction = ErrorDirection::Over;
    std::vector<std::string> supporting_entry_ids;

    bool operator==(const Trend&) const = default;

    std::string key() const { return criterion_id + ":" + to_string(direction); }
};

// Mis-scoring log kept by whoever engineers the prompts. Append-only.
class ErrorLedger {
public:
    const std::vector<LedgerEntry>& entries() const { return entries_; }
    const std::vector<Revision>& revisions() const { return revisions_; }

    // Throws ValidationError when direction disagrees with the score delta.
    void add_entry(LedgerEntry entry);
    void add_revision(Revision revision);

    static ErrorLedger parse(std::string_view json_text);
    static ErrorLedger load(const std::filesystem::path& path);
    std::string serialize() const;

    bool operator==(const ErrorLedger&) const = default;

private:
    std::vector<LedgerEntry> entries_;
    std::vector<Revision> revisions_;
};

inline constexpr int kDefaultTrendSupport = 3;
inline constexpr std::size_t kDefaultValidationSetSize = 20;

// Throws MissingExemplars when stage >= ICL and the pack lacks zero- and
// full-credit exemplars; UnknownAssessment when a dependency cannot be
// resolved through `registry`.
GradingPrompt build_grading_prompt(const AssessmentPack& pack, PipelineStage stage,
                                   const ErrorLedger& ledger,
                                   const PackRegistry* registry = nullptr);

// Groups entries by (criterion, direction); a group with at least
// `min_support` entries is a trend. Sorted by support desc, then criterion.
std::vector<Trend> detect_error_trends(const ErrorLedger& ledger,
                                       int min_support = kDefaultTrendSupport);

// Returns a copy of the ledger with the revision appended and linked to the
// trend. Throws UnknownTrend if the trend does not describe this ledger.
ErrorLedger apply_revision(const ErrorLedger& ledger, const Trend& trend, Revision revision);

}  // namespace tutorloop
