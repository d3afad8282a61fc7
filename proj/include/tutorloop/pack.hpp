#pragma once

#include "tutorloop/knowledge_graph.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tutorloop {

inline constexpr int kPackSchemaVersion = 1;

struct Ksa {
    std::string id;
    std::string statement;
    std::string standard;

    bool operator==(const Ksa&) const = default;
};

struct DomainModel {
    std::vector<Ksa> ksas;
    std::map<std::string, std::string> curriculum_notes;  // topic id -> prose

    bool operator==(const DomainModel&) const = default;
};

struct ScoreLevel {
    int ordinal = 0;
    std::string label;

    bool operator==(const ScoreLevel&) const = default;
};

struct ScoreScale {
    std::vector<ScoreLevel> levels;

    bool operator==(const ScoreScale&) const = default;

    int k() const { return static_cast<int>(levels.size()); }
    bool contains(int score) const { return score >= 0 && score < k(); }
    int max_score() const { return k() - 1; }
};

struct Criterion {
    std::string id;
    std::string ksa_id;
    std::string description;
    std::string evidence_statement;

    bool operator==(const Criterion&) const = default;
};

struct Rubric {
    std::vector<Criterion> criteria;
    ScoreScale scale;

    bool operator==(const Rubric&) const = default;

    const Criterion* find(std::string_view id) const;
};

struct TaskSpec {
    std::string assessment_id;
    std::string prompt_text;
    std::vector<std::string> context_dependencies;

    bool operator==(const TaskSpec&) const = default;
};

enum class ExampleStage { ICL, CoT, AL };

std::string to_string(ExampleStage stage);
ExampleStage parse_example_stage(std::string_view text);

// A labelled exemplar. ICL entries are bare (response + score); CoT and AL
// entries add the quote-and-align rationale. A CoT entry elaborating an ICL
// entry shares its id.
struct FewShotExample {
    std::string id;
    ExampleStage stage = ExampleStage::ICL;
    std::string student_response;
    int score = 0;
    std::optional<std::string> rationale;
    std::vector<std::string> quoted_spans;

    bool operator==(const FewShotExample&) const = default;
};

struct PackMetadata {
    std::string name;
    std::string version;
    std::string seed_salt;

    bool operator==(const PackMetadata&) const = default;
};

struct AssessmentPack {
    int schema_version = kPackSchemaVersion;
    PackMetadata metadata;
    DomainModel domain;
    Rubric rubric;
    TaskSpec task;
    std::vector<FewShotExample> examples;
    KnowledgeGraph knowledge_graph;
    // Optional overrides of the tutor's directive blocks, keyed zpd/se/gs/
    // readability/on_task/consistency.
    std::map<std::string, std::string> directives;

    bool operator==(const AssessmentPack&) const = default;

    const std::string& assessment_id() const { return task.assessment_id; }
};

struct Violation {
    std::string path;
    std::string message;

    bool operator==(const Violation&) const = default;
};

class PackRegistry;

// Checks every invariant of a pack in document order. With a registry, also
// resolves TASK dependencies and rejects dependency cycles.
std::vector<Violation> validate_pack(const AssessmentPack& pack,
                                     const PackRegistry* registry = nullptr);

AssessmentPack parse_pack(std::string_view text, const std::string& source = "<memory>");
AssessmentPack load_pack(const std::filesystem::path& path);
std::string serialize_pack(const AssessmentPack& pack);

std::string format_violations(const std::vector<Violation>& violations);

// Immutable-after-load set of packs, addressable by assessment id or pack name.
class PackRegistry {
public:
    PackRegistry() = default;

    static PackRegistry load_dir(const std::filesystem::path& dir);

    void add(AssessmentPack pack);

    const AssessmentPack* find(std::string_view assessment_id) const;
    const AssessmentPack* find_by_name(std::string_view name) const;
    // By pack name or assessment id; throws UnknownAssessment.
    const AssessmentPack& resolve(std::string_view ref) const;
    std::shared_ptr<const AssessmentPack> shared(std::string_view ref) const;

    const std::vector<std::shared_ptr<const AssessmentPack>>& packs() const { return packs_; }

    // Cross-pack violations: unresolved dependencies and cycles.
    std::vector<Violation> validate_dependencies() const;

private:
    std::vector<std::shared_ptr<const AssessmentPack>> packs_;
};

}  // namespace tutorloop
