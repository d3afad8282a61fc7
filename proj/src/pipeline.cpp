#include "tutorloop/pipeline.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <sstream>

namespace tutorloop {

using json = nlohmann::ordered_json;

std::string to_string(PipelineStage stage) {
    switch (stage) {
        case PipelineStage::IO: return "IO";
        case PipelineStage::ICL: return "ICL";
        case PipelineStage::CoT: return "CoT";
        case PipelineStage::AL: return "AL";
    }
    return "?";
}

PipelineStage parse_pipeline_stage(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "io" || t == "i/o") return PipelineStage::IO;
    if (t == "icl") return PipelineStage::ICL;
    if (t == "cot") return PipelineStage::CoT;
    if (t == "al") return PipelineStage::AL;
    throw ParseError("unknown pipeline stage '" + std::string(text) + "'");
}

std::string to_string(ErrorDirection d) { return d == ErrorDirection::Over ? "over" : "under"; }

ErrorDirection parse_direction(std::string_view text) {
    const auto t = to_lower(text);
    if (t == "over") return ErrorDirection::Over;
    if (t == "under") return ErrorDirection::Under;
    throw ParseError("unknown error direction '" + std::string(text) + "'");
}

std::string to_string(RevisionKind k) {
    switch (k) {
        case RevisionKind::Guideline: return "guideline";
        case RevisionKind::RubricClarification: return "rubric-clarification";
        case RevisionKind::Exemplar: return "exemplar";
    }
    return "?";
}

RevisionKind parse_revision_kind(std::string_view text) {
    const auto t = to_lower(text);
    if (t == "guideline") return RevisionKind::Guideline;
    if (t == "rubric-clarification") return RevisionKind::RubricClarification;
    if (t == "exemplar") return RevisionKind::Exemplar;
    throw ParseError("unknown revision kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// GradingPrompt rendering

std::vector<std::string> GradingPrompt::block_ids() const {
    std::vector<std::string> ids;
    for (const auto* group : {&context_blocks, &exemplar_blocks, &revision_blocks}) {
        for (const auto& b : *group) ids.push_back(b.id);
    }
    return ids;
}

namespace {

void render_blocks(std::ostringstream& os, const std::vector<PromptBlock>& blocks) {
    for (const auto& b : blocks) os << "### " << b.title << "\n" << b.body << "\n\n";
}

}  // namespace

std::string GradingPrompt::instructions() const {
    std::ostringstream os;
    render_blocks(os, context_blocks);
    if (!exemplar_blocks.empty()) {
        os << "## Graded examples\n\n";
        render_blocks(os, exemplar_blocks);
    }
    if (!revision_blocks.empty()) {
        os << "## Additional scoring guidance\n\n";
        render_blocks(os, revision_blocks);
    }
    os << "## Output format\n" << output_contract_text;
    return os.str();
}

std::string GradingPrompt::user_message(std::string_view response_text) const {
    std::ostringstream os;
    os << instructions() << "\n\n## Student response to grade\n<<<\n" << response_text << "\n>>>\n";
    return os.str();
}

std::string GradingPrompt::render() const {
    std::ostringstream os;
    os << "# Grading prompt (stage " << to_string(stage) << ")\n\n";
    os << "## System\n" << system_text << "\n\n";
    os << "## Blocks\n";
    for (const auto& id : block_ids()) os << "- " << id << "\n";
    os << "\n" << instructions();
    return os.str();
}

// ---------------------------------------------------------------------------
// Prompt construction

namespace {

constexpr const char* kSystemText =
    "You are a teaching assistant helping a middle-school science teacher grade short "
    "written formative-assessment responses. Grade only against the rubric and the "
    "curriculum context you are given. Quote the student's own words as evidence, tie each "
    "quote to the rubric criterion it supports, and only then decide the score.";

constexpr const char* kOutputContract =
    "Reply with exactly three sections, in this order, and nothing else:\n"
    "QUOTES:\n"
    "[1] \"<verbatim words copied from the student response>\"\n"
    "[2] \"<another quote, if any>\"\n"
    "(write (none) when nothing in the response is relevant)\n"
    "RATIONALE:\n"
    "<criterion id> | met or unmet | <quote number or -> | <one sentence explaining the "
    "alignment>\n"
    "(one line per rubric criterion)\n"
    "SCORE: <single integer score level>\n";

std::string rubric_body(const AssessmentPack& pack) {
    std::ostringstream os;
    os << "Criteria:\n";
    for (const auto& c : pack.rubric.criteria) {
        os << "- " << c.id << ": " << c.description << "\n  Evidence of mastery: "
           << c.evidence_statement << "\n";
    }
    os << "Score levels:\n";
    for (const auto& l : pack.rubric.scale.levels) os << "- " << l.ordinal << " = " << l.label << "\n";
    return os.str();
}

std::string guidelines_body(const AssessmentPack& pack) {
    std::ostringstream os;
    os << "Award " << pack.rubric.scale.max_score() << " (" << pack.rubric.scale.levels.back().label
       << ") only when the response evidences every criterion. Award 0 ("
       << pack.rubric.scale.levels.front().label
       << ") when no criterion is evidenced. Use the levels in between for responses that "
          "evidence some but not all criteria. Judge meaning, not spelling or grammar; do not "
          "reward statements the student did not make.";
    return os.str();
}

std::string exemplar_body(const FewShotExample& ex, bool with_rationale) {
    std::ostringstream os;
    os << "Student response:\n<<<\n" << ex.student_response << "\n>>>\n";
    if (with_rationale) {
        os << "QUOTES:\n";
        for (std::size_t i = 0; i < ex.quoted_spans.size(); ++i) {
            os << "[" << i + 1 << "] \"" << ex.quoted_spans[i] << "\"\n";
        }
        if (ex.quoted_spans.empty()) os << "(none)\n";
        os << "RATIONALE:\n" << ex.rationale.value_or("") << "\n";
    }
    os << "SCORE: " << ex.score;
    return os.str();
}

void require_extremes(const AssessmentPack& pack, ExampleStage stage) {
    bool has_min = false, has_max = false;
    for (const auto& ex : pack.examples) {
        if (ex.stage != stage) continue;
        has_min = has_min || ex.score == 0;
        has_max = has_max || ex.score == pack.rubric.scale.max_score();
    }
    if (!has_min || !has_max) {
        throw MissingExemplars("pack '" + pack.metadata.name + "' lacks zero- and full-credit " +
                               to_string(stage) + " exemplars");
    }
}

}  // namespace

GradingPrompt build_grading_prompt(const AssessmentPack& pack, PipelineStage stage,
                                   const ErrorLedger& ledger, const PackRegistry* registry) {
    GradingPrompt prompt;
    prompt.stage = stage;
    prompt.system_text = kSystemText;
    prompt.output_contract_text = kOutputContract;

    for (const auto& dep_id : pack.task.context_dependencies) {
        const AssessmentPack* dep = registry ? registry->find(dep_id) : nullptr;
        if (!dep) {
            throw UnknownAssessment("pack '" + pack.metadata.name + "' depends on '" + dep_id +
                                    "', which is not loaded");
        }
        for (const auto& [topic, prose] : dep->domain.curriculum_notes) {
            prompt.context_blocks.push_back({"curriculum:" + dep_id + ":" + topic,
                                             "Curriculum background (" + dep_id + ", " + topic + ")",
                                             prose});
        }
    }
    const auto& aid = pack.assessment_id();
    for (const auto& [topic, prose] : pack.domain.curriculum_notes) {
        prompt.context_blocks.push_back(
            {"curriculum:" + aid + ":" + topic, "Curriculum background (" + aid + ", " + topic + ")", prose});
    }
    prompt.context_blocks.push_back({"task:" + aid, "Assessment " + aid, pack.task.prompt_text});
    prompt.context_blocks.push_back({"rubric:" + aid, "Rubric", rubric_body(pack)});
    prompt.context_blocks.push_back({"guidelines:" + aid, "Scoring guidelines", guidelines_body(pack)});

    if (stage == PipelineStage::ICL) {
        require_extremes(pack, ExampleStage::ICL);
        for (const auto& ex : pack.examples) {
            if (ex.stage != ExampleStage::ICL) continue;
            prompt.exemplar_blocks.push_back(
                {"exemplar:" + ex.id, "Example (score " + std::to_string(ex.score) + ")", exemplar_body(ex, false)});
        }
    } else if (stage >= PipelineStage::CoT) {
        require_extremes(pack, ExampleStage::ICL);
        require_extremes(pack, ExampleStage::CoT);
        for (const auto& ex : pack.examples) {
            if (ex.stage != ExampleStage::CoT) continue;
            prompt.exemplar_blocks.push_back(
                {"exemplar:" + ex.id, "Example (score " + std::to_string(ex.score) + ")", exemplar_body(ex, true)});
        }
    }

    if (stage == PipelineStage::AL) {
        for (const auto& ex : pack.examples) {
            if (ex.stage != ExampleStage::AL) continue;
            prompt.exemplar_blocks.push_back({"exemplar:al:" + ex.id,
                                              "Example (score " + std::to_string(ex.score) + ")",
                                              exemplar_body(ex, true)});
        }
        const auto& revisions = ledger.revisions();
        for (std::size_t i = 0; i < revisions.size(); ++i) {
            const auto& r = revisions[i];
            const std::string rid = "revision:" + std::to_string(i + 1);
            if (r.kind == RevisionKind::Exemplar) {
                prompt.exemplar_blocks.push_back({rid + ":exemplar:" + r.exemplar->id,
                                                  "Example (score " + std::to_string(r.exemplar->score) + ")",
                                                  exemplar_body(*r.exemplar, true)});
                continue;
            }
            const std::string title =
                r.kind == RevisionKind::Guideline ? "Scoring guideline" : "Rubric clarification";
            prompt.revision_blocks.push_back({rid, title + " (" + r.created_for_trend + ")", r.text});
        }
    }
    return prompt;
}

// ---------------------------------------------------------------------------
// Ledger

void ErrorLedger::add_entry(LedgerEntry entry) {
    if (trim(entry.response_id).empty()) throw ValidationError("ledger entry has no response id");
    if (trim(entry.criterion_id).empty()) throw ValidationError("ledger entry has no criterion id");
    const int delta = entry.llm_score - entry.human_score;
    if (delta == 0) throw ValidationError("ledger entry '" + entry.response_id + "' is not a scoring error");
    const auto expected = delta > 0 ? ErrorDirection::Over : ErrorDirection::Under;
    if (entry.direction != expected) {
        throw ValidationError("ledger entry '" + entry.response_id + "' direction " +
                              to_string(entry.direction) + " disagrees with score delta");
    }
    entries_.push_back(std::move(entry));
}

void ErrorLedger::add_revision(Revision revision) {
    if (revision.kind == RevisionKind::Exemplar) {
        if (!revision.exemplar) throw ValidationError("exemplar revision carries no exemplar");
        const auto& ex = *revision.exemplar;
        if (!ex.rationale || trim(*ex.rationale).empty() || ex.quoted_spans.empty()) {
            throw ValidationError("exemplar revision needs a rationale and quoted spans");
        }
        for (const auto& q : ex.quoted_spans) {
            if (q.empty() || ex.student_response.find(q) == std::string::npos) {
                throw ValidationError("exemplar revision quote is not verbatim: \"" + q + "\"");
            }
        }
    } else if (trim(revision.text).empty()) {
        throw ValidationError("revision text is empty");
    }
    revisions_.push_back(std::move(revision));
}

namespace {

json example_to_json(const FewShotExample& ex) {
    json j{{"id", ex.id}, {"stage", to_string(ex.stage)}, {"score", ex.score}, {"response", ex.student_response}};
    if (ex.rationale) j["rationale"] = *ex.rationale;
    j["quotes"] = ex.quoted_spans;
    return j;
}

FewShotExample example_from_json(const json& j) {
    FewShotExample ex;
    ex.id = j.at("id").get<std::string>();
    ex.stage = parse_example_stage(j.value("stage", "AL"));
    ex.score = j.at("score").get<int>();
    ex.student_response = j.at("response").get<std::string>();
    if (j.contains("rationale")) ex.rationale = j.at("rationale").get<std::string>();
    ex.quoted_spans = j.value("quotes", std::vector<std::string>{});
    return ex;
}

}  // namespace

ErrorLedger ErrorLedger::parse(std::string_view json_text) {
    ErrorLedger ledger;
    try {
        const auto doc = json::parse(json_text);
        for (const auto& e : doc.value("entries", json::array())) {
            ledger.add_entry({e.at("response_id").get<std::string>(), e.at("human_score").get<int>(),
                              e.at("llm_score").get<int>(), e.at("criterion_id").get<std::string>(),
                              parse_direction(e.at("direction").get<std::string>()),
                              e.value("note", "")});
        }
        for (const auto& r : doc.value("revisions", json::array())) {
            Revision rev;
            rev.kind = parse_revision_kind(r.at("kind").get<std::string>());
            rev.text = r.value("text", "");
            rev.created_for_trend = r.value("trend", "");
            if (r.contains("exemplar")) rev.exemplar = example_from_json(r.at("exemplar"));
            ledger.add_revision(std::move(rev));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("ledger: ") + e.what());
    }
    return ledger;
}

ErrorLedger ErrorLedger::load(const std::filesystem::path& path) {
    return parse(read_file(path));
}

std::string ErrorLedger::serialize() const {
    json doc{{"entries", json::array()}, {"revisions", json::array()}};
    for (const auto& e : entries_) {
        doc["entries"].push_back({{"response_id", e.response_id},
                                  {"human_score", e.human_score},
                                  {"llm_score", e.llm_score},
                                  {"criterion_id", e.criterion_id},
                                  {"direction", to_string(e.direction)},
                                  {"note", e.note}});
    }
    for (const auto& r : revisions_) {
        json j{{"kind", to_string(r.kind)}, {"text", r.text}, {"trend", r.created_for_trend}};
        if (r.exemplar) j["exemplar"] = example_to_json(*r.exemplar);
        doc["revisions"].push_back(std::move(j));
    }
    return doc.dump(2) + "\n";
}

std::vector<Trend> detect_error_trends(const ErrorLedger& ledger, int min_support) {
    if (min_support < 2) throw ValidationError("min_support must be at least 2");
    std::map<std::pair<std::string, ErrorDirection>, std::vector<std::string>> groups;
    for (const auto& e : ledger.entries()) groups[{e.criterion_id, e.direction}].push_back(e.response_id);

    std::vector<Trend> trends;
    for (auto& [key, ids] : groups) {
        if (static_cast<int>(ids.size()) >= min_support) trends.push_back({key.first, key.second, std::move(ids)});
    }
    std::stable_sort(trends.begin(), trends.end(), [](const Trend& a, const Trend& b) {
        if (a.supporting_entry_ids.size() != b.supporting_entry_ids.size()) {
            return a.supporting_entry_ids.size() > b.supporting_entry_ids.size();
        }
        if (a.criterion_id != b.criterion_id) return a.criterion_id < b.criterion_id;
        return a.direction < b.direction;
    });
    return trends;
}

ErrorLedger apply_revision(const ErrorLedger& ledger, const Trend& trend, Revision revision) {
    std::vector<std::string> ids;
    for (const auto& e : ledger.entries()) {
        if (e.criterion_id == trend.criterion_id && e.direction == trend.direction) ids.push_back(e.response_id);
    }
    if (ids.empty() || ids != trend.supporting_entry_ids) {
        throw UnknownTrend("trend " + trend.key() + " was not detected on this ledger");
    }
    ErrorLedger next = ledger;
    revision.created_for_trend = trend.key();
    next.add_revision(std::move(revision));
    return next;
}

}  // namespace tutorloop
