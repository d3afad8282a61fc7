#include "tutorloop/judge.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/readability.hpp"
#include "tutorloop/text_util.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <regex>
#include <sstream>
#include <thread>

namespace tutorloop {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Constructs

const std::array<Construct, 6>& all_constructs() {
    using C = metrics::Codomain;
    static const std::array<Construct, 6> kAll{{
        {ConstructTag::ZPD, ConstructKind::Theoretical, C::Ternary, ConstructScope::InitialUtteranceOnly,
         "zone of proximal development"},
        {ConstructTag::SE, ConstructKind::Theoretical, C::Ternary, ConstructScope::AllUtterances, "self-efficacy"},
        {ConstructTag::GS, ConstructKind::Theoretical, C::Ternary, ConstructScope::AllUtterances, "goal setting"},
        {ConstructTag::R, ConstructKind::Teacher, C::Binary, ConstructScope::AllUtterances, "readability"},
        {ConstructTag::OT, ConstructKind::Teacher, C::Ternary, ConstructScope::AllUtterances, "on-task"},
        {ConstructTag::C, ConstructKind::Teacher, C::Ternary, ConstructScope::AllUtterances, "consistency"},
    }};
    return kAll;
}

const Construct& construct_info(ConstructTag tag) {
    return all_constructs()[static_cast<std::size_t>(tag)];
}

std::string to_string(ConstructTag tag) {
    static const char* kNames[] = {"ZPD", "SE", "GS", "R", "OT", "C"};
    return kNames[static_cast<std::size_t>(tag)];
}

ConstructTag parse_construct(std::string_view text) {
    const std::string t = trim(text);
    for (const auto& c : all_constructs()) {
        if (to_lower(to_string(c.tag)) == to_lower(t)) return c.tag;
    }
    throw ParseError("unknown construct '" + t + "'");
}

std::vector<ConstructTag> parse_construct_list(std::string_view text) {
    std::vector<ConstructTag> out;
    if (to_lower(trim(text)) == "all") {
        for (const auto& c : all_constructs()) out.push_back(c.tag);
        return out;
    }
    std::string item;
    std::istringstream in{std::string(text)};
    while (std::getline(in, item, ',')) {
        if (trim(item).empty()) continue;
        const auto tag = parse_construct(item);
        if (std::find(out.begin(), out.end(), tag) == out.end()) out.push_back(tag);
    }
    if (out.empty()) throw ParseError("no constructs given");
    std::sort(out.begin(), out.end());
    return out;
}

bool in_codomain(ConstructTag tag, int label) {
    return construct_info(tag).codomain == metrics::Codomain::Binary ? (label == 0 || label == 1)
                                                                     : (label >= -1 && label <= 1);
}

json to_json(const ConstructLabel& l) {
    return json{{"session_id", l.session_id},
                {"turn_index", l.turn_index},
                {"student_id", l.student_id},
                {"assessment_id", l.assessment_id},
                {"construct", to_string(l.construct)},
                {"label", l.label},
                {"explanation", l.explanation},
                {"judge_model_fingerprint", l.judge_model_fingerprint}};
}

ConstructLabel label_from_json(const json& j) {
    ConstructLabel l;
    l.session_id = j.at("session_id").get<std::string>();
    l.turn_index = j.at("turn_index").get<int>();
    l.student_id = j.value("student_id", "");
    l.assessment_id = j.at("assessment_id").get<std::string>();
    l.construct = parse_construct(j.at("construct").get<std::string>());
    l.label = j.at("label").get<int>();
    l.explanation = j.value("explanation", "");
    l.judge_model_fingerprint = j.value("judge_model_fingerprint", "");
    if (!in_codomain(l.construct, l.label)) {
        throw ValidationError("label " + std::to_string(l.label) + " outside the " + to_string(l.construct) +
                              " codomain");
    }
    return l;
}

std::string labels_to_jsonl(std::span<const ConstructLabel> labels) {
    std::string out;
    for (const auto& l : labels) out += to_json(l).dump() + "\n";
    return out;
}

std::vector<ConstructLabel> parse_labels_jsonl(std::string_view text) { return parse_judge_run_jsonl(text).labels; }

json to_json(const JudgeFailure& f) {
    return json{{"session_id", f.session_id}, {"turn_index", f.turn_index},         {"student_id", f.student_id},
                {"assessment_id", f.assessment_id}, {"construct", to_string(f.construct)}, {"error_tag", f.error_tag},
                {"message", f.message}};
}

JudgeFailure failure_from_json(const json& j) {
    JudgeFailure f;
    f.session_id = j.at("session_id").get<std::string>();
    f.turn_index = j.at("turn_index").get<int>();
    f.student_id = j.value("student_id", "");
    f.assessment_id = j.at("assessment_id").get<std::string>();
    f.construct = parse_construct(j.at("construct").get<std::string>());
    f.error_tag = j.at("error_tag").get<std::string>();
    f.message = j.value("message", "");
    return f;
}

std::string judge_run_to_jsonl(const JudgeRun& run) {
    std::string out = labels_to_jsonl(run.labels);
    for (const auto& f : run.failures) out += to_json(f).dump() + "\n";
    return out;
}

JudgeRun parse_judge_run_jsonl(std::string_view text) {
    JudgeRun run;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            if (j.contains("error_tag")) run.failures.push_back(failure_from_json(j));
            else run.labels.push_back(label_from_json(j));
        } catch (const json::exception& e) {
            throw ParseError("labels line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return run;
}

// ---------------------------------------------------------------------------
// ZPD

namespace {

std::set<std::string> met_in(const GradeRecord* grade) {
    std::set<std::string> met;
    if (!grade) return met;
    for (const auto& a : grade->criterion_alignments) {
        if (a.met) met.insert(a.criterion_id);
    }
    return met;
}

std::string join_set(const std::set<std::string>& s) {
    if (s.empty()) return "none";
    std::string out;
    for (const auto& x : s) out += (out.empty() ? "" : ", ") + x;
    return out;
}

}  // namespace

std::set<std::string> compute_mastered(const KnowledgeGraph& graph, const GradeRecord* grade) {
    if (grade && grade->assessment_id != graph.assessment_id) {
        throw GraphAssessmentMismatch("graph is for " + graph.assessment_id + ", grade is for " + grade->assessment_id);
    }
    return mastered_nodes(graph, met_in(grade));
}

std::set<std::string> compute_frontier(const KnowledgeGraph& graph, const GradeRecord* grade) {
    return frontier_nodes(graph, compute_mastered(graph, grade));
}

std::set<std::string> compute_frontier(const KnowledgeGraph& graph, const EvidenceSnapshot& snapshot) {
    const GradeRecord* grade = snapshot.grade_for(graph.assessment_id);
    if (!grade && !snapshot.latest_grades.empty()) {
        throw GraphAssessmentMismatch("snapshot for '" + snapshot.student_id + "' holds no grade for " +
                                      graph.assessment_id);
    }
    return compute_frontier(graph, grade);
}

ZpdDecision zpd_decide(const std::set<std::string>& frontier, const std::set<std::string>& mastered,
                       const std::set<std::string>& targets) {
    for (const auto& t : targets) {
        if (frontier.count(t)) return {1, "targets a frontier concept (" + t + ")"};
    }
    if (!targets.empty() && std::all_of(targets.begin(), targets.end(), [&](const auto& t) { return mastered.count(t) > 0; })) {
        return {0, "re-teaches mastered concepts only"};
    }
    return {-1, targets.empty() ? "targets no concept on the learning path" : "targets concepts beyond the frontier"};
}

// ---------------------------------------------------------------------------
// Prompts and verdicts

JudgePrompts JudgePrompts::load_dir(const std::filesystem::path& dir, const std::map<ConstructTag, int>& pinned) {
    JudgePrompts out;
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw StorageError("judge prompt directory not found: " + dir.string());
    static const std::regex kName(R"(([A-Z]+)\.v([0-9]+)\.txt)");
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, kName)) continue;
        ConstructTag tag;
        try {
            tag = parse_construct(m[1].str());
        } catch (const ParseError&) {
            continue;
        }
        const int version = std::stoi(m[2].str());
        if (auto p = pinned.find(tag); p != pinned.end() && p->second != version) continue;
        auto it = out.prompts_.find(tag);
        if (it == out.prompts_.end() || it->second.first < version) {
            out.prompts_[tag] = {version, read_file(entry.path())};
        }
    }
    for (const auto& [tag, version] : pinned) {
        if (!out.prompts_.count(tag)) {
            throw StorageError("no prompt " + to_string(tag) + ".v" + std::to_string(version) + ".txt in " + dir.string());
        }
    }
    return out;
}

const std::string& JudgePrompts::text(ConstructTag tag) const {
    auto it = prompts_.find(tag);
    if (it == prompts_.end()) throw StorageError("no judge prompt for " + to_string(tag));
    return it->second.second;
}

int JudgePrompts::version(ConstructTag tag) const {
    auto it = prompts_.find(tag);
    return it == prompts_.end() ? 0 : it->second.first;
}

namespace {

// Last non-empty line with markdown emphasis removed, plus everything before it.
std::pair<std::string, std::string> split_terminal_line(std::string_view raw) {
    auto lines = split_lines(raw);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) return {"", ""};
    std::string last = trim(lines.back());
    last.erase(std::remove(last.begin(), last.end(), '*'), last.end());
    lines.pop_back();
    std::string before;
    for (const auto& l : lines) before += l + "\n";
    return {trim(before), trim(last)};
}

std::string replace_unicode_minus(std::string s) {
    const std::string minus = "\xE2\x88\x92";
    for (auto pos = s.find(minus); pos != std::string::npos; pos = s.find(minus)) s.replace(pos, minus.size(), "-");
    return s;
}

}  // namespace

ConstructLabel parse_verdict(std::string_view raw, ConstructTag tag) {
    auto [explanation, last] = split_terminal_line(raw);
    if (!starts_with_ci(last, "LABEL:")) throw UnparseableVerdict("reply does not end with a LABEL line");
    std::string value = replace_unicode_minus(trim(std::string_view(last).substr(6)));
    if (!value.empty() && value.front() == '+') value.erase(0, 1);
    int label = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), label);
    if (ec != std::errc() || ptr != value.data() + value.size()) {
        throw UnparseableVerdict("LABEL value '" + value + "' is not an integer");
    }
    if (!in_codomain(tag, label)) {
        throw UnparseableVerdict("LABEL " + value + " is outside the " + to_string(tag) + " codomain");
    }
    if (explanation.empty()) throw UnparseableVerdict("verdict carries no explanation");
    ConstructLabel out;
    out.construct = tag;
    out.label = label;
    out.explanation = explanation;
    return out;
}

std::set<std::string> parse_targets(std::string_view raw, const KnowledgeGraph& graph, std::string& explanation) {
    auto [before, last] = split_terminal_line(raw);
    if (!starts_with_ci(last, "TARGETS:")) throw UnparseableVerdict("reply does not end with a TARGETS line");
    if (before.empty()) throw UnparseableVerdict("verdict carries no explanation");
    explanation = before;
    const std::string list = trim(std::string_view(last).substr(8));
    std::set<std::string> targets;
    if (to_lower(list) == "none") return targets;
    std::string item;
    std::istringstream in(list);
    while (std::getline(in, item, ',')) {
        const std::string id = trim(item);
        if (id.empty()) continue;
        if (!graph.find(id)) throw UnparseableVerdict("TARGETS names unknown node '" + id + "'");
        targets.insert(id);
    }
    if (targets.empty()) throw UnparseableVerdict("TARGETS line is empty");
    return targets;
}

namespace {

std::string graph_listing(const KnowledgeGraph& g) {
    std::ostringstream out;
    out << "Concept graph for " << g.assessment_id << ", levels from lowest to highest:";
    for (std::size_t i = 0; i < g.level_names.size(); ++i) out << (i ? " < " : " ") << g.level_names[i];
    out << "\n";
    for (const auto& n : g.nodes) {
        out << "- " << n.id << " [" << g.level_names.at(static_cast<std::size_t>(n.level)) << "]: " << n.concept_name
            << "\n";
    }
    out << "Prerequisites:\n";
    for (const auto& [from, to] : g.edges) out << "- " << from << " -> " << to << "\n";
    return out.str();
}

std::string fingerprint_for(const llm::LlmClient& llm, const JudgePrompts& prompts, ConstructTag tag) {
    return llm.config().fingerprint() + "/" + to_string(tag) + ".v" + std::to_string(prompts.version(tag));
}

template <typename Parse>
auto ask_with_reprompt(llm::LlmClient& llm, std::vector<llm::Message> messages, const std::string& correction,
                       Parse&& parse) {
    auto completion = llm.complete(messages);
    try {
        return parse(completion.text);
    } catch (const UnparseableVerdict& first) {
        messages.push_back({llm::Role::Assistant, completion.text});
        messages.push_back({llm::Role::User, std::string("Your reply could not be read (") + first.what() + "). " +
                                                 correction});
        completion = llm.complete(messages);
        try {
            return parse(completion.text);
        } catch (const UnparseableVerdict& second) {
            throw UnparseableVerdict(std::string("after reprompt: ") + second.what());
        }
    }
}

const std::string& directive_for(const ConstructDirectives& d, ConstructTag tag) {
    switch (tag) {
        case ConstructTag::ZPD: return d.zpd_text;
        case ConstructTag::SE: return d.se_text;
        case ConstructTag::GS: return d.gs_text;
        case ConstructTag::R: return d.readability_text;
        case ConstructTag::OT: return d.on_task_text;
        case ConstructTag::C: return d.consistency_text;
    }
    return d.se_text;
}

}  // namespace

ConstructLabel judge_zpd(const Utterance& opening, const ZpdContext& context, const JudgePrompts& prompts,
                         llm::LlmClient& llm) {
    if (!context.graph) throw ValidationError("ZPD judging needs a knowledge graph");
    const auto& graph = *context.graph;
    std::vector<llm::Message> messages{
        {llm::Role::System, prompts.text(ConstructTag::ZPD)},
        {llm::Role::User, graph_listing(graph) + "\nOpening utterance:\n" + opening.text +
                              "\n\nWhich concepts does this utterance teach or scaffold? Explain first, then end "
                              "with one line \"TARGETS: <node ids, comma separated>\" or \"TARGETS: NONE\"."}};
    std::string explanation;
    const auto targets = ask_with_reprompt(
        llm, std::move(messages), "End with one line \"TARGETS: <node ids>\" or \"TARGETS: NONE\".",
        [&](const std::string& raw) { return parse_targets(raw, graph, explanation); });
    const auto decision = zpd_decide(context.frontier, context.mastered, targets);
    ConstructLabel out;
    out.session_id = opening.session_id;
    out.turn_index = opening.turn_index;
    out.construct = ConstructTag::ZPD;
    out.label = decision.label;
    out.explanation = explanation + "\nTargets: " + join_set(targets) + ". Frontier: " + join_set(context.frontier) +
                      ". Mastered: " + join_set(context.mastered) + ". Decision: " + decision.rule + ".";
    out.judge_model_fingerprint = fingerprint_for(llm, prompts, ConstructTag::ZPD);
    return out;
}

ConstructLabel judge_utterance(const Utterance& utterance, std::span<const DialogueTurn> preceding,
                               ConstructTag construct, const ConstructDirectives& directives,
                               const JudgePrompts& prompts, llm::LlmClient& llm) {
    if (construct == ConstructTag::ZPD || construct == ConstructTag::R) {
        throw ValidationError(to_string(construct) + " is not judged utterance by utterance");
    }
    std::ostringstream user;
    user << "Instruction the tutor was given for this construct:\n" << trim(directive_for(directives, construct))
         << "\n\nDialogue so far:\n";
    if (preceding.empty()) user << "(none)\n";
    for (const auto& t : preceding) user << (t.speaker == Speaker::Agent ? "Agent: " : "Student: ") << t.text << "\n";
    user << "\nUtterance to rate:\nAgent: " << utterance.text << "\n\nRate this utterance for "
         << construct_info(construct).name
         << " faithfulness. Explain your reasoning first, then end with one line \"LABEL: <1|0|-1>\".";
    std::vector<llm::Message> messages{{llm::Role::System, prompts.text(construct)}, {llm::Role::User, user.str()}};
    auto out = ask_with_reprompt(llm, std::move(messages), "End with one line \"LABEL: 1\", \"LABEL: 0\" or \"LABEL: -1\".",
                                 [&](const std::string& raw) { return parse_verdict(raw, construct); });
    out.session_id = utterance.session_id;
    out.turn_index = utterance.turn_index;
    out.judge_model_fingerprint = fingerprint_for(llm, prompts, construct);
    return out;
}

ConstructLabel judge_readability(const Utterance& utterance) {
    ConstructLabel out;
    out.session_id = utterance.session_id;
    out.turn_index = utterance.turn_index;
    out.construct = ConstructTag::R;
    out.label = metrics::readability_label(metrics::fkgl(metrics::count_text_stats(utterance.text)));
    out.judge_model_fingerprint = "fkgl";
    return out;
}

// ---------------------------------------------------------------------------
// Conversation runs

namespace {

struct SessionLog {
    std::string session_id;
    std::string student_id;
    std::string assessment_id;
    std::optional<GradeRecord> grade_at_open;
    std::vector<Utterance> utterances;
};

std::vector<SessionLog> group_sessions(std::span<const EvidenceItem> log) {
    std::vector<SessionLog> sessions;
    std::map<std::string, std::size_t> index;
    std::map<std::string, std::vector<EvidenceItem>> history;
    for (const auto& item : log) {
        auto& h = history[item.student_id];
        h.push_back(item);
        if (const auto* s = std::get_if<SessionStart>(&item.payload)) {
            if (index.count(s->session_id)) throw ValidationError("session " + s->session_id + " starts twice");
            SessionLog sl;
            sl.session_id = s->session_id;
            sl.student_id = item.student_id;
            sl.assessment_id = s->assessment_id;
            const auto snap = fold_snapshot(item.student_id, h, 0);
            if (const auto* g = snap.grade_for(s->assessment_id)) sl.grade_at_open = *g;
            index[s->session_id] = sessions.size();
            sessions.push_back(std::move(sl));
        } else if (const auto* u = std::get_if<Utterance>(&item.payload)) {
            auto it = index.find(u->session_id);
            if (it == index.end()) throw ValidationError("utterance for session " + u->session_id + " before its start");
            sessions[it->second].utterances.push_back(*u);
        }
    }
    for (auto& s : sessions) {
        std::stable_sort(s.utterances.begin(), s.utterances.end(),
                         [](const Utterance& a, const Utterance& b) { return a.turn_index < b.turn_index; });
    }
    return sessions;
}

}  // namespace

JudgeRun judge_conversations(std::span<const EvidenceItem> log, const PackRegistry& registry,
                             std::span<const ConstructTag> constructs, const JudgePrompts& prompts,
                             llm::LlmClient& llm, const JudgeOptions& options) {
    const auto sessions = group_sessions(log);
    std::vector<ConstructTag> wanted(constructs.begin(), constructs.end());
    std::sort(wanted.begin(), wanted.end());
    wanted.erase(std::unique(wanted.begin(), wanted.end()), wanted.end());

    struct Task {
        const SessionLog* session;
        std::size_t utterance;
        ConstructTag construct;
    };
    std::vector<Task> tasks;
    for (const auto& s : sessions) {
        bool first_agent = true;
        for (std::size_t i = 0; i < s.utterances.size(); ++i) {
            if (s.utterances[i].speaker != Speaker::Agent) continue;
            for (auto tag : wanted) {
                if (construct_info(tag).scope == ConstructScope::InitialUtteranceOnly && !first_agent) continue;
                tasks.push_back({&s, i, tag});
            }
            first_agent = false;
        }
    }
    const bool any_agent = std::any_of(sessions.begin(), sessions.end(), [](const SessionLog& s) {
        return std::any_of(s.utterances.begin(), s.utterances.end(),
                           [](const Utterance& u) { return u.speaker == Speaker::Agent; });
    });
    if (!any_agent) throw EmptyInput("conversation log holds no agent utterances");

    struct Slot {
        std::optional<ConstructLabel> label;
        std::optional<JudgeFailure> failure;
    };
    std::vector<Slot> slots(tasks.size());
    std::atomic<std::size_t> next{0};

    auto run_task = [&](const Task& t) -> ConstructLabel {
        const auto& s = *t.session;
        const auto& u = s.utterances[t.utterance];
        const AssessmentPack* pack = registry.find(s.assessment_id);
        if (!pack) throw UnknownAssessment("no pack for " + s.assessment_id);
        switch (t.construct) {
            case ConstructTag::R: return judge_readability(u);
            case ConstructTag::ZPD: {
                const GradeRecord* grade = s.grade_at_open ? &*s.grade_at_open : nullptr;
                ZpdContext ctx;
                ctx.graph = &pack->knowledge_graph;
                ctx.mastered = compute_mastered(pack->knowledge_graph, grade);
                ctx.frontier = frontier_nodes(pack->knowledge_graph, ctx.mastered);
                return judge_zpd(u, ctx, prompts, llm);
            }
            default: {
                std::vector<DialogueTurn> preceding;
                for (std::size_t i = 0; i < t.utterance; ++i) {
                    preceding.push_back({s.utterances[i].speaker, s.utterances[i].text});
                }
                return judge_utterance(u, preceding, t.construct, ConstructDirectives::for_pack(*pack), prompts, llm);
            }
        }
    };

    auto worker = [&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) {
            const auto& t = tasks[i];
            try {
                auto label = run_task(t);
                label.student_id = t.session->student_id;
                label.assessment_id = t.session->assessment_id;
                slots[i].label = std::move(label);
            } catch (const Error& e) {
                const auto& u = t.session->utterances[t.utterance];
                slots[i].failure = JudgeFailure{u.session_id, u.turn_index,  t.session->student_id,
                                                t.session->assessment_id, t.construct, e.tag(), e.what()};
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(options.parallelism, static_cast<unsigned>(tasks.size())));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    JudgeRun run;
    for (auto& s : slots) {
        if (s.label) run.labels.push_back(std::move(*s.label));
        if (s.failure) run.failures.push_back(std::move(*s.failure));
    }
    return run;
}

// ---------------------------------------------------------------------------
// Validation

std::vector<ConstructLabel> sample_for_validation(std::span<const ConstructLabel> labels, ConstructTag construct,
                                                  std::size_t per_judge_n, std::uint64_t seed) {
    std::vector<const ConstructLabel*> pool;
    for (const auto& l : labels) {
        if (l.construct == construct) pool.push_back(&l);
    }
    if (pool.empty()) throw EmptyInput("no " + to_string(construct) + " labels to sample");
    if (pool.size() < per_judge_n) {
        throw InsufficientItems("only " + std::to_string(pool.size()) + " " + to_string(construct) +
                                " labels, sample needs " + std::to_string(per_judge_n));
    }
    std::vector<std::string> strata;
    for (const auto* l : pool) strata.push_back(l->assessment_id + "|" + std::to_string(l->label));
    const auto split = metrics::stratified_split(strata, per_judge_n, seed);
    std::vector<ConstructLabel> out;
    for (auto i : split.holdout) out.push_back(*pool[i]);
    return out;
}

std::vector<HumanLabel> parse_human_labels_jsonl(std::string_view text) {
    std::vector<HumanLabel> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            HumanLabel h{j.at("session_id").get<std::string>(), j.at("turn_index").get<int>(),
                         parse_construct(j.at("construct").get<std::string>()), j.at("label").get<int>()};
            if (!in_codomain(h.construct, h.label)) {
                throw ValidationError("human label line " + std::to_string(line_no) + " outside codomain");
            }
            out.push_back(h);
        } catch (const json::exception& e) {
            throw ParseError("human labels line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

ValidationRun validate_judge(std::span<const ConstructLabel> sample, std::span<const HumanLabel> human,
                             ConstructTag construct, int iteration) {
    std::map<std::pair<std::string, int>, int> by_ref;
    for (const auto& h : human) {
        if (h.construct == construct) by_ref[{h.session_id, h.turn_index}] = h.label;
    }
    const int offset = construct_info(construct).codomain == metrics::Codomain::Binary ? 0 : 1;
    const int k = construct_info(construct).codomain == metrics::Codomain::Binary ? 2 : 3;

    ValidationRun run;
    run.construct = construct;
    run.iteration = iteration;
    std::vector<metrics::LabelPair> pairs;
    std::vector<std::string> missing;
    for (const auto& l : sample) {
        if (l.construct != construct) {
            throw ValidationError("sample mixes " + to_string(l.construct) + " into a " + to_string(construct) + " run");
        }
        auto it = by_ref.find({l.session_id, l.turn_index});
        if (it == by_ref.end()) {
            missing.push_back(l.session_id + "#" + std::to_string(l.turn_index));
            continue;
        }
        run.refs.emplace_back(l.session_id, l.turn_index);
        run.human.push_back(it->second);
        run.judge.push_back(l.label);
        pairs.push_back({l.session_id + "#" + std::to_string(l.turn_index), it->second + offset, l.label + offset});
    }
    if (!missing.empty()) {
        std::string list;
        for (std::size_t i = 0; i < missing.size() && i < 5; ++i) list += (i ? ", " : "") + missing[i];
        throw CoverageGap(std::to_string(missing.size()) + " sampled utterances lack human labels: " + list);
    }
    run.kappa = metrics::quadratic_weighted_kappa(pairs, k);
    run.pass = run.kappa >= kJudgeAcceptKappa;
    return run;
}

std::string render_validation_run(const ValidationRun& run) {
    std::ostringstream out;
    out << to_string(run.construct) << " judge validation, iteration " << run.iteration << ": n = " << run.refs.size()
        << ", kappa_w = " << format_fixed(run.kappa, 4) << " -> " << (run.pass ? "PASS" : "FAIL")
        << " (threshold " << format_fixed(kJudgeAcceptKappa, 2) << ")\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Timeline

CaseTimeline export_case_timeline(std::span<const EvidenceItem> log, const std::string& session_id,
                                  std::span<const ConstructLabel> labels) {
    const auto sessions = group_sessions(log);
    auto it = std::find_if(sessions.begin(), sessions.end(), [&](const SessionLog& s) { return s.session_id == session_id; });
    if (it == sessions.end()) throw UnknownSession("no session '" + session_id + "' in the log");
    CaseTimeline t;
    t.session_id = session_id;
    t.assessment_id = it->assessment_id;
    for (const auto& u : it->utterances) {
        if (u.speaker == Speaker::Agent) t.turns.push_back(u.turn_index);
    }
    if (t.turns.empty()) throw MissingLabels("session " + session_id + " has no agent utterances");
    for (const auto& c : all_constructs()) t.rows[c.tag].assign(t.turns.size(), std::nullopt);
    bool any = false;
    for (const auto& l : labels) {
        if (l.session_id != session_id) continue;
        auto pos = std::find(t.turns.begin(), t.turns.end(), l.turn_index);
        if (pos == t.turns.end()) continue;
        t.rows[l.construct][static_cast<std::size_t>(pos - t.turns.begin())] = l.label;
        any = true;
    }
    if (!any) throw MissingLabels("no construct labels for session " + session_id);
    return t;
}

json to_json(const CaseTimeline& t) {
    json j;
    j["session_id"] = t.session_id;
    j["assessment_id"] = t.assessment_id;
    j["turns"] = t.turns;
    json rows = json::object();
    for (const auto& c : all_constructs()) {
        json row = json::array();
        for (const auto& cell : t.rows.at(c.tag)) row.push_back(cell ? json(*cell) : json(nullptr));
        rows[to_string(c.tag)] = std::move(row);
    }
    j["rows"] = std::move(rows);
    return j;
}

std::string render_timeline(const CaseTimeline& t) {
    std::ostringstream out;
    out << "session " << t.session_id << " (" << t.assessment_id << ")\n";
    auto cell = [](const std::string& s) { return std::string(s.size() < 4 ? 4 - s.size() : 0, ' ') + s; };
    out << "turn";
    for (std::size_t i = 0; i < t.turns.size(); ++i) out << cell(std::to_string(i + 1));
    out << "\n";
    for (const auto& c : all_constructs()) {
        std::string name = to_string(c.tag);
        out << name << std::string(4 - name.size(), ' ');
        for (const auto& v : t.rows.at(c.tag)) out << cell(v ? std::to_string(*v) : ".");
        out << "\n";
    }
    return out.str();
}

}  // namespace tutorloop
