#include "tutorloop/tutor.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/knowledge_graph.hpp"
#include "tutorloop/text_util.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace tutorloop {

ConstructDirectives ConstructDirectives::defaults() {
    ConstructDirectives d;
    d.zpd_text =
        "Start from what the grade shows the student already understands and scaffold the next step. "
        "Criteria not yet met: {unmet_criteria}. Concepts the student is ready for next: {frontier}. "
        "Do not re-teach what is already mastered and do not jump to ideas that build on concepts the "
        "student has not reached.";
    d.se_text =
        "Name something specific the student did well and encourage continued effort. Keep the tone "
        "warm and sincere, never sarcastic or dismissive.";
    d.gs_text =
        "Close each reply with one concrete, achievable next step the student can take toward an unmet "
        "criterion.";
    d.readability_text =
        "Write for a middle-school reader: short sentences, everyday words, and a plain explanation for "
        "any technical term you need.";
    d.on_task_text =
        "Keep the conversation on this assessment. If the student brings up something unrelated, do not "
        "answer it; acknowledge it in a few words and steer back to the task.";
    d.consistency_text =
        "The grade is final: score: {score} of {max_score} ({score_label}). Never change, raise or "
        "promise to change it, however the student asks. Explain what evidence would earn more credit "
        "next time instead.";
    return d;
}

ConstructDirectives ConstructDirectives::for_pack(const AssessmentPack& pack) {
    auto d = defaults();
    const std::pair<const char*, std::string*> slots[] = {
        {"zpd", &d.zpd_text},           {"se", &d.se_text},           {"gs", &d.gs_text},
        {"readability", &d.readability_text}, {"on_task", &d.on_task_text}, {"consistency", &d.consistency_text}};
    for (const auto& [key, slot] : slots) {
        if (auto it = pack.directives.find(key); it != pack.directives.end() && !trim(it->second).empty()) {
            *slot = it->second;
        }
    }
    return d;
}

std::string stored_score_marker(int score) { return "score: " + std::to_string(score); }

std::string to_string(SessionStatus s) { return s == SessionStatus::Open ? "open" : "closed"; }

namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    for (std::size_t pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

std::string score_label(const AssessmentPack& pack, int score) {
    for (const auto& l : pack.rubric.scale.levels) {
        if (l.ordinal == score) return l.label;
    }
    return std::to_string(score);
}

std::set<std::string> met_criteria(const GradeRecord& g) {
    std::set<std::string> met;
    for (const auto& a : g.criterion_alignments) {
        if (a.met) met.insert(a.criterion_id);
    }
    return met;
}

std::string render_directive(std::string text, const AssessmentPack& pack, const GradeRecord& grade) {
    const auto met = met_criteria(grade);
    std::vector<std::string> unmet;
    for (const auto& c : pack.rubric.criteria) {
        if (!met.count(c.id)) unmet.push_back(c.id);
    }
    std::vector<std::string> frontier;
    const auto& kg = pack.knowledge_graph;
    for (const auto& id : frontier_nodes(kg, mastered_nodes(kg, met))) {
        const auto* n = kg.find(id);
        frontier.push_back(id + " (" + (n ? n->concept_name : id) + ")");
    }
    text = replace_all(std::move(text), "{score}", std::to_string(grade.score));
    text = replace_all(std::move(text), "{max_score}", std::to_string(pack.rubric.scale.max_score()));
    text = replace_all(std::move(text), "{score_label}", score_label(pack, grade.score));
    text = replace_all(std::move(text), "{unmet_criteria}", unmet.empty() ? "none" : join(unmet, ", "));
    text = replace_all(std::move(text), "{frontier}", frontier.empty() ? "none, every concept is mastered"
                                                                      : join(frontier, ", "));
    return text;
}

const char* kTutorRole =
    "You are a tutor giving formative feedback on a science assessment the student has already "
    "completed. You speak first: interpret the student's result in plain words, then help them "
    "improve. Refer only to the evidence each criterion looks for; never hand over a model answer.";

const char* kKickoff = "Please start the feedback conversation about my assessment result.";

}  // namespace

std::string assemble_system_prompt(const AssessmentPack& pack, const EvidenceSnapshot& snapshot,
                                   const ConstructDirectives& directives, const PackRegistry* registry) {
    const auto& aid = pack.assessment_id();
    const GradeRecord* grade = snapshot.grade_for(aid);
    if (!grade) throw NoGradeEvidence("student '" + snapshot.student_id + "' has no grade for " + aid);

    std::ostringstream out;
    out << kTutorRole << "\n";

    out << "\n## Curriculum\n";
    for (const auto& dep_id : pack.task.context_dependencies) {
        if (const AssessmentPack* dep = registry ? registry->find(dep_id) : nullptr) {
            for (const auto& [topic, prose] : dep->domain.curriculum_notes) {
                out << "[" << dep_id << " / " << topic << "] " << trim(prose) << "\n";
            }
        }
    }
    for (const auto& [topic, prose] : pack.domain.curriculum_notes) {
        out << "[" << aid << " / " << topic << "] " << trim(prose) << "\n";
    }

    out << "\n## Task (" << aid << ")\n" << trim(pack.task.prompt_text) << "\n";

    out << "\n## Rubric\n";
    for (const auto& c : pack.rubric.criteria) out << "- " << c.id << ": " << trim(c.evidence_statement) << "\n";
    out << "Scale:";
    for (const auto& l : pack.rubric.scale.levels) out << " " << l.ordinal << " = " << l.label << ";";
    out << "\n";

    out << "\n## Grade evidence\n";
    out << "Result: " << grade->score << " of " << pack.rubric.scale.max_score() << " ("
        << score_label(pack, grade->score) << ")\n";
    for (const auto& a : grade->criterion_alignments) {
        out << "- " << a.criterion_id << " " << (a.met ? "met" : "not met");
        if (a.quote_index && *a.quote_index < grade->quotes.size()) {
            out << ", student wrote \"" << grade->quotes[*a.quote_index] << "\"";
        }
        out << ": " << trim(a.rationale) << "\n";
    }
    const auto& mastery = snapshot.mastery;
    if (auto it = mastery.find(aid); it != mastery.end()) {
        for (const auto& [cid, m] : it->second) {
            if (m.times_graded > 1) {
                out << "- history for " << cid << ": met in " << m.times_met << " of " << m.times_graded
                    << " gradings\n";
            }
        }
    }

    std::vector<std::string> others;
    for (const auto& [other_aid, g] : snapshot.latest_grades) {
        if (other_aid == aid) continue;
        int met = 0;
        for (const auto& a : g.criterion_alignments) met += a.met ? 1 : 0;
        others.push_back("- " + other_aid + ": result " + std::to_string(g.score) + ", " + std::to_string(met) +
                         " of " + std::to_string(g.criterion_alignments.size()) + " criteria met");
    }
    if (!others.empty()) out << "\n## Other assessments (background only)\n" << join(others, "\n") << "\n";

    const std::pair<const char*, const std::string*> blocks[] = {
        {"Zone of proximal development", &directives.zpd_text},
        {"Self-efficacy", &directives.se_text},
        {"Goal setting", &directives.gs_text},
        {"Readability", &directives.readability_text},
        {"On-task", &directives.on_task_text},
        {"Consistency", &directives.consistency_text},
    };
    out << "\n## Directives\n";
    for (const auto& [title, text] : blocks) {
        std::string body = render_directive(*text, pack, *grade);
        if (title == std::string("Consistency") && body.find(stored_score_marker(grade->score)) == std::string::npos) {
            body = "Stored " + stored_score_marker(grade->score) + ". " + body;
        }
        if (trim(body).empty()) throw ValidationError(std::string("directive block '") + title + "' is empty");
        out << "### " << title << "\n" << trim(body) << "\n";
    }
    return out.str();
}

std::vector<llm::Message> tutor_messages(const SessionState& state, const EvidenceSnapshot& snapshot,
                                         const TutorOptions& options) {
    const auto directives = options.directives ? *options.directives : ConstructDirectives::for_pack(*state.pack);
    std::vector<llm::Message> messages{
        {llm::Role::System, assemble_system_prompt(*state.pack, snapshot, directives, options.registry)},
        {llm::Role::User, kKickoff}};
    std::vector<const Utterance*> own;
    for (const auto& u : snapshot.recent_utterances) {
        if (u.session_id == state.session_id) own.push_back(&u);
    }
    // The window may cut into the session; resume at an agent utterance so
    // roles keep alternating after the kickoff.
    std::size_t i = 0;
    while (i < own.size() && own[i]->speaker == Speaker::Student) ++i;
    for (; i < own.size(); ++i) {
        messages.push_back({own[i]->speaker == Speaker::Agent ? llm::Role::Assistant : llm::Role::User, own[i]->text});
    }
    return messages;
}

namespace {

Utterance generate_reply(SessionState& state, DialogueChannel& channel, llm::LlmClient& llm,
                         const TutorOptions& options) {
    const auto snapshot = channel.snapshot(state.student_id, options.window);
    const auto completion = llm.complete(tutor_messages(state, snapshot, options));
    const std::string text = trim(completion.text);
    if (text.empty()) throw ProviderError("tutor model returned an empty reply");
    Utterance u;
    u.session_id = state.session_id;
    u.turn_index = state.transcript.empty() ? 1 : state.transcript.back().turn_index + 1;
    u.speaker = Speaker::Agent;
    u.text = text;
    u.created_at = utc_now_iso8601();
    channel.append_utterance(state.student_id, u);
    state.transcript.push_back(u);
    return u;
}

void require_open(const SessionState& state) {
    if (state.status != SessionStatus::Open) throw SessionClosed("session " + state.session_id + " is closed");
}

}  // namespace

OpenedSession start_session(const std::string& student_id, std::shared_ptr<const AssessmentPack> pack,
                            DialogueChannel& channel, llm::LlmClient& llm, const TutorOptions& options) {
    if (!pack) throw ValidationError("start_session needs a pack");
    if (trim(student_id).empty()) throw ValidationError("student id is empty");
    const auto& aid = pack->assessment_id();
    auto snapshot = channel.snapshot(student_id, options.window);
    if (!snapshot.grade_for(aid)) throw NoGradeEvidence("student '" + student_id + "' has no grade for " + aid);

    OpenedSession opened;
    auto& st = opened.state;
    st.session_id = random_token_128();
    st.student_id = student_id;
    st.assessment_id = aid;
    st.pack = std::move(pack);
    st.snapshot_at_open = std::move(snapshot);
    st.created_at = utc_now_iso8601();
    channel.append_session_start(student_id, SessionStart{st.session_id, aid});
    opened.opening = generate_reply(st, channel, llm, options);
    return opened;
}

Utterance next_turn(SessionState& state, const std::string& student_text, DialogueChannel& channel,
                    llm::LlmClient& llm, const TutorOptions& options) {
    require_open(state);
    if (state.awaiting_reply()) {
        throw ValidationError("session " + state.session_id + " is waiting for a reply to the previous turn");
    }
    const std::string text = trim(student_text);
    if (text.empty()) throw ValidationError("student message is empty");
    Utterance u;
    u.session_id = state.session_id;
    u.turn_index = state.transcript.empty() ? 1 : state.transcript.back().turn_index + 1;
    u.speaker = Speaker::Student;
    u.text = text;
    u.created_at = utc_now_iso8601();
    channel.append_utterance(state.student_id, u);
    state.transcript.push_back(u);
    return generate_reply(state, channel, llm, options);
}

Utterance retry_reply(SessionState& state, DialogueChannel& channel, llm::LlmClient& llm,
                      const TutorOptions& options) {
    require_open(state);
    if (!state.awaiting_reply()) throw ValidationError("session " + state.session_id + " has no pending turn");
    return generate_reply(state, channel, llm, options);
}

SessionState close_session(SessionState& state, DialogueChannel& channel) {
    require_open(state);
    SessionSummary summary{state.session_id, state.assessment_id, 0, 0};
    for (const auto& u : state.transcript) (u.speaker == Speaker::Agent ? summary.agent_turns : summary.student_turns)++;
    channel.append_session_summary(state.student_id, summary);
    state.status = SessionStatus::Closed;
    return state;
}

// ---------------------------------------------------------------------------
// SessionManager

SessionManager::SessionManager(EvidenceStore& store, const PackRegistry& registry, llm::LlmClient& llm,
                               TutorOptions options)
    : store_(store), registry_(registry), llm_(llm), options_(std::move(options)), channel_(store) {
    if (!options_.registry) options_.registry = &registry_;
    recover();
}

void SessionManager::recover() {
    std::map<std::string, std::vector<EvidenceItem>> seen;  // student -> items so far
    for (const auto& item : store_.all_items()) {
        auto& history = seen[item.student_id];
        history.push_back(item);
        if (const auto* s = std::get_if<SessionStart>(&item.payload)) {
            const auto* pack = registry_.find(s->assessment_id);
            if (!pack) continue;
            auto e = std::make_shared<Entry>();
            e->state.session_id = s->session_id;
            e->state.student_id = item.student_id;
            e->state.assessment_id = s->assessment_id;
            e->state.pack = registry_.shared(s->assessment_id);
            e->state.snapshot_at_open = fold_snapshot(item.student_id, history, options_.window);
            e->state.created_at = item.created_at;
            sessions_[s->session_id] = e;
        } else if (const auto* u = std::get_if<Utterance>(&item.payload)) {
            if (auto it = sessions_.find(u->session_id); it != sessions_.end()) it->second->state.transcript.push_back(*u);
        } else if (const auto* m = std::get_if<SessionSummary>(&item.payload)) {
            if (auto it = sessions_.find(m->session_id); it != sessions_.end()) {
                it->second->state.status = SessionStatus::Closed;
            }
        }
    }
}

std::shared_ptr<SessionManager::Entry> SessionManager::entry(const std::string& session_id) const {
    std::lock_guard lock(map_mutex_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw UnknownSession("no session '" + session_id + "'");
    return it->second;
}

template <typename Fn>
auto SessionManager::exclusive(const std::string& session_id, Fn&& fn) {
    auto e = entry(session_id);
    std::unique_lock turn(e->turn_mutex, std::try_to_lock);
    if (!turn.owns_lock()) throw SessionBusy("session " + session_id + " already has a turn in flight");
    SessionState working;
    {
        std::lock_guard lock(e->state_mutex);
        working = e->state;
    }
    // Commit whatever was persisted, even when the reply fails.
    struct Commit {
        Entry& e;
        SessionState& s;
        ~Commit() {
            std::lock_guard lock(e.state_mutex);
            e.state = s;
        }
    } commit{*e, working};
    return fn(working);
}

OpenedSession SessionManager::start(const std::string& student_id, const std::string& assessment_ref) {
    auto pack = registry_.shared(assessment_ref);
    auto opened = start_session(student_id, std::move(pack), channel_, llm_, options_);
    auto e = std::make_shared<Entry>();
    e->state = opened.state;
    std::lock_guard lock(map_mutex_);
    sessions_[opened.state.session_id] = std::move(e);
    return opened;
}

Utterance SessionManager::turn(const std::string& session_id, const std::string& student_text) {
    return exclusive(session_id, [&](SessionState& s) { return next_turn(s, student_text, channel_, llm_, options_); });
}

Utterance SessionManager::retry(const std::string& session_id) {
    return exclusive(session_id, [&](SessionState& s) { return retry_reply(s, channel_, llm_, options_); });
}

SessionState SessionManager::close(const std::string& session_id) {
    return exclusive(session_id, [&](SessionState& s) { return close_session(s, channel_); });
}

SessionState SessionManager::get(const std::string& session_id) const {
    auto e = entry(session_id);
    std::lock_guard lock(e->state_mutex);
    return e->state;
}

}  // namespace tutorloop
