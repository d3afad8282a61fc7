#include "tutorloop/evidence_store.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <mutex>
#include <set>

namespace tutorloop {

using json = nlohmann::ordered_json;

std::string to_string(Speaker s) { return s == Speaker::Agent ? "agent" : "student"; }

Speaker parse_speaker(std::string_view text) {
    if (text == "agent") return Speaker::Agent;
    if (text == "student") return Speaker::Student;
    throw ParseError("unknown speaker '" + std::string(text) + "'");
}

std::string to_string(EvidenceKind k) {
    switch (k) {
        case EvidenceKind::Grade: return "grade";
        case EvidenceKind::StudentUtterance: return "student_utterance";
        case EvidenceKind::AgentUtterance: return "agent_utterance";
        case EvidenceKind::SessionStart: return "session_start";
        case EvidenceKind::SessionSummary: return "session_summary";
    }
    return "grade";
}

EvidenceKind parse_evidence_kind(std::string_view text) {
    for (auto k : {EvidenceKind::Grade, EvidenceKind::StudentUtterance, EvidenceKind::AgentUtterance,
                   EvidenceKind::SessionStart, EvidenceKind::SessionSummary}) {
        if (to_string(k) == text) return k;
    }
    throw ParseError("unknown evidence kind '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Records

json to_json(const EvidenceItem& item) {
    json j;
    j["student_id"] = item.student_id;
    j["sequence_no"] = item.sequence_no;
    j["kind"] = to_string(item.kind);
    j["created_at"] = item.created_at;
    json p;
    if (const auto* g = std::get_if<GradeRecord>(&item.payload)) {
        p = to_json(*g);
    } else if (const auto* u = std::get_if<Utterance>(&item.payload)) {
        p["session_id"] = u->session_id;
        p["turn_index"] = u->turn_index;
        p["speaker"] = to_string(u->speaker);
        p["text"] = u->text;
        p["created_at"] = u->created_at;
    } else if (const auto* s = std::get_if<SessionStart>(&item.payload)) {
        p["session_id"] = s->session_id;
        p["assessment_id"] = s->assessment_id;
    } else if (const auto* m = std::get_if<SessionSummary>(&item.payload)) {
        p["session_id"] = m->session_id;
        p["assessment_id"] = m->assessment_id;
        p["agent_turns"] = m->agent_turns;
        p["student_turns"] = m->student_turns;
    }
    j["payload"] = std::move(p);
    return j;
}

EvidenceItem evidence_from_json(const json& j) {
    EvidenceItem item;
    item.student_id = j.at("student_id").get<std::string>();
    item.sequence_no = j.at("sequence_no").get<std::uint64_t>();
    item.kind = parse_evidence_kind(j.at("kind").get<std::string>());
    item.created_at = j.at("created_at").get<std::string>();
    const auto& p = j.at("payload");
    switch (item.kind) {
        case EvidenceKind::Grade: item.payload = grade_from_json(p); break;
        case EvidenceKind::StudentUtterance:
        case EvidenceKind::AgentUtterance: {
            Utterance u;
            u.session_id = p.at("session_id").get<std::string>();
            u.turn_index = p.at("turn_index").get<int>();
            u.speaker = parse_speaker(p.at("speaker").get<std::string>());
            u.text = p.at("text").get<std::string>();
            u.created_at = p.at("created_at").get<std::string>();
            const auto expected = item.kind == EvidenceKind::AgentUtterance ? Speaker::Agent : Speaker::Student;
            if (u.speaker != expected) throw ParseError("utterance speaker disagrees with item kind");
            item.payload = std::move(u);
            break;
        }
        case EvidenceKind::SessionStart:
            item.payload = SessionStart{p.at("session_id").get<std::string>(), p.at("assessment_id").get<std::string>()};
            break;
        case EvidenceKind::SessionSummary:
            item.payload = SessionSummary{p.at("session_id").get<std::string>(), p.at("assessment_id").get<std::string>(),
                                          p.at("agent_turns").get<int>(), p.at("student_turns").get<int>()};
            break;
    }
    return item;
}

std::vector<EvidenceItem> parse_evidence_jsonl(std::string_view text) {
    std::vector<EvidenceItem> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(evidence_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError("evidence line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string evidence_to_jsonl(std::span<const EvidenceItem> items) {
    std::string out;
    for (const auto& i : items) out += to_json(i).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Snapshot

const GradeRecord* EvidenceSnapshot::grade_for(const std::string& assessment_id) const {
    auto it = latest_grades.find(assessment_id);
    return it == latest_grades.end() ? nullptr : &it->second;
}

EvidenceSnapshot fold_snapshot(const std::string& student_id, std::span<const EvidenceItem> items,
                               std::size_t window) {
    EvidenceSnapshot snap;
    snap.student_id = student_id;
    std::vector<const Utterance*> utterances;
    for (const auto& item : items) {
        if (item.student_id != student_id) continue;
        snap.through_sequence_no = std::max(snap.through_sequence_no, item.sequence_no);
        if (const auto* g = std::get_if<GradeRecord>(&item.payload)) {
            snap.latest_grades[g->assessment_id] = *g;
            auto& per_criterion = snap.mastery[g->assessment_id];
            for (const auto& a : g->criterion_alignments) {
                auto& m = per_criterion[a.criterion_id];
                ++m.times_graded;
                if (a.met) ++m.times_met;
            }
            // latest grade decides the current flag; criteria it omits are unmet
            for (auto& [cid, m] : per_criterion) {
                m.met = std::any_of(g->criterion_alignments.begin(), g->criterion_alignments.end(),
                                    [&](const CriterionAlignment& a) { return a.criterion_id == cid && a.met; });
            }
        } else if (const auto* u = std::get_if<Utterance>(&item.payload)) {
            utterances.push_back(u);
        }
    }
    const std::size_t first = utterances.size() > window ? utterances.size() - window : 0;
    for (std::size_t i = first; i < utterances.size(); ++i) snap.recent_utterances.push_back(*utterances[i]);
    return snap;
}

// ---------------------------------------------------------------------------
// Store

namespace {

void append_durably(const std::filesystem::path& path, std::string_view line) {
    const int fd = ::open(path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw StorageError("cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t done = 0;
    while (done < line.size()) {
        const auto n = ::write(fd, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            const int err = errno;
            ::close(fd);
            throw StorageError("write to " + path.string() + " failed: " + std::strerror(err));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0) {
        const int err = errno;
        ::close(fd);
        throw StorageError("fsync of " + path.string() + " failed: " + std::strerror(err));
    }
    ::close(fd);
}

void check_payload(const EvidenceItem& item) {
    if (trim(item.student_id).empty()) throw ValidationError("evidence item has no student id");
    auto need = [](bool ok, const char* what) {
        if (!ok) throw ValidationError(std::string("evidence payload invalid: ") + what);
    };
    switch (item.kind) {
        case EvidenceKind::Grade: {
            const auto* g = std::get_if<GradeRecord>(&item.payload);
            need(g, "grade item without a grade record");
            need(g->student_id == item.student_id, "grade belongs to another student");
            break;
        }
        case EvidenceKind::StudentUtterance:
        case EvidenceKind::AgentUtterance: {
            const auto* u = std::get_if<Utterance>(&item.payload);
            need(u, "utterance item without an utterance");
            need(!u->session_id.empty(), "utterance without a session id");
            need(u->turn_index >= 1, "turn index must be positive");
            need(u->speaker == (item.kind == EvidenceKind::AgentUtterance ? Speaker::Agent : Speaker::Student),
                 "speaker disagrees with item kind");
            break;
        }
        case EvidenceKind::SessionStart: {
            const auto* s = std::get_if<SessionStart>(&item.payload);
            need(s && !s->session_id.empty() && !s->assessment_id.empty(), "session start without ids");
            break;
        }
        case EvidenceKind::SessionSummary: {
            const auto* s = std::get_if<SessionSummary>(&item.payload);
            need(s && !s->session_id.empty(), "session summary without a session id");
            break;
        }
    }
}

}  // namespace

EvidenceStore::EvidenceStore() : clock_(utc_now_iso8601) {}

EvidenceStore::EvidenceStore(std::filesystem::path log_path, Clock clock)
    : path_(std::move(log_path)), clock_(clock ? std::move(clock) : Clock(utc_now_iso8601)) {
    load();
}

void EvidenceStore::load() {
    std::error_code ec;
    if (!std::filesystem::exists(*path_, ec)) return;
    const std::string text = read_file(*path_);
    std::map<std::string, std::uint64_t> last_seq;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        EvidenceItem item;
        try {
            item = evidence_from_json(json::parse(line));
        } catch (const std::exception& e) {
            throw StorageError(path_->string() + ":" + std::to_string(line_no) + ": unreadable item: " + e.what());
        }
        auto& last = last_seq[item.student_id];
        if (item.sequence_no != last + 1) {
            throw StorageError(path_->string() + ":" + std::to_string(line_no) + ": sequence gap for student '" +
                               item.student_id + "'");
        }
        last = item.sequence_no;
        by_student_[item.student_id].push_back(items_.size());
        items_.push_back(std::move(item));
    }
    if (!text.empty() && text.back() != '\n') {
        throw StorageError(path_->string() + ": log ends with an incomplete record");
    }
    log_ = text;
}

std::uint64_t EvidenceStore::append_locked(EvidenceItem item) {
    check_payload(item);
    std::unique_lock lock(mutex_);
    auto& idx = by_student_[item.student_id];
    item.sequence_no = idx.empty() ? 1 : items_[idx.back()].sequence_no + 1;
    item.created_at = clock_();
    if (auto* u = std::get_if<Utterance>(&item.payload); u && u->created_at.empty()) u->created_at = item.created_at;
    const std::string line = to_json(item).dump() + "\n";
    if (path_) append_durably(*path_, line);
    log_ += line;
    idx.push_back(items_.size());
    const auto seq = item.sequence_no;
    items_.push_back(std::move(item));
    return seq;
}

std::uint64_t EvidenceStore::append_evidence(EvidenceItem item) {
    if (item.kind == EvidenceKind::Grade) {
        throw ValidationError("grade items are written only through GradeWriter");
    }
    return append_locked(std::move(item));
}

EvidenceSnapshot EvidenceStore::snapshot_for_prompt(const std::string& student_id, std::size_t window) const {
    return fold_snapshot(student_id, items_for(student_id), window);
}

std::vector<EvidenceItem> EvidenceStore::items_for(const std::string& student_id) const {
    std::shared_lock lock(mutex_);
    std::vector<EvidenceItem> out;
    auto it = by_student_.find(student_id);
    if (it == by_student_.end()) return out;
    out.reserve(it->second.size());
    for (auto i : it->second) out.push_back(items_[i]);
    return out;
}

std::vector<EvidenceItem> EvidenceStore::all_items() const {
    std::shared_lock lock(mutex_);
    return items_;
}

std::vector<std::string> EvidenceStore::students() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, idx] : by_student_) {
        if (!idx.empty()) out.push_back(id);
    }
    return out;
}

std::optional<GradeRecord> EvidenceStore::latest_grade(const std::string& student_id,
                                                       const std::string& assessment_id) const {
    std::shared_lock lock(mutex_);
    auto it = by_student_.find(student_id);
    if (it == by_student_.end()) return std::nullopt;
    for (auto r = it->second.rbegin(); r != it->second.rend(); ++r) {
        if (const auto* g = std::get_if<GradeRecord>(&items_[*r].payload); g && g->assessment_id == assessment_id) {
            return *g;
        }
    }
    return std::nullopt;
}

std::vector<GradeRecord> EvidenceStore::latest_grades_for(const std::string& assessment_id) const {
    std::vector<GradeRecord> out;
    for (const auto& s : students()) {
        if (auto g = latest_grade(s, assessment_id)) out.push_back(std::move(*g));
    }
    return out;
}

std::string EvidenceStore::serialized_log() const {
    std::shared_lock lock(mutex_);
    return log_;
}

std::string EvidenceStore::export_jsonl(const std::optional<std::string>& student_id) const {
    if (!student_id) return serialized_log();
    return evidence_to_jsonl(items_for(*student_id));
}

// ---------------------------------------------------------------------------
// Facades

std::uint64_t GradeWriter::append(const GradeRecord& record, const Rubric& rubric) {
    if (!rubric.scale.contains(record.score)) {
        throw ScoreOutOfScale("refusing to store score " + std::to_string(record.score));
    }
    for (const auto& a : record.criterion_alignments) {
        if (!rubric.find(a.criterion_id)) throw ValidationError("grade cites unknown criterion '" + a.criterion_id + "'");
        if (a.quote_index && *a.quote_index >= record.quotes.size()) {
            throw ValidationError("grade alignment cites a missing quote");
        }
    }
    if (record.response_id.empty() || record.assessment_id.empty()) throw ValidationError("grade without ids");
    EvidenceItem item;
    item.student_id = record.student_id;
    item.kind = EvidenceKind::Grade;
    item.payload = record;
    return store_.append_locked(std::move(item));
}

std::uint64_t DialogueChannel::append_utterance(const std::string& student_id, const Utterance& u) {
    EvidenceItem item;
    item.student_id = student_id;
    item.kind = u.speaker == Speaker::Agent ? EvidenceKind::AgentUtterance : EvidenceKind::StudentUtterance;
    item.payload = u;
    return store_.append_evidence(std::move(item));
}

std::uint64_t DialogueChannel::append_session_start(const std::string& student_id, const SessionStart& s) {
    EvidenceItem item;
    item.student_id = student_id;
    item.kind = EvidenceKind::SessionStart;
    item.payload = s;
    return store_.append_evidence(std::move(item));
}

std::uint64_t DialogueChannel::append_session_summary(const std::string& student_id, const SessionSummary& s) {
    EvidenceItem item;
    item.student_id = student_id;
    item.kind = EvidenceKind::SessionSummary;
    item.payload = s;
    return store_.append_evidence(std::move(item));
}

}  // namespace tutorloop
