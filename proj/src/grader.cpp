#include "tutorloop/grader.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <thread>

namespace tutorloop {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Files

std::vector<StudentResponse> parse_responses_jsonl(std::string_view text) {
    std::vector<StudentResponse> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            StudentResponse r;
            r.response_id = j.at("response_id").get<std::string>();
            r.student_id = j.at("student_id").get<std::string>();
            r.assessment_id = j.at("assessment_id").get<std::string>();
            r.text = j.at("text").get<std::string>();
            r.submitted_at = j.value("submitted_at", "");
            if (j.contains("human_score") && !j["human_score"].is_null()) r.human_score = j["human_score"].get<int>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError("responses line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::vector<StudentResponse> load_responses(const std::filesystem::path& path) {
    return parse_responses_jsonl(read_file(path));
}

json to_json(const GradeRecord& r) {
    json j;
    j["response_id"] = r.response_id;
    j["student_id"] = r.student_id;
    j["assessment_id"] = r.assessment_id;
    j["score"] = r.score;
    j["quotes"] = r.quotes;
    j["criterion_alignments"] = json::array();
    for (const auto& a : r.criterion_alignments) {
        j["criterion_alignments"].push_back(
            {{"criterion_id", a.criterion_id},
             {"met", a.met},
             {"quote_index", a.quote_index ? json(*a.quote_index) : json(nullptr)},
             {"rationale", a.rationale}});
    }
    j["raw_model_output"] = r.raw_model_output;
    j["stage"] = to_string(r.stage);
    j["model_config_fingerprint"] = r.model_config_fingerprint;
    return j;
}

GradeRecord grade_from_json(const json& j) {
    GradeRecord r;
    r.response_id = j.at("response_id").get<std::string>();
    r.student_id = j.at("student_id").get<std::string>();
    r.assessment_id = j.at("assessment_id").get<std::string>();
    r.score = j.at("score").get<int>();
    r.quotes = j.at("quotes").get<std::vector<std::string>>();
    for (const auto& a : j.at("criterion_alignments")) {
        CriterionAlignment al;
        al.criterion_id = a.at("criterion_id").get<std::string>();
        al.met = a.at("met").get<bool>();
        if (!a.at("quote_index").is_null()) al.quote_index = a.at("quote_index").get<std::size_t>();
        al.rationale = a.at("rationale").get<std::string>();
        r.criterion_alignments.push_back(std::move(al));
    }
    r.raw_model_output = j.at("raw_model_output").get<std::string>();
    r.stage = parse_pipeline_stage(j.at("stage").get<std::string>());
    r.model_config_fingerprint = j.at("model_config_fingerprint").get<std::string>();
    return r;
}

std::string grades_to_jsonl(std::span<const GradeRecord> records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

std::vector<GradeRecord> parse_grades_jsonl(std::string_view text) {
    std::vector<GradeRecord> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.push_back(grade_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError("grades line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output contract

namespace {

enum class Section { None, Quotes, Rationale, Score };

std::optional<Section> header_of(const std::string& line, std::string& rest) {
    static const std::pair<const char*, Section> kHeaders[] = {
        {"QUOTES:", Section::Quotes}, {"RATIONALE:", Section::Rationale}, {"SCORE:", Section::Score}};
    std::string t = trim(line);
    // Tolerate markdown emphasis around headers, e.g. "**SCORE:** 2".
    t.erase(std::remove(t.begin(), t.end(), '*'), t.end());
    for (const auto& [name, section] : kHeaders) {
        if (starts_with_ci(t, name)) {
            rest = trim(std::string_view(t).substr(std::char_traits<char>::length(name)));
            return section;
        }
    }
    return std::nullopt;
}

std::string strip_quote_marks(std::string s) {
    s = trim(s);
    static const std::string kOpen[] = {"\"", "“", "'"};
    static const std::string kClose[] = {"\"", "”", "'"};
    for (std::size_t i = 0; i < 3; ++i) {
        if (s.size() >= kOpen[i].size() + kClose[i].size() && s.starts_with(kOpen[i]) &&
            s.ends_with(kClose[i])) {
            return s.substr(kOpen[i].size(), s.size() - kOpen[i].size() - kClose[i].size());
        }
    }
    return s;
}

// "[1] "text"", "1. "text"", "- "text"" -> text
std::string quote_body(const std::string& line) {
    std::string t = trim(line);
    if (t.starts_with("[")) {
        auto close = t.find(']');
        if (close != std::string::npos) t = t.substr(close + 1);
    } else if (!t.empty() && std::isdigit(static_cast<unsigned char>(t[0]))) {
        std::size_t i = 0;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i < t.size() && (t[i] == '.' || t[i] == ')')) t = t.substr(i + 1);
    } else if (t.starts_with("- ") || t.starts_with("* ")) {
        t = t.substr(2);
    }
    return strip_quote_marks(t);
}

std::vector<std::string> split_pipes(const std::string& line, std::size_t max_fields) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (fields.size() + 1 < max_fields) {
        auto bar = line.find('|', start);
        if (bar == std::string::npos) break;
        fields.push_back(trim(std::string_view(line).substr(start, bar - start)));
        start = bar + 1;
    }
    fields.push_back(trim(std::string_view(line).substr(start)));
    return fields;
}

bool is_none_marker(const std::string& t) {
    const auto l = to_lower(trim(t));
    return l.empty() || l == "(none)" || l == "none" || l == "-";
}

}  // namespace

ParsedGrade parse_grader_output(std::string_view raw, std::string_view response_text,
                                const Rubric& rubric) {
    std::vector<std::string> quote_lines, rationale_lines;
    std::optional<std::string> score_text;
    bool saw_quotes = false, saw_rationale = false;
    Section current = Section::None;

    for (const auto& line : split_lines(raw)) {
        std::string rest;
        if (auto h = header_of(line, rest)) {
            current = *h;
            if (current == Section::Quotes) saw_quotes = true;
            if (current == Section::Rationale) saw_rationale = true;
            if (current == Section::Score) {
                if (score_text) throw ParseError("SCORE section appears twice");
                score_text = rest;
            } else if (!rest.empty()) {
                (current == Section::Quotes ? quote_lines : rationale_lines).push_back(rest);
            }
            continue;
        }
        if (trim(line).empty()) continue;
        switch (current) {
            case Section::Quotes: quote_lines.push_back(line); break;
            case Section::Rationale: rationale_lines.push_back(line); break;
            case Section::Score:
                if (score_text && score_text->empty()) *score_text = trim(line);
                break;
            case Section::None: break;
        }
    }
    if (!saw_quotes) throw ParseError("missing QUOTES section");
    if (!saw_rationale) throw ParseError("missing RATIONALE section");
    if (!score_text) throw ParseError("missing SCORE section");

    ParsedGrade out;

    // SCORE
    {
        const std::string s = trim(*score_text);
        int value = 0;
        const char* first = s.data();
        if (!s.empty() && s[0] == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
        if (ec != std::errc() || ptr == first) throw ParseError("SCORE is not an integer: '" + s + "'");
        if (!rubric.scale.contains(value)) {
            throw ScoreOutOfScale("score " + std::to_string(value) + " outside 0.." +
                                  std::to_string(rubric.scale.max_score()));
        }
        out.score = value;
    }

    // QUOTES
    for (const auto& line : quote_lines) {
        if (is_none_marker(line)) continue;
        const std::string q = quote_body(line);
        if (is_none_marker(q)) continue;
        auto span = find_normalized(response_text, q);
        if (!span) throw ParseError("quote not verbatim: \"" + q + "\"");
        out.quotes.emplace_back(response_text.substr(span->offset, span->length));
    }

    // RATIONALE
    for (const auto& line : rationale_lines) {
        auto fields = split_pipes(line, 4);
        if (fields.size() < 4) {
            if (out.alignments.empty()) throw ParseError("RATIONALE line is not 'criterion | met | quote | text'");
            out.alignments.back().rationale += " " + trim(line);
            continue;
        }
        CriterionAlignment a;
        a.criterion_id = fields[0];
        if (!a.criterion_id.empty() && a.criterion_id.front() == '[' && a.criterion_id.back() == ']') {
            a.criterion_id = a.criterion_id.substr(1, a.criterion_id.size() - 2);
        }
        if (!rubric.find(a.criterion_id)) throw ParseError("unknown criterion '" + a.criterion_id + "'");
        const auto met = to_lower(fields[1]);
        if (met == "met") a.met = true;
        else if (met == "unmet" || met == "not met") a.met = false;
        else throw ParseError("criterion status must be met or unmet, got '" + fields[1] + "'");
        if (!is_none_marker(fields[2])) {
            std::string idx = fields[2];
            if (!idx.empty() && idx.front() == '[' && idx.back() == ']') idx = idx.substr(1, idx.size() - 2);
            std::size_t n = 0;
            auto [ptr, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), n);
            if (ec != std::errc() || ptr != idx.data() + idx.size() || n < 1 || n > out.quotes.size()) {
                throw ParseError("quote reference '" + fields[2] + "' out of range");
            }
            a.quote_index = n - 1;
        }
        a.rationale = fields[3];
        out.alignments.push_back(std::move(a));
    }
    if (out.alignments.empty()) throw ParseError("RATIONALE section is empty");
    return out;
}

// ---------------------------------------------------------------------------
// Grading

namespace {

void check_response(const AssessmentPack& pack, const StudentResponse& r) {
    if (trim(r.response_id).empty()) throw ValidationError("response has no id");
    if (trim(r.student_id).empty()) throw ValidationError("response '" + r.response_id + "' has no student id");
    if (trim(r.text).empty()) throw ValidationError("response '" + r.response_id + "' is empty");
    if (r.assessment_id != pack.assessment_id()) {
        throw ValidationError("response '" + r.response_id + "' is for " + r.assessment_id + ", pack grades " +
                              pack.assessment_id());
    }
}

}  // namespace

GradeRecord grade_response(const AssessmentPack& pack, const StudentResponse& response,
                           PipelineStage stage, const ErrorLedger& ledger, llm::LlmClient& llm,
                           const PackRegistry* registry) {
    check_response(pack, response);
    const auto prompt = build_grading_prompt(pack, stage, ledger, registry);

    std::vector<llm::Message> messages{{llm::Role::System, prompt.system_text},
                                       {llm::Role::User, prompt.user_message(response.text)}};
    auto completion = llm.complete(messages);
    ParsedGrade parsed;
    try {
        parsed = parse_grader_output(completion.text, response.text, pack.rubric);
    } catch (const ParseError& first) {
        messages.push_back({llm::Role::Assistant, completion.text});
        messages.push_back({llm::Role::User,
                            std::string("Your reply did not follow the required format (") + first.what() +
                                "). Reply again using exactly the QUOTES, RATIONALE and SCORE sections, "
                                "quoting the student's words exactly."});
        completion = llm.complete(messages);
        try {
            parsed = parse_grader_output(completion.text, response.text, pack.rubric);
        } catch (const ParseError& second) {
            throw ParseError(std::string("after reprompt: ") + second.what());
        }
    }

    GradeRecord record;
    record.response_id = response.response_id;
    record.student_id = response.student_id;
    record.assessment_id = response.assessment_id;
    record.score = parsed.score;
    record.quotes = std::move(parsed.quotes);
    record.criterion_alignments = std::move(parsed.alignments);
    record.raw_model_output = completion.text;
    record.stage = stage;
    record.model_config_fingerprint = llm.config().fingerprint();
    return record;
}

BatchResult batch_grade(const AssessmentPack& pack, std::span<const StudentResponse> responses,
                        PipelineStage stage, const ErrorLedger& ledger, llm::LlmClient& llm,
                        const PackRegistry* registry, unsigned parallelism) {
    struct Slot {
        std::optional<GradeRecord> record;
        std::optional<GradeFailure> failure;
    };
    std::vector<Slot> slots(responses.size());
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < responses.size(); i = next++) {
            const auto& r = responses[i];
            try {
                slots[i].record = grade_response(pack, r, stage, ledger, llm, registry);
            } catch (const Error& e) {
                slots[i].failure = GradeFailure{r.response_id, e.tag(), e.what()};
            }
        }
    };

    const unsigned n = std::max(1u, std::min<unsigned>(parallelism, static_cast<unsigned>(responses.size())));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    BatchResult result;
    for (auto& s : slots) {
        if (s.record) result.records.push_back(std::move(*s.record));
        if (s.failure) result.failures.push_back(std::move(*s.failure));
    }
    return result;
}

}  // namespace tutorloop
