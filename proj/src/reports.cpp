#include "tutorloop/reports.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace tutorloop {

using json = nlohmann::ordered_json;

std::string scored_pairs_to_jsonl(std::span<const ScoredPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        out += json{{"assessment_id", p.assessment_id},
                    {"stage", to_string(p.stage)},
                    {"response_id", p.response_id},
                    {"k", p.k},
                    {"human", p.human},
                    {"machine", p.machine}}
                   .dump() +
               "\n";
    }
    return out;
}

std::vector<ScoredPair> parse_scored_pairs_jsonl(std::string_view text) {
    std::vector<ScoredPair> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            ScoredPair p;
            p.assessment_id = j.at("assessment_id").get<std::string>();
            p.stage = parse_pipeline_stage(j.at("stage").get<std::string>());
            p.response_id = j.value("response_id", "");
            p.k = j.at("k").get<int>();
            p.human = j.at("human").get<int>();
            p.machine = j.at("machine").get<int>();
            out.push_back(std::move(p));
        } catch (const json::exception& e) {
            throw ParseError("scored pairs line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

ScoringEval run_scoring_eval(const AssessmentPack& pack, std::span<const StudentResponse> responses,
                             std::span<const PipelineStage> stages, const ErrorLedger& ledger, llm::LlmClient& llm,
                             const PackRegistry* registry, unsigned parallelism) {
    for (const auto& r : responses) {
        if (!r.human_score) throw ValidationError("response '" + r.response_id + "' has no human score");
        if (!pack.rubric.scale.contains(*r.human_score)) {
            throw LabelOutOfRange("human score for '" + r.response_id + "' is off the scale");
        }
    }
    ScoringEval eval;
    for (auto stage : stages) {
        auto batch = batch_grade(pack, responses, stage, ledger, llm, registry, parallelism);
        std::map<std::string, int> machine;
        for (const auto& g : batch.records) machine[g.response_id] = g.score;
        for (const auto& r : responses) {
            auto it = machine.find(r.response_id);
            if (it == machine.end()) continue;
            eval.pairs.push_back({pack.assessment_id(), stage, r.response_id, pack.rubric.scale.k(), *r.human_score,
                                  it->second});
        }
        for (auto& f : batch.failures) eval.failures.emplace_back(stage, std::move(f));
    }
    return eval;
}

std::string render_estimate(const metrics::AgreementReport& r, double scale) {
    return format_fixed(r.point * scale, 2) + " ± " + format_fixed(r.half_width() * scale, 2);
}

namespace {

std::string pad(const std::string& s, std::size_t width) {
    // width counts code points so "±" lines up
    std::size_t cps = 0;
    for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
    return s + std::string(width > cps ? width - cps : 0, ' ');
}

std::string row(const std::vector<std::string>& cells, const std::vector<std::size_t>& widths) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += " | ";
        out += i + 1 == cells.size() ? cells[i] : pad(cells[i], widths[i]);
    }
    const auto end = out.find_last_not_of(' ');
    return end == std::string::npos ? std::string() : out.substr(0, end + 1);
}

std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& r : rows) {
        if (widths.size() < r.size()) widths.resize(r.size(), 0);
        for (std::size_t i = 0; i < r.size(); ++i) {
            std::size_t cps = 0;
            for (unsigned char c : r[i]) cps += (c & 0xC0) != 0x80;
            widths[i] = std::max(widths[i], cps);
        }
    }
    std::string out;
    for (const auto& r : rows) out += row(r, widths) + "\n";
    return out;
}

json report_json(const metrics::AgreementReport& r) {
    return json{{"metric", r.metric}, {"point", r.point},   {"ci_low", r.ci_low},       {"ci_high", r.ci_high},
                {"n", r.n},           {"seed", r.seed},     {"resamples", r.resamples}, {"level", r.level}};
}

std::string stage_label(PipelineStage s) {
    switch (s) {
        case PipelineStage::IO: return "I/O";
        case PipelineStage::ICL: return "ICL";
        case PipelineStage::CoT: return "CoT";
        case PipelineStage::AL: return "AL";
    }
    return "?";
}

std::string bootstrap_note(const metrics::BootstrapOptions& o) {
    return "95% percentile bootstrap, B = " + std::to_string(o.resamples) + ", seed = " + std::to_string(o.seed) +
           "; values are percentages, ± is the CI half-width";
}

}  // namespace

ScoringReport scoring_report(std::span<const ScoredPair> pairs, const metrics::BootstrapOptions& options) {
    if (pairs.empty()) throw EmptyInput("no scored pairs");
    ScoringReport report;
    report.bootstrap = options;
    std::map<std::pair<PipelineStage, std::string>, std::vector<metrics::LabelPair>> groups;
    std::map<std::string, int> k_of;
    for (const auto& p : pairs) {
        auto [it, inserted] = k_of.emplace(p.assessment_id, p.k);
        if (!inserted && it->second != p.k) throw ValidationError("inconsistent k for " + p.assessment_id);
        groups[{p.stage, p.assessment_id}].push_back({p.response_id, p.human, p.machine});
    }
    std::set<PipelineStage> stages;
    for (const auto& [key, _] : groups) stages.insert(key.first);
    report.stages.assign(stages.begin(), stages.end());
    for (const auto& [aid, _] : k_of) report.assessments.push_back(aid);

    for (const auto& [key, group] : groups) {
        const int k = k_of.at(key.second);
        ScoringCell cell;
        cell.n = group.size();
        cell.f1 = metrics::bootstrap_ci(
            group, [k](std::span<const metrics::LabelPair> s) { return std::optional<double>(metrics::micro_f1(s, k)); },
            "micro_f1", options);
        cell.kappa = metrics::bootstrap_ci(
            group,
            [k](std::span<const metrics::LabelPair> s) {
                return std::optional<double>(metrics::quadratic_weighted_kappa(s, k));
            },
            "quadratic_weighted_kappa", options);
        report.cells[key] = std::move(cell);
    }
    return report;
}

std::string render_scoring_report(const ScoringReport& report) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Stage", "M"};
    for (const auto& a : report.assessments) header.push_back(a);
    rows.push_back(header);
    for (auto stage : report.stages) {
        std::vector<std::string> f1{stage_label(stage), "F1"};
        std::vector<std::string> kw{"", "k_w"};
        for (const auto& a : report.assessments) {
            auto it = report.cells.find({stage, a});
            f1.push_back(it == report.cells.end() ? "--" : render_estimate(it->second.f1, 100.0));
            kw.push_back(it == report.cells.end() ? "--" : render_estimate(it->second.kappa, 100.0));
        }
        rows.push_back(f1);
        rows.push_back(kw);
    }
    std::string out = "Scoring agreement\n" + render_table(rows);
    out += "n:";
    for (const auto& a : report.assessments) {
        std::size_t n = 0;
        for (auto stage : report.stages) {
            if (auto it = report.cells.find({stage, a}); it != report.cells.end()) n = std::max(n, it->second.n);
        }
        out += " " + a + " = " + std::to_string(n) + ";";
    }
    out += "\n" + bootstrap_note(report.bootstrap) + "\n";
    return out;
}

json to_json(const ScoringReport& report) {
    json j;
    j["text"] = render_scoring_report(report);
    j["assessments"] = report.assessments;
    json stages = json::array();
    for (auto s : report.stages) stages.push_back(to_string(s));
    j["stages"] = stages;
    json cells = json::array();
    for (const auto& [key, cell] : report.cells) {
        cells.push_back({{"stage", to_string(key.first)},
                         {"assessment_id", key.second},
                         {"n", cell.n},
                         {"f1", report_json(cell.f1)},
                         {"kappa_w", report_json(cell.kappa)},
                         {"f1_text", render_estimate(cell.f1, 100.0)},
                         {"kappa_w_text", render_estimate(cell.kappa, 100.0)}});
    }
    j["cells"] = cells;
    return j;
}

FaithReport faithfulness_report(const JudgeRun& run, const metrics::BootstrapOptions& options) {
    if (run.labels.empty()) throw EmptyInput("no construct labels");
    FaithReport report;
    report.bootstrap = options;
    std::map<std::pair<std::string, ConstructTag>, std::vector<int>> groups;
    std::set<std::string> assessments;
    for (const auto& l : run.labels) {
        if (!in_codomain(l.construct, l.label)) throw ValidationError("label outside codomain");
        groups[{l.assessment_id, l.construct}].push_back(l.label);
        assessments.insert(l.assessment_id);
    }
    for (const auto& f : run.failures) {
        ++report.excluded[{f.assessment_id, f.construct}];
        assessments.insert(f.assessment_id);
    }
    report.assessments.assign(assessments.begin(), assessments.end());

    for (const auto& [key, labels] : groups) {
        const bool binary = construct_info(key.second).codomain == metrics::Codomain::Binary;
        FaithCell cell;
        cell.n = labels.size();
        cell.rates = metrics::faithfulness_rates({to_string(key.second),
                                                  binary ? metrics::Codomain::Binary : metrics::Codomain::Ternary,
                                                  labels});
        const int unfaithful = binary ? 0 : -1;
        auto share = [&labels](int value) {
            return [&labels, value](std::span<const std::size_t> idx) {
                std::size_t hits = 0;
                for (auto i : idx) hits += labels[i] == value;
                return std::optional<double>(100.0 * static_cast<double>(hits) / static_cast<double>(idx.size()));
            };
        };
        cell.f = metrics::bootstrap_ci(labels.size(), share(1), "F", options);
        cell.unf = metrics::bootstrap_ci(labels.size(), share(unfaithful), "UNF", options);
        report.cells[key] = std::move(cell);
    }
    return report;
}

std::string render_faithfulness_report(const FaithReport& report) {
    std::string out;
    const std::pair<const char*, ConstructKind> sections[] = {{"Theoretical constructs", ConstructKind::Theoretical},
                                                              {"Teacher constructs", ConstructKind::Teacher}};
    for (const auto& [title, kind] : sections) {
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"FA"};
        for (const auto& c : all_constructs()) {
            if (c.kind != kind) continue;
            header.push_back(to_string(c.tag) + " F");
            header.push_back(to_string(c.tag) + " UNF");
        }
        rows.push_back(header);
        for (const auto& a : report.assessments) {
            std::vector<std::string> r{a};
            for (const auto& c : all_constructs()) {
                if (c.kind != kind) continue;
                auto it = report.cells.find({a, c.tag});
                r.push_back(it == report.cells.end() ? "--" : render_estimate(it->second.f, 1.0));
                r.push_back(it == report.cells.end() ? "--" : render_estimate(it->second.unf, 1.0));
            }
            rows.push_back(r);
        }
        out += std::string(title) + "\n" + render_table(rows) + "\n";
    }
    std::vector<std::vector<std::string>> counts;
    std::vector<std::string> header{"FA"};
    for (const auto& c : all_constructs()) header.push_back(to_string(c.tag));
    counts.push_back(header);
    std::size_t total_excluded = 0;
    for (const auto& a : report.assessments) {
        std::vector<std::string> r{a};
        for (const auto& c : all_constructs()) {
            auto it = report.cells.find({a, c.tag});
            auto ex = report.excluded.find({a, c.tag});
            const std::size_t excluded = ex == report.excluded.end() ? 0 : ex->second;
            total_excluded += excluded;
            std::string cell = std::to_string(it == report.cells.end() ? 0 : it->second.n);
            if (excluded) cell += " (-" + std::to_string(excluded) + ")";
            r.push_back(cell);
        }
        counts.push_back(r);
    }
    out += "Labelled utterances (N)\n" + render_table(counts);
    out += "Excluded after failed judge calls: " + std::to_string(total_excluded) + "\n";
    out += bootstrap_note(report.bootstrap) + "\n";
    return out;
}

json to_json(const FaithReport& report) {
    json j;
    j["text"] = render_faithfulness_report(report);
    j["assessments"] = report.assessments;
    json cells = json::array();
    for (const auto& [key, cell] : report.cells) {
        auto ex = report.excluded.find(key);
        cells.push_back({{"assessment_id", key.first},
                         {"construct", to_string(key.second)},
                         {"n", cell.n},
                         {"excluded", ex == report.excluded.end() ? 0 : ex->second},
                         {"f", cell.rates.f.to_double()},
                         {"unf", cell.rates.unf.to_double()},
                         {"neu", cell.rates.neu.to_double()},
                         {"f_ci", report_json(cell.f)},
                         {"unf_ci", report_json(cell.unf)},
                         {"f_text", render_estimate(cell.f, 1.0)},
                         {"unf_text", render_estimate(cell.unf, 1.0)}});
    }
    j["cells"] = cells;
    return j;
}

}  // namespace tutorloop
