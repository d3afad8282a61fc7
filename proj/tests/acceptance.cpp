// Acceptance run: one PASS/FAIL line per criterion, with wall time against
// its budget. Everything runs offline from the bundled data directory.

#include "tutorloop/errors.hpp"
#include "tutorloop/evidence_store.hpp"
#include "tutorloop/grader.hpp"
#include "tutorloop/judge.hpp"
#include "tutorloop/metrics.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/pipeline.hpp"
#include "tutorloop/readability.hpp"
#include "tutorloop/reports.hpp"
#include "tutorloop/text_util.hpp"
#include "tutorloop/tutor.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace tutorloop;
using namespace tutorloop::metrics;

namespace {

const fs::path kData = TUTORLOOP_DATA_DIR;

struct Failed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Failed(what);
}

template <typename A, typename B>
void require_eq(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) {
        std::ostringstream s;
        s << what << ": got " << got << ", want " << want;
        throw Failed(s.str());
    }
}

int failures = 0;

void criterion(const std::string& name, double budget_ms, const std::function<void()>& body) {
    const auto start = std::chrono::steady_clock::now();
    std::string problem;
    try {
        body();
    } catch (const std::exception& e) {
        problem = e.what();
    }
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    if (problem.empty() && ms > budget_ms) problem = "over budget of " + format_fixed(budget_ms, 0) + " ms";
    std::cout << (problem.empty() ? "PASS" : "FAIL") << "  " << name << "  (" << format_fixed(ms, 1) << " ms)";
    if (!problem.empty()) {
        std::cout << ": " << problem;
        ++failures;
    }
    std::cout << "\n";
}

std::vector<LabelPair> pairs_of(const std::vector<int>& human, const std::vector<int>& machine) {
    std::vector<LabelPair> out;
    for (std::size_t i = 0; i < human.size(); ++i) out.push_back({"i" + std::to_string(i), human[i], machine[i]});
    return out;
}

// Observed, expected and weight matrices written out in full.
double kappa_by_matrices(const std::vector<LabelPair>& pairs, int k) {
    const double n = double(pairs.size());
    std::vector<std::vector<double>> O(k, std::vector<double>(k, 0.0)), E = O, W = O;
    for (const auto& p : pairs) O[p.human][p.machine] += 1.0 / n;
    std::vector<double> row(k, 0.0), col(k, 0.0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            row[i] += O[i][j];
            col[j] += O[i][j];
        }
    }
    double wo = 0, we = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            E[i][j] = row[i] * col[j];
            W[i][j] = double((i - j) * (i - j)) / double((k - 1) * (k - 1));
            wo += W[i][j] * O[i][j];
            we += W[i][j] * E[i][j];
        }
    }
    if (wo == 0.0) return 1.0;
    if (we == 0.0) return 0.0;
    return 1.0 - wo / we;
}

std::vector<LabelPair> random_pairs(std::mt19937_64& gen, int k, std::size_t n) {
    std::uniform_int_distribution<int> label(0, k - 1);
    std::vector<LabelPair> out(n);
    for (auto& p : out) {
        p.human = label(gen);
        p.machine = std::bernoulli_distribution(0.5)(gen) ? p.human : label(gen);
    }
    return out;
}

bool contains(const std::vector<std::string>& xs, const std::string& x) {
    return std::find(xs.begin(), xs.end(), x) != xs.end();
}

// ---------------------------------------------------------------------------

void kappa_oracle() {
    require_eq(quadratic_weighted_kappa(pairs_of({0, 1, 2}, {0, 1, 2}), 3), 1.0, "perfect agreement");
    require_eq(quadratic_weighted_kappa(pairs_of({0, 0}, {2, 2}), 3), 0.0, "systematic disagreement");
    require(std::abs(quadratic_weighted_kappa(pairs_of({0, 1, 2, 1}, {0, 2, 2, 1}), 3) - 0.8) <= 1e-12,
            "four-pair case is not 0.8");
    std::mt19937_64 gen(20240806);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + trial % 4;
        auto p = random_pairs(gen, k, 1 + gen() % 50);
        const double a = quadratic_weighted_kappa(p, k), b = kappa_by_matrices(p, k);
        require(std::abs(a - b) <= 1e-12, "trial " + std::to_string(trial) + " differs by " + std::to_string(a - b));
    }
}

void micro_f1_is_accuracy() {
    std::mt19937_64 gen(312);
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + trial % 4;
        auto p = random_pairs(gen, k, 1 + gen() % 60);
        const auto hits = std::count_if(p.begin(), p.end(), [](const LabelPair& x) { return x.human == x.machine; });
        require(micro_f1(p, k) == double(hits) / double(p.size()), "trial " + std::to_string(trial));
    }
}

void fkgl_exactness() {
    require(std::abs(fkgl({6, 1, 17}) - 20.183333333333333) <= 1e-9, "fkgl(6,1,17)");
    require(std::abs(fkgl({9, 2, 9}) - (-2.035)) <= 1e-9, "fkgl(9,2,9)");
    require_eq(readability_label(9.0), 0, "label at 9.0");
    require_eq(readability_label(std::nextafter(9.0, 0.0)), 1, "label just below 9.0");
    require(count_text_stats("The cat sat.") == TextStats{3, 1, 3}, "stats of a three-word sentence");
}

void faithfulness_algebra() {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 1000; ++trial) {
        const bool binary = trial % 3 == 0;
        std::vector<int> labels(1 + gen() % 97);
        for (auto& l : labels) l = binary ? int(gen() % 2) : int(gen() % 3) - 1;
        const auto r = faithfulness_rates({"X", binary ? Codomain::Binary : Codomain::Ternary, labels});
        require(r.f + r.unf + r.neu == Rational(100, 1), "rates do not sum to 100 in trial " + std::to_string(trial));
        if (binary) require(r.neu == Rational(0, 1), "binary sequence has a neutral share");
    }
}

void bootstrap_determinism() {
    std::mt19937_64 gen(1);
    auto p = random_pairs(gen, 3, 60);
    auto kappa = [](std::span<const LabelPair> s) { return std::optional<double>(quadratic_weighted_kappa(s, 3)); };
    BootstrapOptions serial;
    serial.seed = 312;
    serial.resamples = 2000;
    auto parallel = serial;
    parallel.parallelism = 8;
    const auto a = bootstrap_ci(p, kappa, "kappa_w", serial);
    const auto b = bootstrap_ci(p, kappa, "kappa_w", serial);
    const auto c = bootstrap_ci(p, kappa, "kappa_w", parallel);
    require(a == b, "two serial runs differ");
    require(a == c, "serial and parallel runs differ");
}

void stratified_split_counts() {
    std::vector<std::string> labels;
    labels.insert(labels.end(), 35, "0");
    labels.insert(labels.end(), 47, "1");
    labels.insert(labels.end(), 11, "2");
    std::mt19937_64 gen(5);
    std::shuffle(labels.begin(), labels.end(), gen);
    const auto s = stratified_split(labels, 50, 312);
    require_eq(s.holdout_per_class.at("0"), 19u, "class 0");
    require_eq(s.holdout_per_class.at("1"), 25u, "class 1");
    require_eq(s.holdout_per_class.at("2"), 6u, "class 2");
    require(stratified_split(labels, 50, 312).holdout == s.holdout, "same seed, different holdout");
}

void pipeline_staging() {
    const auto registry = PackRegistry::load_dir(kData / "packs");
    const auto& pack = registry.resolve("FA2");
    const auto ledger = ErrorLedger::load(kData / "ledgers" / "fa2_ledger.json");
    const auto io = build_grading_prompt(pack, PipelineStage::IO, ledger, &registry);
    const auto icl = build_grading_prompt(pack, PipelineStage::ICL, ledger, &registry);
    const auto cot = build_grading_prompt(pack, PipelineStage::CoT, ledger, &registry);
    const auto al = build_grading_prompt(pack, PipelineStage::AL, ledger, &registry);
    require(io.exemplar_blocks.empty() && io.revision_blocks.empty(), "IO carries exemplars");
    require(!icl.exemplar_blocks.empty(), "ICL has no exemplars");
    for (const auto& b : icl.exemplar_blocks) require(b.body.find("RATIONALE:") == std::string::npos, b.id + " has a rationale");
    for (const auto& ex : pack.examples) {
        if (ex.stage != ExampleStage::CoT) continue;
        auto it = std::find_if(cot.exemplar_blocks.begin(), cot.exemplar_blocks.end(),
                               [&](const PromptBlock& b) { return b.id == "exemplar:" + ex.id; });
        require(it != cot.exemplar_blocks.end(), "CoT lacks " + ex.id);
        for (const auto& q : ex.quoted_spans) require(it->body.find("\"" + q + "\"") != std::string::npos, "CoT drops a quote");
    }
    require(!al.revision_blocks.empty(), "AL has no revision blocks");
    for (std::size_t i = 0; i < cot.exemplar_blocks.size(); ++i) {
        require(al.exemplar_blocks.at(i) == cot.exemplar_blocks[i], "AL reorders the CoT exemplars");
    }
    for (const auto& id : cot.block_ids()) require(contains(al.block_ids(), id), "AL drops " + id);

    ErrorLedger trend;
    for (const char* id : {"a", "b"}) trend.add_entry({id, 1, 2, "c1", ErrorDirection::Over, ""});
    require(detect_error_trends(trend).empty(), "trend at support 2");
    trend.add_entry({"c", 1, 2, "c1", ErrorDirection::Over, ""});
    require_eq(detect_error_trends(trend).size(), 1u, "trends at support 3");
}

void end_to_end_replay() {
    const auto registry = PackRegistry::load_dir(kData / "packs");
    const auto& fa2 = registry.resolve("FA2");
    const auto responses = load_responses(kData / "responses" / "fa2_responses.jsonl");
    const auto ledger = ErrorLedger::load(kData / "ledgers" / "fa2_ledger.json");
    auto replay = std::make_shared<llm::ReplayBackend>(kData / "recordings");
    llm::LlmClient grader(replay, llm::ModelConfig::grading_defaults());

    const auto batch = batch_grade(fa2, responses, PipelineStage::CoT, ledger, grader, &registry);
    require(batch.failures.empty(), batch.failures.empty() ? "" : "grading failed: " + batch.failures[0].message);
    require_eq(batch.records.size(), 12u, "grade records");
    EvidenceStore store;
    GradeWriter writer(store);
    for (std::size_t i = 0; i < batch.records.size(); ++i) {
        const auto& rec = batch.records[i];
        require(!rec.quotes.empty() || rec.score == 0, rec.response_id + " has credit without quotes");
        for (const auto& q : rec.quotes) {
            require(responses[i].text.find(q) != std::string::npos, rec.response_id + " quote not verbatim: " + q);
        }
        writer.append(rec, fa2.rubric);
    }

    const auto session = nlohmann::json::parse(read_file(kData / "fixtures" / "tutor_session.json"));
    const std::string student = session.at("student_id");
    const auto grade_before = to_json(*store.latest_grade(student, "FA2")).dump();
    const auto log_before = store.serialized_log();

    llm::LlmClient tutor(replay, llm::ModelConfig::grading_defaults());
    SessionManager manager(store, registry, tutor, TutorOptions{.registry = &registry});
    const auto opened = manager.start(student, session.at("assessment_id").get<std::string>());
    int demands = 0;
    for (const auto& turn : session.at("turns")) {
        const std::string text = turn;
        for (const char* ask : {"change my score", "raise my grade", "change scores", "full credit", "score stays"}) {
            demands += text.find(ask) != std::string::npos;
        }
        manager.turn(opened.state.session_id, text);
    }
    manager.close(opened.state.session_id);
    require_eq(session.at("turns").size(), 6u, "scripted turns");
    require_eq(demands, 5, "scripted score-change demands");

    std::size_t utterances = 0;
    for (const auto& item : store.items_for(student)) utterances += item.is_utterance();
    require_eq(utterances, 13u, "utterances appended");
    require_eq(to_json(*store.latest_grade(student, "FA2")).dump(), grade_before, "stored grade");
    require(store.serialized_log().starts_with(log_before), "earlier log bytes changed");
    std::size_t grades = 0;
    for (const auto& item : store.all_items()) grades += item.kind == EvidenceKind::Grade;
    require_eq(grades, 12u, "grade items after the session");
}

void judge_gate() {
    // Human/judge ordinals for the SE construct (ternary, offset by one).
    struct Case {
        std::vector<std::pair<int, int>> pairs;
        double kappa;
        bool pass;
    };
    const Case cases[] = {
        {{{0, 0}, {1, 1}, {2, 2}, {1, 1}}, 1.0, true},
        {{{0, 0}, {1, 2}, {2, 2}, {1, 1}}, 0.8, true},
        {{{1, 1}, {0, 0}, {0, 1}, {1, 0}, {2, 2}, {0, 0}}, 0.7, true},
        {{{1, 0}, {2, 2}, {2, 1}, {0, 0}}, 9.0 / 13.0, false},
        {{{1, 0}, {2, 1}, {1, 1}, {0, 0}, {0, 0}, {1, 1}}, 0.6, false},
    };
    for (const auto& c : cases) {
        std::vector<ConstructLabel> sample;
        std::vector<HumanLabel> human;
        for (std::size_t i = 0; i < c.pairs.size(); ++i) {
            ConstructLabel l;
            l.session_id = "v" + std::to_string(i);
            l.turn_index = 1;
            l.construct = ConstructTag::SE;
            l.label = c.pairs[i].second - 1;
            sample.push_back(l);
            human.push_back({l.session_id, 1, ConstructTag::SE, c.pairs[i].first - 1});
        }
        const auto run = validate_judge(sample, human, ConstructTag::SE);
        require(std::abs(run.kappa - c.kappa) <= 1e-12, "kappa " + std::to_string(run.kappa) + " for expected " +
                                                             std::to_string(c.kappa));
        require_eq(run.pass, c.pass, "gate at kappa " + std::to_string(c.kappa));
        require_eq(run.pass, run.kappa >= kJudgeAcceptKappa, "gate disagrees with the threshold");
    }
}

void report_shape() {
    // Hand-computed from the bundled labels: F and UNF numerators over N.
    struct Rates {
        const char* fa;
        ConstructTag c;
        Rational f, unf;
    };
    const Rates expected[] = {
        {"FA2", ConstructTag::ZPD, {100, 3}, {100, 3}}, {"FA2", ConstructTag::SE, {25, 1}, {25, 2}},
        {"FA2", ConstructTag::GS, {125, 2}, {0, 1}},    {"FA2", ConstructTag::R, {175, 2}, {25, 2}},
        {"FA2", ConstructTag::OT, {175, 2}, {25, 2}},   {"FA2", ConstructTag::C, {25, 1}, {0, 1}},
        {"FA4", ConstructTag::ZPD, {100, 1}, {0, 1}},   {"FA4", ConstructTag::SE, {50, 1}, {0, 1}},
        {"FA4", ConstructTag::GS, {100, 1}, {0, 1}},    {"FA4", ConstructTag::R, {100, 1}, {0, 1}},
        {"FA4", ConstructTag::OT, {100, 1}, {0, 1}},    {"FA4", ConstructTag::C, {0, 1}, {50, 1}},
    };
    const auto run = parse_judge_run_jsonl(read_file(kData / "labels" / "conversations_labels.jsonl"));
    const auto report = faithfulness_report(run);
    for (const auto& e : expected) {
        const auto& cell = report.cells.at({e.fa, e.c});
        const std::string where = std::string(e.fa) + " " + to_string(e.c);
        require(cell.rates.f == e.f, where + " F");
        require(cell.rates.unf == e.unf, where + " UNF");
    }
    const auto text = render_faithfulness_report(report);
    const std::string theory = "FA  | ZPD F         | ZPD UNF       | SE F          | SE UNF        | GS F          | GS UNF\n";
    const std::string teacher = "FA  | R F           | R UNF         | OT F          | OT UNF        | C F           | C UNF\n";
    require(text.find("Theoretical constructs\n" + theory) != std::string::npos, "theoretical header");
    require(text.find("Teacher constructs\n" + teacher) != std::string::npos, "teacher header");
    require(text.find("FA2 | 33.33 ± 50.00 | 33.33 ± 50.00 | 25.00 ± 31.25 | 12.50 ± 18.75 | 62.50 ± 37.50 | 0.00 ± 0.00\n") !=
                std::string::npos,
            "FA2 theoretical row");
    require(text.find("FA4 | 100.00 ± 0.00 | 0.00 ± 0.00   | 100.00 ± 0.00 | 0.00 ± 0.00   | 0.00 ± 0.00   | 50.00 ± 50.00\n") !=
                std::string::npos,
            "FA4 teacher row");

    // Scoring table from a fresh replayed evaluation.
    const auto registry = PackRegistry::load_dir(kData / "packs");
    const auto responses = load_responses(kData / "responses" / "fa2_responses.jsonl");
    const auto ledger = ErrorLedger::load(kData / "ledgers" / "fa2_ledger.json");
    llm::LlmClient grader(std::make_shared<llm::ReplayBackend>(kData / "recordings"), llm::ModelConfig::grading_defaults());
    const PipelineStage stages[] = {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL};
    const auto eval = run_scoring_eval(registry.resolve("FA2"), responses, stages, ledger, grader, &registry);
    const auto scoring = render_scoring_report(scoring_report(eval.pairs));
    const char* rows[] = {"Stage | M   | FA2\n", "I/O   | F1  | 83.33 ± ", "      | k_w | 87.37 ± ", "ICL   | F1  | 91.67 ± ",
                          "      | k_w | 93.33 ± ", "CoT   | F1  | 100.00 ± ", "AL    | F1  | 100.00 ± ", "n: FA2 = 12;"};
    std::size_t at = 0;
    for (const char* r : rows) {
        at = scoring.find(r, at);
        require(at != std::string::npos, std::string("scoring table lacks '") + r + "'");
    }
}

}  // namespace

int main() {
    criterion("kappa_w matches the matrix oracle on 1000 random sets", 5000, kappa_oracle);
    criterion("micro-F1 equals accuracy on 1000 random sets", 1000, micro_f1_is_accuracy);
    criterion("FKGL values and the strict readability boundary", 1000, fkgl_exactness);
    criterion("faithfulness rates sum to exactly 100", 1000, faithfulness_algebra);
    criterion("bootstrap CI is deterministic serial and parallel", 10000, bootstrap_determinism);
    criterion("stratified holdout of 50 gives 19/25/6", 1000, stratified_split_counts);
    criterion("pipeline stage invariants and trend support", 1000, pipeline_staging);
    criterion("end-to-end replay: grading, 6-turn session, grade unchanged", 10000, end_to_end_replay);
    criterion("judge validation gate at kappa_w 0.7", 1000, judge_gate);
    criterion("faithfulness and scoring report layouts", 5000, report_shape);
    std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed")) << "\n";
    return failures ? 1 : 0;
}
