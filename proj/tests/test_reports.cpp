#include "support.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/reports.hpp"

#include <gtest/gtest.h>

using namespace tutorloop;
using tutorloop::testing::data_dir;

namespace {

std::vector<ScoredPair> bundled_pairs() {
    return parse_scored_pairs_jsonl(read_file(data_dir() / "eval" / "fa2_scored_pairs.jsonl"));
}

JudgeRun bundled_run() {
    return parse_judge_run_jsonl(read_file(data_dir() / "labels" / "conversations_labels.jsonl"));
}

// Quadratic weighted kappa from explicit count matrices.
double kappa_oracle(const std::vector<std::pair<int, int>>& hm, int k) {
    std::vector<std::vector<double>> o(k, std::vector<double>(k, 0.0));
    for (auto [h, m] : hm) o[h][m] += 1;
    std::vector<double> rows(k, 0), cols(k, 0);
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            rows[i] += o[i][j];
            cols[j] += o[i][j];
        }
    }
    const double n = double(hm.size());
    double num = 0, den = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
            const double w = double((i - j) * (i - j));
            num += w * o[i][j];
            den += w * rows[i] * cols[j] / n;
        }
    }
    return den == 0 ? (num == 0 ? 1.0 : 0.0) : 1.0 - num / den;
}

const char* kScoringGolden =
    "Scoring agreement\n"
    "Stage | M   | FA2\n"
    "I/O   | F1  | 83.33 ± 20.83\n"
    "      | k_w | 87.37 ± 20.34\n"
    "ICL   | F1  | 91.67 ± 12.50\n"
    "      | k_w | 93.33 ± 13.64\n"
    "CoT   | F1  | 100.00 ± 0.00\n"
    "      | k_w | 100.00 ± 0.00\n"
    "AL    | F1  | 100.00 ± 0.00\n"
    "      | k_w | 100.00 ± 0.00\n"
    "n: FA2 = 12;\n"
    "95% percentile bootstrap, B = 2000, seed = 312; values are percentages, ± is the CI half-width\n";

const char* kFaithGolden =
    "Theoretical constructs\n"
    "FA  | ZPD F         | ZPD UNF       | SE F          | SE UNF        | GS F          | GS UNF\n"
    "FA2 | 33.33 ± 50.00 | 33.33 ± 50.00 | 25.00 ± 31.25 | 12.50 ± 18.75 | 62.50 ± 37.50 | 0.00 ± 0.00\n"
    "FA4 | 100.00 ± 0.00 | 0.00 ± 0.00   | 50.00 ± 50.00 | 0.00 ± 0.00   | 100.00 ± 0.00 | 0.00 ± 0.00\n"
    "\n"
    "Teacher constructs\n"
    "FA  | R F           | R UNF         | OT F          | OT UNF        | C F           | C UNF\n"
    "FA2 | 87.50 ± 18.75 | 12.50 ± 18.75 | 87.50 ± 18.75 | 12.50 ± 18.75 | 25.00 ± 31.25 | 0.00 ± 0.00\n"
    "FA4 | 100.00 ± 0.00 | 0.00 ± 0.00   | 100.00 ± 0.00 | 0.00 ± 0.00   | 0.00 ± 0.00   | 50.00 ± 50.00\n"
    "\n"
    "Labelled utterances (N)\n"
    "FA  | ZPD | SE | GS     | R | OT | C\n"
    "FA2 | 3   | 8  | 8      | 8 | 8  | 8\n"
    "FA4 | 1   | 2  | 1 (-1) | 2 | 2  | 2\n"
    "Excluded after failed judge calls: 1\n"
    "95% percentile bootstrap, B = 2000, seed = 312; values are percentages, ± is the CI half-width\n";

}  // namespace

TEST(ScoredPairs, JsonlRoundTrip) {
    const auto pairs = bundled_pairs();
    ASSERT_EQ(pairs.size(), 48u);
    EXPECT_EQ(parse_scored_pairs_jsonl(scored_pairs_to_jsonl(pairs)), pairs);
    EXPECT_THROW(parse_scored_pairs_jsonl("{\"stage\": \"IO\"}\n"), ParseError);
}

TEST(ScoringReport, PointsMatchIndependentCounts) {
    const auto pairs = bundled_pairs();
    const auto report = scoring_report(pairs);
    for (auto stage : {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL}) {
        std::vector<std::pair<int, int>> hm;
        int hits = 0;
        for (const auto& p : pairs) {
            if (p.stage != stage) continue;
            hm.emplace_back(p.human, p.machine);
            hits += p.human == p.machine;
        }
        const auto& cell = report.cells.at({stage, "FA2"});
        EXPECT_EQ(cell.n, hm.size());
        EXPECT_DOUBLE_EQ(cell.f1.point, double(hits) / double(hm.size())) << to_string(stage);
        EXPECT_NEAR(cell.kappa.point, kappa_oracle(hm, 3), 1e-12) << to_string(stage);
        EXPECT_LE(cell.kappa.ci_low, cell.kappa.point);
        EXPECT_GE(cell.kappa.ci_high, cell.kappa.point);
    }
    // I/O: two of twelve disagree (r05 over by one, r12 under by one).
    EXPECT_DOUBLE_EQ(report.cells.at({PipelineStage::IO, "FA2"}).f1.point, 10.0 / 12.0);
}

TEST(ScoringReport, GoldenLayout) {
    EXPECT_EQ(render_scoring_report(scoring_report(bundled_pairs())), kScoringGolden);
}

TEST(ScoringReport, CiMatchesDirectBootstrap) {
    const auto pairs = bundled_pairs();
    std::vector<metrics::LabelPair> io;
    for (const auto& p : pairs) {
        if (p.stage == PipelineStage::IO) io.push_back({p.response_id, p.human, p.machine});
    }
    const auto direct = metrics::bootstrap_ci(
        io, [](std::span<const metrics::LabelPair> s) { return std::optional<double>(metrics::micro_f1(s, 3)); },
        "micro_f1", {});
    const auto cell = scoring_report(pairs).cells.at({PipelineStage::IO, "FA2"});
    EXPECT_EQ(cell.f1.ci_low, direct.ci_low);
    EXPECT_EQ(cell.f1.ci_high, direct.ci_high);
}

TEST(ScoringReport, JsonCarriesEveryCell) {
    const auto j = to_json(scoring_report(bundled_pairs()));
    EXPECT_EQ(j["text"], kScoringGolden);
    ASSERT_EQ(j["cells"].size(), 4u);
    EXPECT_EQ(j["cells"][0]["kappa_w"]["resamples"], 2000);
}

TEST(FaithReport, PointsMatchLabelCounts) {
    const auto run = bundled_run();
    const auto report = faithfulness_report(run);
    std::map<std::pair<std::string, ConstructTag>, std::array<int, 3>> counts;  // f, unf, n
    for (const auto& l : run.labels) {
        auto& c = counts[{l.assessment_id, l.construct}];
        const bool binary = construct_info(l.construct).codomain == metrics::Codomain::Binary;
        c[0] += l.label == 1;
        c[1] += binary ? l.label == 0 : l.label == -1;
        c[2] += 1;
    }
    ASSERT_EQ(counts.size(), 12u);
    for (const auto& [key, c] : counts) {
        const auto& cell = report.cells.at(key);
        EXPECT_EQ(cell.n, std::size_t(c[2]));
        EXPECT_EQ(cell.rates.f, metrics::Rational(100 * c[0], c[2])) << key.first << to_string(key.second);
        EXPECT_EQ(cell.rates.unf, metrics::Rational(100 * c[1], c[2])) << key.first << to_string(key.second);
    }
    EXPECT_EQ(report.excluded.at({"FA4", ConstructTag::GS}), 1u);
}

TEST(FaithReport, GoldenLayout) {
    EXPECT_EQ(render_faithfulness_report(faithfulness_report(bundled_run())), kFaithGolden);
}

TEST(FaithReport, EmptyRunIsAnError) {
    EXPECT_THROW(faithfulness_report(JudgeRun{}), EmptyInput);
}

TEST(RenderEstimate, PercentFormatting) {
    metrics::AgreementReport r;
    r.point = 0.8333333;
    r.ci_low = 0.625;
    r.ci_high = 1.0;
    EXPECT_EQ(render_estimate(r, 100.0), "83.33 ± 18.75");
    EXPECT_EQ(render_estimate(r, 1.0), "0.83 ± 0.19");
}

TEST(ScoringEval, RequiresHumanScores) {
    const auto reg = PackRegistry::load_dir(data_dir() / "packs");
    auto responses = load_responses(data_dir() / "responses" / "fa2_responses.jsonl");
    responses[3].human_score.reset();
    auto backend = std::make_shared<llm::ScriptedBackend>();
    llm::LlmClient client(backend, llm::ModelConfig::grading_defaults());
    const PipelineStage stages[] = {PipelineStage::IO};
    EXPECT_THROW(run_scoring_eval(reg.resolve("FA2"), responses, stages, {}, client, &reg), ValidationError);
    EXPECT_EQ(backend->call_count(), 0u);
}

TEST(ScoringEval, ReplayReproducesBundledPairs) {
    const auto reg = PackRegistry::load_dir(data_dir() / "packs");
    const auto responses = load_responses(data_dir() / "responses" / "fa2_responses.jsonl");
    const auto ledger = ErrorLedger::load(data_dir() / "ledgers" / "fa2_ledger.json");
    llm::LlmClient client(std::make_shared<llm::ReplayBackend>(data_dir() / "recordings"),
                          llm::ModelConfig::grading_defaults());
    const PipelineStage stages[] = {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL};
    const auto eval = run_scoring_eval(reg.resolve("FA2"), responses, stages, ledger, client, &reg);
    EXPECT_TRUE(eval.failures.empty());
    EXPECT_EQ(eval.pairs, bundled_pairs());
}
