#include "support.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace tutorloop;
using tutorloop::testing::data_dir;

namespace {

const PackRegistry& registry() {
    static const PackRegistry r = PackRegistry::load_dir(data_dir() / "packs");
    return r;
}

const AssessmentPack& fa2() { return registry().resolve("FA2"); }

LedgerEntry over(const std::string& id, const std::string& criterion) {
    return {id, 1, 2, criterion, ErrorDirection::Over, ""};
}

bool contains(const std::vector<std::string>& ids, const std::string& id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

}  // namespace

TEST(Pipeline, IoHasContextButNoExemplars) {
    const auto p = build_grading_prompt(fa2(), PipelineStage::IO, {}, &registry());
    EXPECT_TRUE(p.exemplar_blocks.empty());
    EXPECT_TRUE(p.revision_blocks.empty());
    EXPECT_TRUE(contains(p.block_ids(), "rubric:FA2"));
    EXPECT_TRUE(contains(p.block_ids(), "task:FA2"));
    EXPECT_NE(p.instructions().find("QUOTES:"), std::string::npos);
}

TEST(Pipeline, IclExemplarsCarryNoRationale) {
    const auto p = build_grading_prompt(fa2(), PipelineStage::ICL, {}, &registry());
    ASSERT_EQ(p.exemplar_blocks.size(), 3u);
    for (const auto& b : p.exemplar_blocks) {
        EXPECT_EQ(b.body.find("RATIONALE:"), std::string::npos) << b.id;
        EXPECT_EQ(b.body.find("QUOTES:"), std::string::npos) << b.id;
        EXPECT_NE(b.body.find("SCORE: "), std::string::npos) << b.id;
    }
}

TEST(Pipeline, CotExemplarsQuoteTheirResponses) {
    const auto p = build_grading_prompt(fa2(), PipelineStage::CoT, {}, &registry());
    ASSERT_EQ(p.exemplar_blocks.size(), 3u);
    for (const auto& ex : fa2().examples) {
        if (ex.stage != ExampleStage::CoT) continue;
        const auto it = std::find_if(p.exemplar_blocks.begin(), p.exemplar_blocks.end(),
                                     [&](const PromptBlock& b) { return b.id == "exemplar:" + ex.id; });
        ASSERT_NE(it, p.exemplar_blocks.end()) << ex.id;
        EXPECT_NE(it->body.find("RATIONALE:\n"), std::string::npos);
        for (const auto& q : ex.quoted_spans) {
            EXPECT_NE(it->body.find("\"" + q + "\""), std::string::npos) << q;
            EXPECT_NE(ex.student_response.find(q), std::string::npos) << q;
        }
    }
}

TEST(Pipeline, AlAppendsPackExamplesAndLedgerRevisions) {
    const auto ledger = ErrorLedger::load(data_dir() / "ledgers" / "fa2_ledger.json");
    const auto cot = build_grading_prompt(fa2(), PipelineStage::CoT, ledger, &registry());
    const auto al = build_grading_prompt(fa2(), PipelineStage::AL, ledger, &registry());
    EXPECT_TRUE(cot.revision_blocks.empty());
    ASSERT_EQ(al.revision_blocks.size(), 1u);
    EXPECT_EQ(al.revision_blocks[0].id, "revision:1");
    EXPECT_NE(al.revision_blocks[0].title.find("c2:over"), std::string::npos);
    EXPECT_TRUE(contains(al.block_ids(), "exemplar:al:ex-al-heat-only"));
    // AL supplements CoT: the CoT blocks come first, unchanged.
    ASSERT_GE(al.exemplar_blocks.size(), cot.exemplar_blocks.size());
    for (std::size_t i = 0; i < cot.exemplar_blocks.size(); ++i) EXPECT_EQ(al.exemplar_blocks[i], cot.exemplar_blocks[i]);
}

TEST(Pipeline, Fa4AlWithOneGuidelineRevision) {
    const auto& fa4 = registry().resolve("synthetic-fa4");
    ErrorLedger ledger;
    for (const char* id : {"a", "b", "c"}) ledger.add_entry(over(id, "e1"));
    const auto trends = detect_error_trends(ledger);
    ASSERT_EQ(trends.size(), 1u);
    const auto revised = apply_revision(ledger, trends[0], {RevisionKind::Guideline, "Shade counts only when it is explained.", "", {}});
    const auto cot = build_grading_prompt(fa4, PipelineStage::CoT, revised, &registry());
    const auto al = build_grading_prompt(fa4, PipelineStage::AL, revised, &registry());
    EXPECT_EQ(al.exemplar_blocks, cot.exemplar_blocks);
    ASSERT_EQ(al.revision_blocks.size(), 1u);
    EXPECT_EQ(al.revision_blocks[0].body, "Shade counts only when it is explained.");
    EXPECT_NE(al.instructions().find("Shade counts only when it is explained."), std::string::npos);
}

TEST(Pipeline, BlockIdsGrowMonotonicallyWithStage) {
    const auto ledger = ErrorLedger::load(data_dir() / "ledgers" / "fa2_ledger.json");
    const PipelineStage stages[] = {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL};
    for (const auto* pack : {&fa2(), &registry().resolve("FA3"), &registry().resolve("FA4")}) {
        for (std::size_t s = 0; s + 1 < std::size(stages); ++s) {
            const auto lower = build_grading_prompt(*pack, stages[s], ledger, &registry()).block_ids();
            const auto higher = build_grading_prompt(*pack, stages[s + 1], ledger, &registry()).block_ids();
            for (const auto& id : lower) EXPECT_TRUE(contains(higher, id)) << pack->assessment_id() << " " << id;
        }
    }
}

TEST(Pipeline, DeterministicBuild) {
    const auto ledger = ErrorLedger::load(data_dir() / "ledgers" / "fa2_ledger.json");
    for (auto stage : {PipelineStage::IO, PipelineStage::ICL, PipelineStage::CoT, PipelineStage::AL}) {
        EXPECT_EQ(build_grading_prompt(fa2(), stage, ledger, &registry()),
                  build_grading_prompt(fa2(), stage, ledger, &registry()));
    }
}

TEST(Pipeline, DependencyCurriculumIsIncluded) {
    const auto& fa3 = registry().resolve("FA3");
    const auto p = build_grading_prompt(fa3, PipelineStage::IO, {}, &registry());
    EXPECT_TRUE(contains(p.block_ids(), "curriculum:FA2:energy-transfer"));
    EXPECT_THROW(build_grading_prompt(fa3, PipelineStage::IO, {}, nullptr), UnknownAssessment);
}

TEST(Pipeline, MissingExtremeExemplarsAtIcl) {
    auto pack = fa2();
    pack.examples.erase(std::remove_if(pack.examples.begin(), pack.examples.end(),
                                       [](const FewShotExample& e) { return e.score == 2; }),
                        pack.examples.end());
    EXPECT_NO_THROW(build_grading_prompt(pack, PipelineStage::IO, {}, &registry()));
    EXPECT_THROW(build_grading_prompt(pack, PipelineStage::ICL, {}, &registry()), MissingExemplars);
}

TEST(ErrorTrends, FiresAtSupportThreeNotBelow) {
    ErrorLedger ledger;
    ledger.add_entry(over("r1", "c1"));
    ledger.add_entry(over("r2", "c1"));
    EXPECT_TRUE(detect_error_trends(ledger).empty());
    ledger.add_entry(over("r3", "c1"));
    const auto trends = detect_error_trends(ledger);
    ASSERT_EQ(trends.size(), 1u);
    EXPECT_EQ(trends[0].criterion_id, "c1");
    EXPECT_EQ(trends[0].direction, ErrorDirection::Over);
    EXPECT_EQ(trends[0].supporting_entry_ids, (std::vector<std::string>{"r1", "r2", "r3"}));
    EXPECT_EQ(detect_error_trends(ledger, 4).size(), 0u);
}

TEST(ErrorTrends, ScatteredAndEmptyLedgers) {
    EXPECT_TRUE(detect_error_trends({}).empty());
    ErrorLedger ledger;
    ledger.add_entry(over("r1", "c1"));
    ledger.add_entry({"r2", 2, 1, "c2", ErrorDirection::Under, ""});
    EXPECT_TRUE(detect_error_trends(ledger).empty());
}

TEST(ErrorTrends, DirectionsAreSeparate) {
    ErrorLedger ledger;
    for (const char* id : {"a", "b"}) ledger.add_entry(over(id, "c1"));
    for (const char* id : {"c", "d"}) ledger.add_entry({id, 2, 0, "c1", ErrorDirection::Under, ""});
    EXPECT_TRUE(detect_error_trends(ledger).empty());
}

TEST(ErrorLedger, RejectsInconsistentEntries) {
    ErrorLedger ledger;
    EXPECT_THROW(ledger.add_entry({"r", 1, 1, "c1", ErrorDirection::Over, ""}), ValidationError);
    EXPECT_THROW(ledger.add_entry({"r", 2, 1, "c1", ErrorDirection::Over, ""}), ValidationError);
    EXPECT_THROW(ledger.add_entry({"r", 1, 2, "", ErrorDirection::Over, ""}), ValidationError);
}

TEST(ErrorLedger, SerializeRoundTrips) {
    const auto ledger = ErrorLedger::load(data_dir() / "ledgers" / "fa2_ledger.json");
    EXPECT_EQ(ledger.entries().size(), 4u);
    EXPECT_EQ(ErrorLedger::parse(ledger.serialize()), ledger);
    EXPECT_THROW(ErrorLedger::parse("{not json"), ParseError);
}

TEST(Revisions, AppendOnlyWithoutDedup) {
    ErrorLedger ledger;
    for (const char* id : {"a", "b", "c"}) ledger.add_entry(over(id, "c1"));
    const auto trend = detect_error_trends(ledger).at(0);
    const Revision rev{RevisionKind::Guideline, "Only credit explicit comparisons.", "", {}};
    auto once = apply_revision(ledger, trend, rev);
    auto twice = apply_revision(once, trend, rev);
    EXPECT_EQ(once.revisions().size(), 1u);
    ASSERT_EQ(twice.revisions().size(), 2u);
    EXPECT_EQ(twice.revisions()[0].created_for_trend, "c1:over");
    EXPECT_EQ(ledger.revisions().size(), 0u);
    EXPECT_THROW(apply_revision(ledger, Trend{"c9", ErrorDirection::Over, {"x"}}, rev), UnknownTrend);
}

TEST(Revisions, ExemplarRevisionReachesAlPrompt) {
    ErrorLedger ledger;
    for (const char* id : {"a", "b", "c"}) ledger.add_entry(over(id, "c2"));
    FewShotExample ex{"rev-hot", ExampleStage::AL, "It gets hot because it is dark.", 0,
                      "c1 | unmet | 1 | Color named without absorption.\nc2 | unmet | 1 | Heating is not tied to energy.\nc3 | unmet | - | No model output.",
                      {"It gets hot because it is dark."}};
    const auto revised = apply_revision(ledger, detect_error_trends(ledger).at(0),
                                        {RevisionKind::Exemplar, "", "", ex});
    const auto al = build_grading_prompt(fa2(), PipelineStage::AL, revised, &registry());
    EXPECT_TRUE(contains(al.block_ids(), "revision:1:exemplar:rev-hot"));
    EXPECT_NE(al.instructions().find("It gets hot because it is dark."), std::string::npos);
    ex.quoted_spans = {"not in the response"};
    EXPECT_THROW(ledger.add_revision({RevisionKind::Exemplar, "", "", ex}), ValidationError);
}

TEST(Revisions, TrendsClearOnceTheOracleScoresCorrectly) {
    ErrorLedger ledger;
    for (const char* id : {"a", "b", "c"}) ledger.add_entry(over(id, "c1"));
    for (const char* id : {"d", "e", "f"}) ledger.add_entry({id, 2, 1, "c3", ErrorDirection::Under, ""});
    auto revised = ledger;
    for (const auto& t : detect_error_trends(ledger)) {
        revised = apply_revision(revised, t, {RevisionKind::Guideline, "Fix " + t.key(), "", {}});
    }
    // Re-grade the validation set with an oracle that now agrees on every
    // trend entry: the fresh ledger records only remaining errors.
    ErrorLedger regraded;
    for (const auto& e : ledger.entries()) {
        bool fixed = false;
        for (const auto& r : revised.revisions()) fixed = fixed || r.created_for_trend == e.criterion_id + ":" + to_string(e.direction);
        if (!fixed) regraded.add_entry(e);
    }
    EXPECT_EQ(revised.revisions().size(), 2u);
    EXPECT_TRUE(detect_error_trends(regraded).empty());
}
