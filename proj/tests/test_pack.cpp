#include "support.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/knowledge_graph.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/text_util.hpp"

#include <gtest/gtest.h>

using namespace tutorloop;
using tutorloop::testing::data_dir;

namespace {

std::string fa2_text() { return read_file(data_dir() / "packs" / "synthetic-fa2.yaml"); }

std::string replaced(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    EXPECT_NE(pos, std::string::npos) << "fixture text not found: " << from;
    if (pos != std::string::npos) text.replace(pos, from.size(), to);
    return text;
}

// Message of the ValidationError raised for `text`, or "" when it loads.
std::string violation_of(const std::string& text) {
    try {
        parse_pack(text);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Pack, BundledPacksLoad) {
    const auto registry = PackRegistry::load_dir(data_dir() / "packs");
    ASSERT_EQ(registry.packs().size(), 3u);
    const auto& fa2 = registry.resolve("synthetic-fa2");
    EXPECT_EQ(fa2.assessment_id(), "FA2");
    EXPECT_EQ(&registry.resolve("FA2"), &fa2);
    EXPECT_EQ(fa2.rubric.scale.k(), 3);
    EXPECT_EQ(fa2.rubric.criteria.size(), 3u);
    EXPECT_EQ(fa2.knowledge_graph.nodes.size(), 5u);
    EXPECT_EQ(registry.resolve("FA3").task.context_dependencies, std::vector<std::string>{"FA2"});
    EXPECT_THROW(registry.resolve("FA9"), UnknownAssessment);
}

TEST(Pack, SerializeRoundTrips) {
    const auto pack = parse_pack(fa2_text());
    const auto again = parse_pack(serialize_pack(pack));
    EXPECT_EQ(pack, again);
    EXPECT_EQ(serialize_pack(pack), serialize_pack(again));
}

TEST(Pack, MalformedYamlIsParseError) {
    EXPECT_THROW(parse_pack("schema_version: [1"), ParseError);
    EXPECT_THROW(parse_pack("schema_version: 1\n"), ParseError);
    EXPECT_THROW(load_pack(data_dir() / "packs" / "missing.yaml"), ParseError);
}

TEST(Pack, ScoreOutsideScaleIsRejected) {
    const auto text = replaced(fa2_text(), "    stage: ICL\n    score: 1\n", "    stage: ICL\n    score: 3\n");
    EXPECT_NE(violation_of(text).find("outside the scale"), std::string::npos);
}

TEST(Pack, CriterionMustReferenceKnownKsa) {
    const auto text = replaced(fa2_text(), "    - id: c3\n      ksa: k3", "    - id: c3\n      ksa: k9");
    EXPECT_NE(violation_of(text).find("unknown KSA 'k9'"), std::string::npos);
}

TEST(Pack, CotQuoteMustBeVerbatim) {
    const auto text = replaced(fa2_text(), "      - absorbs more sunlight than the grass\n",
                               "      - absorbs much more sunlight than the grass\n");
    EXPECT_NE(violation_of(text).find("quoted_spans"), std::string::npos);
}

TEST(Pack, IclExampleNeedsMatchingCotElaboration) {
    const auto text = replaced(fa2_text(), "  - id: ex-partial\n    stage: CoT", "  - id: ex-partial-2\n    stage: CoT");
    EXPECT_NE(violation_of(text).find("has no CoT elaboration"), std::string::npos);
}

TEST(Pack, ExamplesNeedZeroAndFullCredit) {
    auto text = replaced(fa2_text(), "  - id: ex-zero\n    stage: ICL\n    score: 0\n    response: The parking lot is bigger so it gets hot.\n", "");
    text = replaced(text, "  - id: ex-zero\n    stage: CoT", "  - id: ex-zero-cot\n    stage: CoT");
    const auto message = violation_of(text);
    EXPECT_NE(message.find("ICL examples need one zero-credit"), std::string::npos) << message;
}

TEST(Pack, ScaleOrdinalsMustBeContiguous) {
    const auto text = replaced(fa2_text(), "    - ordinal: 2\n      label: full credit", "    - ordinal: 3\n      label: full credit");
    EXPECT_NE(violation_of(text).find("contiguous"), std::string::npos);
}

TEST(Pack, UnknownDirectiveKeyIsRejected) {
    const auto text = fa2_text() + "DIRECTIVES:\n  humour: Tell jokes.\n";
    EXPECT_NE(violation_of(text).find("unknown directive key"), std::string::npos);
    const auto ok = fa2_text() + "DIRECTIVES:\n  se: Praise one concrete thing.\n";
    EXPECT_EQ(parse_pack(ok).directives.at("se"), "Praise one concrete thing.");
}

TEST(Pack, DependencyProblemsAreCaughtByRegistry) {
    PackRegistry registry;
    auto fa3 = load_pack(data_dir() / "packs" / "synthetic-fa3.yaml");
    registry.add(fa3);
    const auto missing = registry.validate_dependencies();
    ASSERT_EQ(missing.size(), 1u);
    EXPECT_NE(missing[0].message.find("unresolved dependency 'FA2'"), std::string::npos);

    auto fa2 = load_pack(data_dir() / "packs" / "synthetic-fa2.yaml");
    fa2.task.context_dependencies = {"FA3"};
    registry.add(fa2);
    bool cycle = false;
    for (const auto& v : registry.validate_dependencies()) cycle = cycle || v.message.find("cycle") != std::string::npos;
    EXPECT_TRUE(cycle);
    EXPECT_THROW(registry.add(fa3), ValidationError);
}

TEST(KnowledgeGraph, LevelsAndEdgesAreChecked) {
    const auto pack = parse_pack(fa2_text());
    auto graph = pack.knowledge_graph;
    std::vector<Violation> out;
    validate_graph(graph, pack.rubric, "kg", out);
    EXPECT_TRUE(out.empty());

    graph.edges.push_back({"n3", "n4"});
    graph.level_names.front() = "novice";
    out.clear();
    validate_graph(graph, pack.rubric, "kg", out);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].path, "kg.levels[0]");
    EXPECT_NE(out[1].message.find("does not climb"), std::string::npos);
}

TEST(KnowledgeGraph, MasteryAndFrontierHandWalk) {
    const auto graph = parse_pack(fa2_text()).knowledge_graph;
    // c1 met binds n1 and n2; n3 needs n1+n2, n4 needs n2.
    const auto mastered = mastered_nodes(graph, {"c1"});
    EXPECT_EQ(mastered, (std::set<std::string>{"n1", "n2"}));
    EXPECT_EQ(frontier_nodes(graph, mastered), (std::set<std::string>{"n3", "n4"}));
    EXPECT_EQ(frontier_nodes(graph, {}), (std::set<std::string>{"n1", "n2"}));
    const auto all = mastered_nodes(graph, {"c1", "c2", "c3"});
    EXPECT_EQ(all.size(), 5u);
    EXPECT_TRUE(frontier_nodes(graph, all).empty());
    // n5 binds c2 and c3; c2 alone masters n3 but not n5.
    EXPECT_EQ(mastered_nodes(graph, {"c2"}), (std::set<std::string>{"n3"}));
    EXPECT_EQ(graph.prerequisites("n5"), (std::vector<std::string>{"n3", "n4"}));
    EXPECT_EQ(graph.successors("n2"), (std::vector<std::string>{"n3", "n4"}));
}
