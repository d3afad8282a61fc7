#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

namespace tutorloop {

struct Rubric;
struct Violation;

struct KnowledgeNode {
    std::string id;
    std::string concept_name;
    int level = 1;                      // index into KnowledgeGraph::level_names
    std::vector<std::string> criteria;  // rubric criteria evidencing this node

    bool operator==(const KnowledgeNode&) const = default;
};

// Concept hierarchy for one assessment. level_names runs from "no knowledge"
// (index 0, holds no nodes) to "mastery" (last index). Edges are
// prerequisite -> dependent and always climb at least one level.
struct KnowledgeGraph {
    std::string assessment_id;
    std::vector<std::string> level_names;
    std::vector<KnowledgeNode> nodes;
    std::vector<std::pair<std::string, std::string>> edges;

    bool operator==(const KnowledgeGraph&) const = default;

    const KnowledgeNode* find(const std::string& id) const;
    std::vector<std::string> prerequisites(const std::string& id) const;
    std::vector<std::string> successors(const std::string& id) const;
    int top_level() const { return static_cast<int>(level_names.size()) - 1; }
};

// Appends graph violations under `path` (e.g. "knowledge_graph").
void validate_graph(const KnowledgeGraph& graph, const Rubric& rubric, const std::string& path,
                    std::vector<Violation>& out);

// Nodes whose bound criteria are all met.
std::set<std::string> mastered_nodes(const KnowledgeGraph& graph,
                                     const std::set<std::string>& met_criteria);

// Unmastered nodes whose prerequisites are all mastered.
std::set<std::string> frontier_nodes(const KnowledgeGraph& graph,
                                     const std::set<std::string>& mastered);

}  // namespace tutorloop
