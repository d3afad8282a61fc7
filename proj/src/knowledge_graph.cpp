#include "tutorloop/knowledge_graph.hpp"

#include "tutorloop/pack.hpp"
#include "tutorloop/text_util.hpp"

#include <map>

namespace tutorloop {

const KnowledgeNode* KnowledgeGraph::find(const std::string& id) const {
    for (const auto& n : nodes) {
        if (n.id == id) return &n;
    }
    return nullptr;
}

std::vector<std::string> KnowledgeGraph::prerequisites(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [from, to] : edges) {
        if (to == id) out.push_back(from);
    }
    return out;
}

std::vector<std::string> KnowledgeGraph::successors(const std::string& id) const {
    std::vector<std::string> out;
    for (const auto& [from, to] : edges) {
        if (from == id) out.push_back(to);
    }
    return out;
}

void validate_graph(const KnowledgeGraph& graph, const Rubric& rubric, const std::string& path,
                    std::vector<Violation>& out) {
    auto add = [&](std::string p, std::string m) { out.push_back({std::move(p), std::move(m)}); };

    if (graph.level_names.size() < 2) {
        add(path + ".levels", "need at least the \"no knowledge\" and \"mastery\" levels");
        return;
    }
    if (to_lower(graph.level_names.front()) != "no knowledge") {
        add(path + ".levels[0]", "first level must be \"no knowledge\"");
    }
    if (to_lower(graph.level_names.back()) != "mastery") {
        add(path + ".levels", "last level must be \"mastery\"");
    }
    if (graph.nodes.empty()) add(path + ".nodes", "graph has no nodes");

    std::map<std::string, int> level_of;
    for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
        const auto& n = graph.nodes[i];
        const auto npath = path + ".nodes[" + std::to_string(i) + "]";
        if (trim(n.id).empty()) add(npath + ".id", "node id is empty");
        else if (!level_of.emplace(n.id, n.level).second) add(npath + ".id", "duplicate node id '" + n.id + "'");
        if (n.level < 1 || n.level > graph.top_level()) {
            add(npath + ".level", "level " + std::to_string(n.level) + " outside 1.." +
                                      std::to_string(graph.top_level()));
        }
        if (n.criteria.empty()) add(npath + ".criteria", "node binds no rubric criterion");
        for (const auto& c : n.criteria) {
            if (!rubric.find(c)) add(npath + ".criteria", "unknown criterion '" + c + "'");
        }
    }

    for (std::size_t i = 0; i < graph.edges.size(); ++i) {
        const auto& [from, to] = graph.edges[i];
        const auto epath = path + ".edges[" + std::to_string(i) + "]";
        auto f = level_of.find(from);
        auto t = level_of.find(to);
        if (f == level_of.end() || t == level_of.end()) {
            add(epath, "edge references unknown node");
            continue;
        }
        // Strictly climbing edges also rule out cycles.
        if (t->second <= f->second) add(epath, "edge " + from + " -> " + to + " does not climb a level");
    }

    for (const auto& n : graph.nodes) {
        const bool is_source = graph.prerequisites(n.id).empty();
        const bool is_sink = graph.successors(n.id).empty();
        if (is_source != (n.level == 1)) {
            add(path + ".nodes", "node '" + n.id + "': sources must be exactly the level-1 nodes");
        }
        if (is_sink != (n.level == graph.top_level())) {
            add(path + ".nodes", "node '" + n.id + "': sinks must be exactly the mastery-level nodes");
        }
    }

    for (const auto& c : rubric.criteria) {
        bool bound = false;
        for (const auto& n : graph.nodes) {
            for (const auto& id : n.criteria) bound = bound || id == c.id;
        }
        if (!bound) add(path + ".nodes", "criterion '" + c.id + "' binds no node");
    }
}

std::set<std::string> mastered_nodes(const KnowledgeGraph& graph,
                                     const std::set<std::string>& met_criteria) {
    std::set<std::string> out;
    for (const auto& n : graph.nodes) {
        bool all = !n.criteria.empty();
        for (const auto& c : n.criteria) all = all && met_criteria.count(c);
        if (all) out.insert(n.id);
    }
    return out;
}

std::set<std::string> frontier_nodes(const KnowledgeGraph& graph,
                                     const std::set<std::string>& mastered) {
    std::set<std::string> out;
    for (const auto& n : graph.nodes) {
        if (mastered.count(n.id)) continue;
        bool ready = true;
        for (const auto& p : graph.prerequisites(n.id)) ready = ready && mastered.count(p);
        if (ready) out.insert(n.id);
    }
    return out;
}

}  // namespace tutorloop
