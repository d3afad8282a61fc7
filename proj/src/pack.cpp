#include "tutorloop/pack.hpp"

#include "tutorloop/errors.hpp"
#include "tutorloop/text_util.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

namespace tutorloop {

// ---------------------------------------------------------------------------
// Basic lookups

const Criterion* Rubric::find(std::string_view id) const {
    for (const auto& c : criteria) {
        if (c.id == id) return &c;
    }
    return nullptr;
}

std::string to_string(ExampleStage stage) {
    switch (stage) {
        case ExampleStage::ICL: return "ICL";
        case ExampleStage::CoT: return "CoT";
        case ExampleStage::AL: return "AL";
    }
    return "?";
}

ExampleStage parse_example_stage(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "icl") return ExampleStage::ICL;
    if (t == "cot") return ExampleStage::CoT;
    if (t == "al") return ExampleStage::AL;
    throw ParseError("unknown example stage '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::string idx(const std::string& base, std::size_t i) {
    return base + "[" + std::to_string(i) + "]";
}

void dependency_cycles(const AssessmentPack& pack, const PackRegistry& registry,
                       std::vector<Violation>& out) {
    auto deps_of = [&](const std::string& id) -> std::vector<std::string> {
        if (id == pack.assessment_id()) return pack.task.context_dependencies;
        if (const auto* p = registry.find(id)) return p->task.context_dependencies;
        return {};
    };

    // Depth-first search for a path back to the pack itself.
    std::vector<std::string> path{pack.assessment_id()};
    std::set<std::string> visited;
    std::function<bool(const std::string&)> dfs = [&](const std::string& id) -> bool {
        for (const auto& next : deps_of(id)) {
            if (next == pack.assessment_id()) {
                path.push_back(next);
                return true;
            }
            if (!visited.insert(next).second) continue;
            path.push_back(next);
            if (dfs(next)) return true;
            path.pop_back();
        }
        return false;
    };
    if (dfs(pack.assessment_id())) {
        std::string chain;
        for (std::size_t i = 0; i < path.size(); ++i) chain += (i ? " -> " : "") + path[i];
        out.push_back({"task.context_dependencies", "dependency cycle " + chain});
    }
}

}  // namespace

std::vector<Violation> validate_pack(const AssessmentPack& pack, const PackRegistry* registry) {
    std::vector<Violation> out;
    auto add = [&](std::string path, std::string message) {
        out.push_back({std::move(path), std::move(message)});
    };

    if (pack.schema_version != kPackSchemaVersion) {
        add("schema_version", "unsupported schema version " + std::to_string(pack.schema_version));
    }
    if (trim(pack.metadata.name).empty()) add("metadata.name", "pack name is empty");

    // DOMAIN
    std::set<std::string> ksa_ids;
    for (std::size_t i = 0; i < pack.domain.ksas.size(); ++i) {
        const auto& ksa = pack.domain.ksas[i];
        const auto path = idx("domain.ksas", i);
        if (trim(ksa.id).empty()) {
            add(path + ".id", "KSA id is empty");
        } else if (!ksa_ids.insert(ksa.id).second) {
            add(path + ".id", "duplicate KSA id '" + ksa.id + "'");
        }
    }

    // RUBRIC
    const auto& scale = pack.rubric.scale;
    if (scale.k() < 2) add("rubric.scale", "score scale needs at least 2 levels");
    std::set<std::string> labels;
    for (std::size_t i = 0; i < scale.levels.size(); ++i) {
        const auto& level = scale.levels[i];
        const auto path = idx("rubric.scale.levels", i);
        if (level.ordinal != static_cast<int>(i)) {
            add(path + ".ordinal", "ordinals must be contiguous from 0; expected " +
                                       std::to_string(i) + ", found " + std::to_string(level.ordinal));
        }
        if (trim(level.label).empty()) {
            add(path + ".label", "level label is empty");
        } else if (!labels.insert(level.label).second) {
            add(path + ".label", "duplicate level label '" + level.label + "'");
        }
    }
    std::set<std::string> criterion_ids;
    for (std::size_t i = 0; i < pack.rubric.criteria.size(); ++i) {
        const auto& c = pack.rubric.criteria[i];
        const auto path = idx("rubric.criteria", i);
        if (trim(c.id).empty()) {
            add(path + ".id", "criterion id is empty");
        } else if (!criterion_ids.insert(c.id).second) {
            add(path + ".id", "duplicate criterion id '" + c.id + "'");
        }
        if (!ksa_ids.count(c.ksa_id)) {
            add(path + ".ksa_id", "criterion references unknown KSA '" + c.ksa_id + "'");
        }
        if (trim(c.evidence_statement).empty()) {
            add(path + ".evidence_statement", "criterion has no evidence statement");
        }
    }
    if (pack.rubric.criteria.empty()) add("rubric.criteria", "rubric has no criteria");

    // TASK
    if (trim(pack.task.assessment_id).empty()) add("task.assessment_id", "assessment id is empty");
    if (trim(pack.task.prompt_text).empty()) add("task.prompt_text", "task prompt is empty");
    for (std::size_t i = 0; i < pack.task.context_dependencies.size(); ++i) {
        const auto& dep = pack.task.context_dependencies[i];
        const auto path = idx("task.context_dependencies", i);
        if (dep == pack.task.assessment_id) {
            add(path, "assessment depends on itself");
        } else if (registry && !registry->find(dep)) {
            add(path, "unresolved dependency '" + dep + "'");
        }
    }
    if (registry) dependency_cycles(pack, *registry, out);

    // EXAMPLES
    std::set<std::pair<std::string, ExampleStage>> seen_examples;
    std::map<std::string, const FewShotExample*> icl_by_id;
    std::map<std::string, const FewShotExample*> cot_by_id;
    for (std::size_t i = 0; i < pack.examples.size(); ++i) {
        const auto& ex = pack.examples[i];
        const auto path = idx("examples", i);
        if (trim(ex.id).empty()) add(path + ".id", "example id is empty");
        if (!seen_examples.insert({ex.id, ex.stage}).second) {
            add(path + ".id", "duplicate " + to_string(ex.stage) + " example id '" + ex.id + "'");
        }
        if (trim(ex.student_response).empty()) add(path + ".student_response", "response is empty");
        if (!scale.contains(ex.score)) {
            add(path + ".score", "score " + std::to_string(ex.score) + " outside the scale");
        }
        if (ex.stage == ExampleStage::ICL) {
            icl_by_id.emplace(ex.id, &ex);
            if (ex.rationale) add(path + ".rationale", "ICL examples carry no rationale");
            if (!ex.quoted_spans.empty()) add(path + ".quoted_spans", "ICL examples carry no quotes");
            continue;
        }
        if (ex.stage == ExampleStage::CoT) cot_by_id.emplace(ex.id, &ex);
        if (!ex.rationale || trim(*ex.rationale).empty()) {
            add(path + ".rationale", to_string(ex.stage) + " examples require a rationale");
        }
        if (ex.quoted_spans.empty()) {
            add(path + ".quoted_spans", to_string(ex.stage) + " examples require quoted spans");
        }
        for (std::size_t j = 0; j < ex.quoted_spans.size(); ++j) {
            const auto& q = ex.quoted_spans[j];
            if (q.empty() || ex.student_response.find(q) == std::string::npos) {
                add(idx(path + ".quoted_spans", j),
                    "quoted span is not a verbatim substring of the response: \"" + q + "\"");
            }
        }
    }
    auto require_extremes = [&](const std::map<std::string, const FewShotExample*>& by_id,
                                ExampleStage stage) {
        bool has_min = false, has_max = false;
        for (const auto& [id, ex] : by_id) {
            has_min = has_min || ex->score == 0;
            has_max = has_max || ex->score == scale.max_score();
        }
        if (!has_min || !has_max) {
            add("examples", to_string(stage) + " examples need one zero-credit and one full-credit response");
        }
    };
    require_extremes(icl_by_id, ExampleStage::ICL);
    require_extremes(cot_by_id, ExampleStage::CoT);
    for (const auto& [id, icl] : icl_by_id) {
        auto it = cot_by_id.find(id);
        if (it == cot_by_id.end()) {
            add("examples", "ICL example '" + id + "' has no CoT elaboration");
        } else if (it->second->student_response != icl->student_response ||
                   it->second->score != icl->score) {
            add("examples", "CoT elaboration of '" + id + "' differs from its ICL response or score");
        }
    }

    // KNOWLEDGE_GRAPH
    validate_graph(pack.knowledge_graph, pack.rubric, "knowledge_graph", out);
    if (pack.knowledge_graph.assessment_id != pack.task.assessment_id) {
        add("knowledge_graph.assessment_id", "graph belongs to '" +
                                                 pack.knowledge_graph.assessment_id +
                                                 "', pack is '" + pack.task.assessment_id + "'");
    }

    static const std::set<std::string> kDirectiveKeys{"zpd", "se", "gs", "readability", "on_task",
                                                      "consistency"};
    for (const auto& [key, text] : pack.directives) {
        if (!kDirectiveKeys.count(key)) add("directives." + key, "unknown directive key");
        else if (trim(text).empty()) add("directives." + key, "directive override is empty");
    }
    return out;
}

std::string format_violations(const std::vector<Violation>& violations) {
    std::ostringstream os;
    for (std::size_t i = 0; i < violations.size(); ++i) {
        if (i) os << "; ";
        os << violations[i].path << ": " << violations[i].message;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// YAML reading

namespace {

YAML::Node child(const YAML::Node& node, const char* key, const std::string& path, bool required) {
    if (!node.IsMap()) throw ParseError(path + " is not a mapping");
    YAML::Node c = node[key];
    if (required && !c) throw ParseError("missing field " + path + "." + key);
    return c;
}

std::string str(const YAML::Node& node, const char* key, const std::string& path,
                bool required = true) {
    YAML::Node c = child(node, key, path, required);
    if (!c) return {};
    if (!c.IsScalar()) throw ParseError(path + "." + key + " must be a string");
    return c.as<std::string>();
}

int integer(const YAML::Node& node, const char* key, const std::string& path) {
    YAML::Node c = child(node, key, path, true);
    try {
        return c.as<int>();
    } catch (const YAML::Exception&) {
        throw ParseError(path + "." + key + " must be an integer");
    }
}

std::vector<std::string> str_list(const YAML::Node& node, const char* key, const std::string& path) {
    YAML::Node c = child(node, key, path, false);
    std::vector<std::string> out;
    if (!c || c.IsNull()) return out;
    if (!c.IsSequence()) throw ParseError(path + "." + key + " must be a list");
    for (const auto& item : c) {
        if (!item.IsScalar()) throw ParseError(path + "." + key + " must hold strings");
        out.push_back(item.as<std::string>());
    }
    return out;
}

YAML::Node seq(const YAML::Node& node, const char* key, const std::string& path) {
    YAML::Node c = child(node, key, path, true);
    if (!c.IsSequence()) throw ParseError(path + "." + key + " must be a list");
    return c;
}

AssessmentPack from_yaml(const YAML::Node& root) {
    if (!root.IsMap()) throw ParseError("pack document must be a mapping");
    AssessmentPack pack;
    pack.schema_version = integer(root, "schema_version", "pack");

    const auto meta = child(root, "metadata", "pack", true);
    pack.metadata.name = str(meta, "name", "metadata");
    pack.metadata.version = str(meta, "version", "metadata", false);
    pack.metadata.seed_salt = str(meta, "seed_salt", "metadata", false);

    const auto domain = child(root, "DOMAIN", "pack", true);
    const auto ksas = seq(domain, "ksas", "DOMAIN");
    for (std::size_t i = 0; i < ksas.size(); ++i) {
        const auto path = idx("DOMAIN.ksas", i);
        pack.domain.ksas.push_back({str(ksas[i], "id", path), str(ksas[i], "statement", path),
                                    str(ksas[i], "standard", path, false)});
    }
    if (auto notes = child(domain, "curriculum_notes", "DOMAIN", false); notes && !notes.IsNull()) {
        if (!notes.IsMap()) throw ParseError("DOMAIN.curriculum_notes must be a mapping");
        for (const auto& kv : notes) {
            pack.domain.curriculum_notes[kv.first.as<std::string>()] = kv.second.as<std::string>();
        }
    }

    const auto rubric = child(root, "RUBRIC", "pack", true);
    const auto scale = seq(rubric, "scale", "RUBRIC");
    for (std::size_t i = 0; i < scale.size(); ++i) {
        const auto path = idx("RUBRIC.scale", i);
        pack.rubric.scale.levels.push_back({integer(scale[i], "ordinal", path),
                                            str(scale[i], "label", path)});
    }
    const auto criteria = seq(rubric, "criteria", "RUBRIC");
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto path = idx("RUBRIC.criteria", i);
        pack.rubric.criteria.push_back({str(criteria[i], "id", path), str(criteria[i], "ksa", path),
                                        str(criteria[i], "description", path),
                                        str(criteria[i], "evidence", path, false)});
    }

    const auto task = child(root, "TASK", "pack", true);
    pack.task.assessment_id = str(task, "assessment_id", "TASK");
    pack.task.prompt_text = str(task, "prompt", "TASK");
    pack.task.context_dependencies = str_list(task, "depends_on", "TASK");

    const auto examples = seq(root, "EXAMPLES", "pack");
    for (std::size_t i = 0; i < examples.size(); ++i) {
        const auto path = idx("EXAMPLES", i);
        const auto& node = examples[i];
        FewShotExample ex;
        ex.id = str(node, "id", path);
        ex.stage = parse_example_stage(str(node, "stage", path));
        ex.student_response = str(node, "response", path);
        ex.score = integer(node, "score", path);
        if (node["rationale"]) ex.rationale = str(node, "rationale", path);
        ex.quoted_spans = str_list(node, "quotes", path);
        pack.examples.push_back(std::move(ex));
    }

    const auto graph = child(root, "KNOWLEDGE_GRAPH", "pack", true);
    auto& kg = pack.knowledge_graph;
    kg.assessment_id = str(graph, "assessment_id", "KNOWLEDGE_GRAPH");
    kg.level_names = str_list(graph, "levels", "KNOWLEDGE_GRAPH");
    const auto nodes = seq(graph, "nodes", "KNOWLEDGE_GRAPH");
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const auto path = idx("KNOWLEDGE_GRAPH.nodes", i);
        kg.nodes.push_back({str(nodes[i], "id", path), str(nodes[i], "concept", path),
                            integer(nodes[i], "level", path), str_list(nodes[i], "criteria", path)});
    }
    if (auto edges = child(graph, "edges", "KNOWLEDGE_GRAPH", false); edges && !edges.IsNull()) {
        if (!edges.IsSequence()) throw ParseError("KNOWLEDGE_GRAPH.edges must be a list");
        for (std::size_t i = 0; i < edges.size(); ++i) {
            const auto& e = edges[i];
            if (!e.IsSequence() || e.size() != 2) {
                throw ParseError(idx("KNOWLEDGE_GRAPH.edges", i) + " must be a [from, to] pair");
            }
            kg.edges.emplace_back(e[0].as<std::string>(), e[1].as<std::string>());
        }
    }

    if (auto directives = root["DIRECTIVES"]; directives && !directives.IsNull()) {
        if (!directives.IsMap()) throw ParseError("DIRECTIVES must be a mapping");
        for (const auto& kv : directives) {
            pack.directives[kv.first.as<std::string>()] = kv.second.as<std::string>();
        }
    }
    return pack;
}

// ---------------------------------------------------------------------------
// YAML writing

void emit_string(YAML::Emitter& out, const std::string& s) {
    if (s.find('\n') != std::string::npos) {
        out << YAML::DoubleQuoted << s;
    } else {
        out << s;
    }
}

void emit_kv(YAML::Emitter& out, const char* key, const std::string& value) {
    out << YAML::Key << key << YAML::Value;
    emit_string(out, value);
}

void emit_list(YAML::Emitter& out, const char* key, const std::vector<std::string>& values) {
    out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
    for (const auto& v : values) out << YAML::DoubleQuoted << v;
    out << YAML::EndSeq;
}

}  // namespace

AssessmentPack parse_pack(std::string_view text, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw ParseError(source + ": " + e.what());
    }
    AssessmentPack pack;
    try {
        pack = from_yaml(root);
    } catch (const ParseError& e) {
        throw ParseError(source + ": " + e.what());
    } catch (const YAML::Exception& e) {
        throw ParseError(source + ": " + e.what());
    }
    auto violations = validate_pack(pack);
    if (!violations.empty()) {
        throw ValidationError(source + ": " + format_violations(violations));
    }
    return pack;
}

AssessmentPack load_pack(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const StorageError& e) {
        throw ParseError(e.what());
    }
    return parse_pack(text, path.string());
}

std::string serialize_pack(const AssessmentPack& pack) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "schema_version" << YAML::Value << pack.schema_version;

    out << YAML::Key << "metadata" << YAML::Value << YAML::BeginMap;
    emit_kv(out, "name", pack.metadata.name);
    emit_kv(out, "version", pack.metadata.version);
    emit_kv(out, "seed_salt", pack.metadata.seed_salt);
    out << YAML::EndMap;

    out << YAML::Key << "DOMAIN" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "ksas" << YAML::Value << YAML::BeginSeq;
    for (const auto& k : pack.domain.ksas) {
        out << YAML::BeginMap;
        emit_kv(out, "id", k.id);
        emit_kv(out, "statement", k.statement);
        emit_kv(out, "standard", k.standard);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "curriculum_notes" << YAML::Value << YAML::BeginMap;
    for (const auto& [topic, prose] : pack.domain.curriculum_notes) emit_kv(out, topic.c_str(), prose);
    out << YAML::EndMap;
    out << YAML::EndMap;

    out << YAML::Key << "RUBRIC" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "scale" << YAML::Value << YAML::BeginSeq;
    for (const auto& l : pack.rubric.scale.levels) {
        out << YAML::BeginMap << YAML::Key << "ordinal" << YAML::Value << l.ordinal;
        emit_kv(out, "label", l.label);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "criteria" << YAML::Value << YAML::BeginSeq;
    for (const auto& c : pack.rubric.criteria) {
        out << YAML::BeginMap;
        emit_kv(out, "id", c.id);
        emit_kv(out, "ksa", c.ksa_id);
        emit_kv(out, "description", c.description);
        emit_kv(out, "evidence", c.evidence_statement);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq << YAML::EndMap;

    out << YAML::Key << "TASK" << YAML::Value << YAML::BeginMap;
    emit_kv(out, "assessment_id", pack.task.assessment_id);
    emit_kv(out, "prompt", pack.task.prompt_text);
    emit_list(out, "depends_on", pack.task.context_dependencies);
    out << YAML::EndMap;

    out << YAML::Key << "EXAMPLES" << YAML::Value << YAML::BeginSeq;
    for (const auto& ex : pack.examples) {
        out << YAML::BeginMap;
        emit_kv(out, "id", ex.id);
        emit_kv(out, "stage", to_string(ex.stage));
        out << YAML::Key << "score" << YAML::Value << ex.score;
        emit_kv(out, "response", ex.student_response);
        if (ex.rationale) emit_kv(out, "rationale", *ex.rationale);
        if (!ex.quoted_spans.empty()) emit_list(out, "quotes", ex.quoted_spans);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;

    const auto& kg = pack.knowledge_graph;
    out << YAML::Key << "KNOWLEDGE_GRAPH" << YAML::Value << YAML::BeginMap;
    emit_kv(out, "assessment_id", kg.assessment_id);
    emit_list(out, "levels", kg.level_names);
    out << YAML::Key << "nodes" << YAML::Value << YAML::BeginSeq;
    for (const auto& n : kg.nodes) {
        out << YAML::BeginMap;
        emit_kv(out, "id", n.id);
        emit_kv(out, "concept", n.concept_name);
        out << YAML::Key << "level" << YAML::Value << n.level;
        emit_list(out, "criteria", n.criteria);
        out << YAML::EndMap;
    }
    out << YAML::EndSeq;
    out << YAML::Key << "edges" << YAML::Value << YAML::BeginSeq;
    for (const auto& [from, to] : kg.edges) {
        out << YAML::Flow << YAML::BeginSeq << from << to << YAML::EndSeq;
    }
    out << YAML::EndSeq << YAML::EndMap;

    if (!pack.directives.empty()) {
        out << YAML::Key << "DIRECTIVES" << YAML::Value << YAML::BeginMap;
        for (const auto& [key, text] : pack.directives) emit_kv(out, key.c_str(), text);
        out << YAML::EndMap;
    }
    out << YAML::EndMap;
    if (!out.good()) throw ParseError(std::string("pack emit failed: ") + out.GetLastError());
    return std::string(out.c_str()) + "\n";
}

// ---------------------------------------------------------------------------
// Registry

PackRegistry PackRegistry::load_dir(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ParseError("pack directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".yaml" || ext == ".yml")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    PackRegistry registry;
    for (const auto& f : files) registry.add(load_pack(f));
    auto violations = registry.validate_dependencies();
    if (!violations.empty()) throw ValidationError(format_violations(violations));
    return registry;
}

void PackRegistry::add(AssessmentPack pack) {
    if (find(pack.assessment_id())) {
        throw ValidationError("duplicate pack for assessment '" + pack.assessment_id() + "'");
    }
    packs_.push_back(std::make_shared<const AssessmentPack>(std::move(pack)));
}

const AssessmentPack* PackRegistry::find(std::string_view assessment_id) const {
    for (const auto& p : packs_) {
        if (p->assessment_id() == assessment_id) return p.get();
    }
    return nullptr;
}

const AssessmentPack* PackRegistry::find_by_name(std::string_view name) const {
    for (const auto& p : packs_) {
        if (p->metadata.name == name) return p.get();
    }
    return nullptr;
}

std::shared_ptr<const AssessmentPack> PackRegistry::shared(std::string_view ref) const {
    for (const auto& p : packs_) {
        if (p->metadata.name == ref || p->assessment_id() == ref) return p;
    }
    throw UnknownAssessment("no pack named '" + std::string(ref) + "'");
}

const AssessmentPack& PackRegistry::resolve(std::string_view ref) const { return *shared(ref); }

std::vector<Violation> PackRegistry::validate_dependencies() const {
    std::vector<Violation> out;
    for (const auto& p : packs_) {
        for (auto v : validate_pack(*p, this)) {
            v.path = p->metadata.name + ":" + v.path;
            out.push_back(std::move(v));
        }
    }
    return out;
}

}  // namespace tutorloop
