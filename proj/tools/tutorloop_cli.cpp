// Command-line front end: packs, prompts, grading, evidence, metrics,
// judging, evaluation reports and the HTTP service.

#include "tutorloop/errors.hpp"
#include "tutorloop/evidence_store.hpp"
#include "tutorloop/grader.hpp"
#include "tutorloop/judge.hpp"
#include "tutorloop/llm.hpp"
#include "tutorloop/metrics.hpp"
#include "tutorloop/pack.hpp"
#include "tutorloop/pipeline.hpp"
#include "tutorloop/readability.hpp"
#include "tutorloop/reports.hpp"
#include "tutorloop/service.hpp"
#include "tutorloop/text_util.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include <csignal>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

namespace fs = std::filesystem;
using namespace tutorloop;
using json = nlohmann::ordered_json;

namespace {

struct BackendFlags {
    std::string replay;
    std::string record;
    std::string script;
    int max_in_flight = 8;

    void add(CLI::App* cmd) {
        cmd->add_option("--replay", replay, "Serve model calls from this recording directory");
        cmd->add_option("--record", record, "Call the live endpoint and record exchanges here");
        cmd->add_option("--script", script, "Answer model calls from a JSON script (offline)");
        cmd->add_option("--max-in-flight", max_in_flight, "Concurrent model calls");
    }

    std::unique_ptr<llm::LlmClient> client(const llm::ModelConfig& base) const {
        const auto config = base.with_env();
        std::shared_ptr<llm::ChatBackend> backend;
        if (!script.empty()) backend = llm::load_scripted_backend(script);
        else if (!replay.empty()) backend = std::make_shared<llm::ReplayBackend>(replay);
        else backend = std::make_shared<llm::HttpChatBackend>();
        if (!record.empty()) backend = std::make_shared<llm::RecordingBackend>(backend, record);
        return std::make_unique<llm::LlmClient>(backend, config, max_in_flight);
    }
};

PackRegistry load_registry(const std::string& dir) {
    if (dir.empty() || !fs::is_directory(dir)) return {};
    return PackRegistry::load_dir(dir);
}

// --pack accepts a file path, a pack name or an assessment id.
std::shared_ptr<const AssessmentPack> resolve_pack(const std::string& ref, PackRegistry& registry) {
    if (fs::is_regular_file(ref)) {
        auto pack = load_pack(ref);
        if (!registry.find(pack.assessment_id())) registry.add(pack);
        return registry.shared(pack.assessment_id());
    }
    return registry.shared(ref);
}

ErrorLedger load_ledger(const std::string& path) { return path.empty() ? ErrorLedger{} : ErrorLedger::load(path); }

std::vector<PipelineStage> parse_stage_list(const std::string& text) {
    std::vector<PipelineStage> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) {
        if (!trim(item).empty()) out.push_back(parse_pipeline_stage(trim(item)));
    }
    if (out.empty()) throw ValidationError("no stages given");
    return out;
}

void emit(const std::string& text, const std::string& out_path) {
    if (out_path.empty() || out_path == "-") std::cout << text;
    else write_file(out_path, text);
}

std::vector<metrics::LabelPair> read_label_pairs(const std::string& path) {
    std::vector<metrics::LabelPair> pairs;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(read_file(path))) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            const auto j = json::parse(line);
            pairs.push_back({j.value("item_id", std::to_string(line_no)), j.at("human").get<int>(),
                             j.at("machine").get<int>()});
        } catch (const json::exception& e) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return pairs;
}

json agreement_json(const metrics::AgreementReport& r) {
    return json{{"metric", r.metric}, {"point", r.point}, {"ci_low", r.ci_low}, {"ci_high", r.ci_high},
                {"n", r.n}, {"seed", r.seed}, {"resamples", r.resamples}, {"level", r.level}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tutorloop: formative-assessment grading, tutoring and evaluation"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string packs_dir = "data/packs";
    app.add_option("--packs", packs_dir, "Directory of assessment packs");

    std::function<int()> action;

    // pack validate -------------------------------------------------------
    auto* pack_cmd = app.add_subcommand("pack", "Assessment packs")->require_subcommand(1);
    std::vector<std::string> validate_paths;
    auto* pack_validate = pack_cmd->add_subcommand("validate", "Check pack files (or the whole --packs directory)");
    pack_validate->add_option("paths", validate_paths, "Pack files");
    pack_validate->callback([&] {
        action = [&] {
            int bad = 0;
            PackRegistry registry;
            std::vector<std::pair<std::string, std::string>> files;
            if (validate_paths.empty()) {
                for (const auto& e : fs::directory_iterator(packs_dir)) {
                    const auto ext = e.path().extension();
                    if (ext == ".yaml" || ext == ".yml") files.emplace_back(e.path().string(), "");
                }
                std::sort(files.begin(), files.end());
            } else {
                for (const auto& p : validate_paths) files.emplace_back(p, "");
            }
            for (const auto& [path, _] : files) {
                try {
                    auto pack = load_pack(path);
                    std::cout << "ok      " << path << " (" << pack.metadata.name << ", " << pack.assessment_id()
                              << ")\n";
                    registry.add(std::move(pack));
                } catch (const ValidationError& e) {
                    ++bad;
                    std::cout << "INVALID " << path << "\n" << e.what() << "\n";
                }
            }
            const auto cross = registry.validate_dependencies();
            if (!cross.empty()) {
                ++bad;
                std::cout << "INVALID pack set\n" << format_violations(cross);
            }
            if (bad) throw ValidationError(std::to_string(bad) + " pack check(s) failed");
            std::cout << files.size() << " pack(s) valid\n";
            return 0;
        };
    });

    // pipeline build | trends --------------------------------------------
    auto* pipeline_cmd = app.add_subcommand("pipeline", "Grading prompt pipeline")->require_subcommand(1);
    std::string pl_pack, pl_stage = "cot", pl_ledger, pl_out;
    int min_support = kDefaultTrendSupport;
    auto* pl_build = pipeline_cmd->add_subcommand("build", "Render the grading prompt for a stage");
    pl_build->add_option("--pack", pl_pack)->required();
    pl_build->add_option("--stage", pl_stage, "io|icl|cot|al");
    pl_build->add_option("--ledger", pl_ledger, "Error ledger (JSON)");
    pl_build->add_option("--out", pl_out);
    pl_build->callback([&] {
        action = [&] {
            auto registry = load_registry(packs_dir);
            auto pack = resolve_pack(pl_pack, registry);
            emit(build_grading_prompt(*pack, parse_pipeline_stage(pl_stage), load_ledger(pl_ledger), &registry).render(),
                 pl_out);
            return 0;
        };
    });
    auto* pl_trends = pipeline_cmd->add_subcommand("trends", "List error trends in a ledger");
    pl_trends->add_option("--ledger", pl_ledger)->required();
    pl_trends->add_option("--min-support", min_support);
    pl_trends->callback([&] {
        action = [&] {
            const auto trends = detect_error_trends(load_ledger(pl_ledger), min_support);
            if (trends.empty()) std::cout << "no trends at support >= " << min_support << "\n";
            for (const auto& t : trends) {
                std::cout << t.key() << " support " << t.supporting_entry_ids.size() << ":";
                for (const auto& id : t.supporting_entry_ids) std::cout << " " << id;
                std::cout << "\n";
            }
            return 0;
        };
    });

    // grade ---------------------------------------------------------------
    auto* grade_cmd = app.add_subcommand("grade", "Grade a response file");
    std::string gr_pack, gr_stage = "cot", gr_in, gr_out, gr_ledger, gr_store;
    unsigned gr_parallel = 4;
    BackendFlags gr_backend;
    grade_cmd->add_option("--pack", gr_pack)->required();
    grade_cmd->add_option("--stage", gr_stage, "io|icl|cot|al");
    grade_cmd->add_option("--in", gr_in, "Responses (JSON lines)")->required();
    grade_cmd->add_option("--out", gr_out, "Grades (JSON lines)")->required();
    grade_cmd->add_option("--ledger", gr_ledger);
    grade_cmd->add_option("--store", gr_store, "Also append grades to this evidence log");
    grade_cmd->add_option("--parallel", gr_parallel);
    gr_backend.add(grade_cmd);
    grade_cmd->callback([&] {
        action = [&] {
            auto registry = load_registry(packs_dir);
            auto pack = resolve_pack(gr_pack, registry);
            auto client = gr_backend.client(llm::ModelConfig::grading_defaults());
            const auto responses = load_responses(gr_in);
            const auto result = batch_grade(*pack, responses, parse_pipeline_stage(gr_stage), load_ledger(gr_ledger),
                                            *client, &registry, gr_parallel);
            write_file(gr_out, grades_to_jsonl(result.records));
            if (!gr_store.empty()) {
                EvidenceStore store(gr_store);
                GradeWriter writer(store);
                for (const auto& g : result.records) writer.append(g, pack->rubric);
            }
            std::cout << "graded " << result.records.size() << " of " << responses.size() << " responses\n";
            for (const auto& f : result.failures) {
                std::cerr << "failed " << f.response_id << ": " << f.error_tag << ": " << f.message << "\n";
            }
            return result.failures.empty() ? 0 : 2;
        };
    });

    // serve ---------------------------------------------------------------
    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP API");
    std::string sv_store = "data/evidence.jsonl", sv_listen = "127.0.0.1:8080", sv_pairs, sv_labels;
    std::uint64_t sv_seed = 312;
    std::size_t sv_boot = 2000;
    BackendFlags sv_backend;
    serve_cmd->add_option("--store", sv_store, "Evidence log");
    serve_cmd->add_option("--listen", sv_listen, "host:port");
    serve_cmd->add_option("--scored-pairs", sv_pairs, "Scored pairs for /reports/scoring");
    serve_cmd->add_option("--labels", sv_labels, "Judge labels for /reports/faithfulness and timelines");
    serve_cmd->add_option("--seed", sv_seed);
    serve_cmd->add_option("--boot", sv_boot, "Bootstrap resamples");
    sv_backend.add(serve_cmd);
    serve_cmd->callback([&] {
        action = [&] {
            auto registry = load_registry(packs_dir);
            EvidenceStore store(sv_store);
            auto client = sv_backend.client(llm::ModelConfig::grading_defaults());
            ServiceOptions opts;
            if (!sv_pairs.empty()) opts.scored_pairs_path = sv_pairs;
            if (!sv_labels.empty()) opts.labels_path = sv_labels;
            opts.bootstrap.seed = sv_seed;
            opts.bootstrap.resamples = sv_boot;
            Service service(registry, store, *client, opts);
            httplib::Server server;
            service.install(server);
            const auto colon = sv_listen.rfind(':');
            if (colon == std::string::npos) throw ValidationError("--listen expects host:port");
            const std::string host = sv_listen.substr(0, colon);
            const int port = std::stoi(sv_listen.substr(colon + 1));
            std::cout << "listening on " << host << ":" << port << "\n" << std::flush;
            if (!server.listen(host, port)) throw StorageError("cannot listen on " + sv_listen);
            return 0;
        };
    });

    // evidence export -----------------------------------------------------
    auto* ev_cmd = app.add_subcommand("evidence", "Evidence store")->require_subcommand(1);
    std::string ev_store = "data/evidence.jsonl", ev_student, ev_out;
    auto* ev_export = ev_cmd->add_subcommand("export", "Print the item log as JSON lines");
    ev_export->add_option("--store", ev_store);
    ev_export->add_option("--student", ev_student, "Only this student (default: everyone)");
    ev_export->add_option("--out", ev_out);
    ev_export->callback([&] {
        action = [&] {
            if (!fs::exists(ev_store)) throw StorageError("no evidence log at " + ev_store);
            EvidenceStore store(ev_store);
            emit(store.export_jsonl(ev_student.empty() ? std::nullopt : std::optional<std::string>(ev_student)), ev_out);
            return 0;
        };
    });

    // metrics -------------------------------------------------------------
    auto* m_cmd = app.add_subcommand("metrics", "Agreement, readability and faithfulness metrics")->require_subcommand(1);
    std::string m_in, m_text, m_labels, m_codomain = "ternary";
    int m_k = 0;
    std::size_t m_boot = 0;
    std::uint64_t m_seed = 312;
    auto add_pair_opts = [&](CLI::App* c) {
        c->add_option("--in", m_in, "Pairs file: JSON lines with human and machine")->required();
        c->add_option("--k", m_k, "Score levels (default: largest label + 1)");
        c->add_option("--boot", m_boot, "Bootstrap resamples (0 = point estimate only)");
        c->add_option("--seed", m_seed);
    };
    auto pair_metric = [&](const std::string& name, auto fn) {
        auto pairs = read_label_pairs(m_in);
        int k = m_k;
        if (k == 0) {
            for (const auto& p : pairs) k = std::max({k, p.human + 1, p.machine + 1});
            k = std::max(k, 2);
        }
        const double point = fn(std::span<const metrics::LabelPair>(pairs), k);
        std::cout << name << " = " << format_fixed(point, 6) << " (n = " << pairs.size() << ", k = " << k << ")\n";
        json record{{"metric", name}, {"point", point}, {"n", pairs.size()}, {"k", k}};
        if (m_boot > 0) {
            metrics::BootstrapOptions o;
            o.resamples = m_boot;
            o.seed = m_seed;
            const auto r = metrics::bootstrap_ci(
                pairs, [&](std::span<const metrics::LabelPair> s) { return std::optional<double>(fn(s, k)); }, name, o);
            std::cout << "95% CI [" << format_fixed(r.ci_low, 6) << ", " << format_fixed(r.ci_high, 6) << "], B = "
                      << r.resamples << ", seed = " << r.seed << "\n";
            record = agreement_json(r);
            record["k"] = k;
        }
        std::cout << record.dump() << "\n";
        return 0;
    };
    auto* m_kappa = m_cmd->add_subcommand("kappa", "Quadratic weighted kappa");
    add_pair_opts(m_kappa);
    m_kappa->callback([&] {
        action = [&] { return pair_metric("quadratic_weighted_kappa", metrics::quadratic_weighted_kappa); };
    });
    auto* m_f1 = m_cmd->add_subcommand("f1", "Micro-averaged F1");
    add_pair_opts(m_f1);
    m_f1->callback([&] { action = [&] { return pair_metric("micro_f1", metrics::micro_f1); }; });
    auto* m_fkgl = m_cmd->add_subcommand("fkgl", "Flesch-Kincaid grade level");
    m_fkgl->add_option("--text", m_text, "Text to score");
    m_fkgl->add_option("--in", m_in, "File to score");
    m_fkgl->callback([&] {
        action = [&] {
            const std::string text = !m_text.empty() ? m_text : read_file(m_in);
            const auto stats = metrics::count_text_stats(text);
            const double grade = metrics::fkgl(stats);
            std::cout << "words = " << stats.words << ", sentences = " << stats.sentences
                      << ", syllables = " << stats.syllables << "\nfkgl = " << format_fixed(grade, 4)
                      << "\nreadability_label = " << metrics::readability_label(grade) << "\n";
            std::cout << json{{"words", stats.words}, {"sentences", stats.sentences}, {"syllables", stats.syllables},
                              {"fkgl", grade}, {"readability_label", metrics::readability_label(grade)}}
                             .dump()
                      << "\n";
            return 0;
        };
    });
    auto* m_rates = m_cmd->add_subcommand("rates", "Faithfulness rates of a label sequence");
    m_rates->add_option("--labels", m_labels, "Comma list, e.g. 1,1,0,-1")->required();
    m_rates->add_option("--codomain", m_codomain, "ternary|binary");
    m_rates->callback([&] {
        action = [&] {
            metrics::FaithLabelSeq seq;
            seq.construct = "cli";
            seq.codomain = m_codomain == "binary" ? metrics::Codomain::Binary : metrics::Codomain::Ternary;
            std::istringstream in(m_labels);
            std::string item;
            while (std::getline(in, item, ',')) {
                if (!trim(item).empty()) seq.labels.push_back(std::stoi(trim(item)));
            }
            const auto r = metrics::faithfulness_rates(seq);
            std::cout << "F = " << format_fixed(r.f.to_double(), 2) << ", UNF = " << format_fixed(r.unf.to_double(), 2)
                      << ", NEU = " << format_fixed(r.neu.to_double(), 2) << " (N = " << r.n << ")\n";
            std::cout << json{{"f", r.f.to_double()}, {"unf", r.unf.to_double()}, {"neu", r.neu.to_double()}, {"n", r.n}}
                             .dump()
                      << "\n";
            return 0;
        };
    });

    // judge ---------------------------------------------------------------
    auto* j_cmd = app.add_subcommand("judge", "Construct-faithfulness judging")->require_subcommand(1);
    std::string j_logs, j_constructs = "all", j_out, j_prompts = "data/judge_prompts", j_labels, j_sample, j_human,
                        j_construct, j_session;
    unsigned j_parallel = 4;
    std::size_t j_n = kValidationSampleSize, j_boot = 2000;
    std::uint64_t j_seed = 312;
    int j_iteration = 1;
    bool j_json = false;
    BackendFlags j_backend;
    auto* j_run = j_cmd->add_subcommand("run", "Label every agent utterance in a conversation log");
    j_run->add_option("--logs", j_logs, "Evidence log (JSON lines)")->required();
    j_run->add_option("--constructs", j_constructs, "all or a comma list");
    j_run->add_option("--out", j_out, "Labels file")->required();
    j_run->add_option("--prompts", j_prompts, "Judge prompt directory");
    j_run->add_option("--parallel", j_parallel);
    j_backend.add(j_run);
    j_run->callback([&] {
        action = [&] {
            auto registry = load_registry(packs_dir);
            const auto items = parse_evidence_jsonl(read_file(j_logs));
            const auto constructs = parse_construct_list(j_constructs);
            const auto prompts = JudgePrompts::load_dir(j_prompts);
            auto client = j_backend.client(llm::ModelConfig::judge_defaults());
            JudgeOptions opts;
            opts.parallelism = j_parallel;
            const auto run = judge_conversations(items, registry, constructs, prompts, *client, opts);
            write_file(j_out, judge_run_to_jsonl(run));
            std::cout << "labelled " << run.labels.size() << ", failed " << run.failures.size() << "\n";
            for (const auto& f : run.failures) {
                std::cerr << "failed " << f.session_id << "#" << f.turn_index << " " << to_string(f.construct) << ": "
                          << f.error_tag << ": " << f.message << "\n";
            }
            return 0;
        };
    });
    auto* j_validate = j_cmd->add_subcommand("validate", "Check a judge against human labels");
    j_validate->add_option("--construct", j_construct)->required();
    j_validate->add_option("--sample", j_sample, "Sampled judge labels");
    j_validate->add_option("--labels", j_labels, "Full labels file to sample from");
    j_validate->add_option("--human", j_human, "Human labels (JSON lines)")->required();
    j_validate->add_option("--n", j_n, "Sample size when sampling from --labels");
    j_validate->add_option("--seed", j_seed);
    j_validate->add_option("--iteration", j_iteration, "Prompt iteration being validated");
    j_validate->add_option("--out", j_out, "Write the sample used");
    j_validate->callback([&] {
        action = [&] {
            const auto construct = parse_construct(j_construct);
            std::vector<ConstructLabel> sample;
            if (!j_sample.empty()) {
                for (auto& l : parse_labels_jsonl(read_file(j_sample))) {
                    if (l.construct == construct) sample.push_back(std::move(l));
                }
            } else if (!j_labels.empty()) {
                sample = sample_for_validation(parse_labels_jsonl(read_file(j_labels)), construct, j_n, j_seed);
            } else {
                throw ValidationError("give --sample or --labels");
            }
            if (!j_out.empty()) write_file(j_out, labels_to_jsonl(sample));
            const auto human = parse_human_labels_jsonl(read_file(j_human));
            const auto run = validate_judge(sample, human, construct, j_iteration);
            std::cout << render_validation_run(run);
            return run.pass ? 0 : 3;
        };
    });
    auto* j_report = j_cmd->add_subcommand("report", "Faithfulness table from a labels file");
    j_report->add_option("--labels", j_labels)->required();
    j_report->add_option("--boot", j_boot);
    j_report->add_option("--seed", j_seed);
    j_report->add_option("--out", j_out);
    j_report->callback([&] {
        action = [&] {
            metrics::BootstrapOptions o;
            o.resamples = j_boot;
            o.seed = j_seed;
            emit(faithfulness_report_text(j_labels, o), j_out);
            return 0;
        };
    });
    auto* j_timeline = j_cmd->add_subcommand("timeline", "Construct-by-turn grid for one session");
    j_timeline->add_option("--session", j_session)->required();
    j_timeline->add_option("--logs", j_logs, "Evidence log")->required();
    j_timeline->add_option("--labels", j_labels)->required();
    j_timeline->add_flag("--json", j_json, "Emit the JSON record instead of the grid");
    j_timeline->callback([&] {
        action = [&] {
            const auto items = parse_evidence_jsonl(read_file(j_logs));
            const auto labels = parse_labels_jsonl(read_file(j_labels));
            const auto t = export_case_timeline(items, j_session, labels);
            std::cout << (j_json ? to_json(t).dump(2) + "\n" : render_timeline(t));
            return 0;
        };
    });

    // eval scoring | report -----------------------------------------------
    auto* e_cmd = app.add_subcommand("eval", "Scoring evaluation")->require_subcommand(1);
    std::string e_stages = "io,icl,cot", e_pack, e_in, e_out, e_ledger;
    std::size_t e_boot = 2000, e_holdout = 0;
    std::uint64_t e_seed = 312;
    unsigned e_parallel = 4;
    BackendFlags e_backend;
    auto* e_scoring = e_cmd->add_subcommand("scoring", "Grade a labelled response file at each stage and report");
    e_scoring->add_option("--stages", e_stages, "Comma list of io,icl,cot,al");
    e_scoring->add_option("--pack", e_pack)->required();
    e_scoring->add_option("--in", e_in, "Responses with human_score")->required();
    e_scoring->add_option("--out", e_out, "Write scored pairs here");
    e_scoring->add_option("--ledger", e_ledger);
    e_scoring->add_option("--holdout", e_holdout, "Evaluate a stratified holdout of this size (0 = all)");
    e_scoring->add_option("--boot", e_boot);
    e_scoring->add_option("--seed", e_seed);
    e_scoring->add_option("--parallel", e_parallel);
    e_backend.add(e_scoring);
    e_scoring->callback([&] {
        action = [&] {
            auto registry = load_registry(packs_dir);
            auto pack = resolve_pack(e_pack, registry);
            auto responses = load_responses(e_in);
            if (e_holdout > 0) {
                std::vector<std::string> classes;
                for (const auto& r : responses) {
                    if (!r.human_score) throw ValidationError("response '" + r.response_id + "' has no human score");
                    classes.push_back(std::to_string(*r.human_score));
                }
                const auto split = metrics::stratified_split(classes, e_holdout, e_seed);
                std::vector<StudentResponse> held;
                for (auto i : split.holdout) held.push_back(responses[i]);
                responses = std::move(held);
            }
            auto client = e_backend.client(llm::ModelConfig::grading_defaults());
            const auto eval = run_scoring_eval(*pack, responses, parse_stage_list(e_stages), load_ledger(e_ledger),
                                               *client, &registry, e_parallel);
            for (const auto& [stage, f] : eval.failures) {
                std::cerr << "failed " << to_string(stage) << " " << f.response_id << ": " << f.error_tag << ": "
                          << f.message << "\n";
            }
            if (!e_out.empty()) write_file(e_out, scored_pairs_to_jsonl(eval.pairs));
            metrics::BootstrapOptions o;
            o.resamples = e_boot;
            o.seed = e_seed;
            std::cout << render_scoring_report(scoring_report(eval.pairs, o));
            return 0;
        };
    });
    auto* e_report = e_cmd->add_subcommand("report", "Render the scoring table from a scored pairs file");
    e_report->add_option("--in", e_in)->required();
    e_report->add_option("--boot", e_boot);
    e_report->add_option("--seed", e_seed);
    e_report->callback([&] {
        action = [&] {
            metrics::BootstrapOptions o;
            o.resamples = e_boot;
            o.seed = e_seed;
            std::cout << scoring_report_text(e_in, o);
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return action ? action() : 0;
    } catch (const Error& e) {
        std::cerr << "error: " << e.tag() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
