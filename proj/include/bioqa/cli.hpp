#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "bioqa/answerer.hpp"
#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/llm_gateway.hpp"
#include "bioqa/medproc.hpp"
#include "bioqa/metrics.hpp"
#include "bioqa/pubmed_client.hpp"
#include "bioqa/retrieval.hpp"

namespace bioqa::cli {

struct Command {
    std::string verb; // run-phase-a | run-phase-b | run-medprocner | evaluate | repeat
    std::filesystem::path config_path;
    std::filesystem::path input_path;
    std::filesystem::path output_path;
    std::vector<std::string> overrides; // key=value

    int times = 0;                    // repeat
    std::string pipeline = "phase-a"; // repeat
    std::string task;                 // evaluate: phase-a | phase-b | ner | el | indexing
    std::filesystem::path gold_path;  // evaluate
    std::filesystem::path pred_path;  // evaluate

    std::filesystem::path gazetteer_path; // run-medprocner
    std::filesystem::path examples_path;  // run-medprocner
};

inline RunConfig resolve_config(const Command& cmd, bool config_required = true) {
    RunConfig cfg;
    if (!cmd.config_path.empty()) {
        cfg = load_config(cmd.config_path);
    } else if (config_required) {
        throw ConfigError("a config file is required for this command");
    }
    for (const auto& assignment : cmd.overrides) apply_override(cfg, assignment);
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Service construction
// ---------------------------------------------------------------------------

inline std::string env_or_empty(const std::string& var) {
    if (var.empty()) return "";
    const char* v = std::getenv(var.c_str());
    return v ? v : "";
}

inline std::shared_ptr<llm::ChatBackend> make_llm_backend(const RunConfig& cfg) {
    if (cfg.llm_backend == "replay") {
        if (cfg.llm_cassette.empty()) throw ConfigError("llm_backend=replay needs llm_cassette");
        return llm::ScriptedBackend::from_cassette(cfg.llm_cassette);
    }
    auto http = std::make_shared<llm::HttpChatBackend>(cfg.api_base_url,
                                                       env_or_empty(cfg.api_key_env_var));
    if (cfg.llm_backend == "record") {
        if (cfg.llm_cassette.empty()) throw ConfigError("llm_backend=record needs llm_cassette");
        return std::make_shared<llm::RecorderBackend>(http, cfg.llm_cassette);
    }
    return http;
}

inline std::shared_ptr<pubmed::HttpFetcher> make_pubmed_fetcher(const RunConfig& cfg) {
    if (cfg.pubmed_backend == "replay") {
        if (cfg.pubmed_cassette.empty())
            throw ConfigError("pubmed_backend=replay needs pubmed_cassette");
        return pubmed::ReplayFetcher::from_cassette(cfg.pubmed_cassette);
    }
    auto live = std::make_shared<pubmed::LiveFetcher>(cfg.pubmed_base_url);
    if (cfg.pubmed_backend == "record") {
        if (cfg.pubmed_cassette.empty())
            throw ConfigError("pubmed_backend=record needs pubmed_cassette");
        return std::make_shared<pubmed::RecordingFetcher>(live, cfg.pubmed_cassette);
    }
    return live;
}

inline llm::GatewayOptions gateway_options(const RunConfig& cfg, bool bypass_cache) {
    llm::GatewayOptions o;
    o.retry_max = cfg.retry_max;
    o.retry_base_delay = std::chrono::milliseconds(cfg.retry_base_delay_ms);
    o.concurrency = cfg.workers;
    o.cache_dir = cfg.cache_dir;
    o.bypass_cache = bypass_cache;
    return o;
}

inline pubmed::ClientOptions pubmed_options(const RunConfig& cfg) {
    pubmed::ClientOptions o;
    // The rate limiter protects NCBI; cassette replay never reaches it.
    o.requests_per_second =
        cfg.pubmed_backend == "replay" ? 1e9 : cfg.requests_per_second;
    o.retry_max = cfg.retry_max;
    o.retry_base_delay = std::chrono::milliseconds(cfg.retry_base_delay_ms);
    o.api_key = env_or_empty(cfg.ncbi_api_key_env_var);
    return o;
}

// ---------------------------------------------------------------------------
// Bounded question-level parallelism
// ---------------------------------------------------------------------------

template <typename Fn>
inline void parallel_for(size_t n, int workers, Fn&& fn) {
    if (workers <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    size_t count = std::min<size_t>(static_cast<size_t>(workers), n);
    for (size_t w = 0; w < count; ++w)
        pool.emplace_back([&] {
            for (size_t i; (i = next.fetch_add(1)) < n;) fn(i);
        });
    for (auto& t : pool) t.join();
}

struct FailureRecord {
    std::string question_id;
    std::string error;
};

inline OrderedJson summary_json(size_t total, const std::vector<FailureRecord>& failures) {
    OrderedJson s;
    s["total"] = total;
    s["succeeded"] = total - failures.size();
    s["failed"] = failures.size();
    s["warnings"] = failures.size();
    s["failures"] = OrderedJson::array();
    for (const auto& f : failures)
        s["failures"].push_back({{"id", f.question_id}, {"error", f.error}});
    return s;
}

// ---------------------------------------------------------------------------
// Phase A
// ---------------------------------------------------------------------------

struct PhaseAOutcome {
    std::map<std::string, QuestionResult> results;
    std::vector<OrderedJson> trace_lines; // one JSON object per question, input order
    std::vector<FailureRecord> failures;
};

/// Runs retrieval for every question; per-question failures are recorded and
/// never abort the batch.
inline PhaseAOutcome execute_phase_a(const std::vector<Question>& questions,
                                     const RunConfig& cfg, llm::Gateway& gateway,
                                     pubmed::PubMedClient& client) {
    PhaseAOutcome out;
    std::vector<OrderedJson> lines(questions.size());
    std::vector<std::optional<FailureRecord>> failures(questions.size());
    std::vector<std::optional<QuestionResult>> results(questions.size());

    parallel_for(questions.size(), cfg.workers, [&](size_t i) {
        const Question& q = questions[i];
        try {
            auto trace = retrieval::retrieve(q, cfg, gateway, client);
            QuestionResult r;
            r.documents = trace.final_documents;
            results[i] = std::move(r);
            lines[i] = trace.to_json();
        } catch (const std::exception& e) {
            failures[i] = FailureRecord{q.id, e.what()};
            QuestionResult r;
            r.documents = std::vector<std::string>{};
            r.error = e.what();
            results[i] = std::move(r);
            OrderedJson j;
            j["question_id"] = q.id;
            j["error"] = e.what();
            lines[i] = std::move(j);
        }
    });

    for (size_t i = 0; i < questions.size(); ++i) {
        out.results[questions[i].id] = std::move(*results[i]);
        out.trace_lines.push_back(std::move(lines[i]));
        if (failures[i]) out.failures.push_back(*failures[i]);
    }
    return out;
}

inline int run_phase_a(const Command& cmd) {
    RunConfig cfg = resolve_config(cmd);
    auto questions = load_questions(cmd.input_path);
    llm::Gateway gateway(make_llm_backend(cfg), gateway_options(cfg, /*bypass_cache=*/false));
    pubmed::PubMedClient client(make_pubmed_fetcher(cfg), pubmed_options(cfg));

    auto outcome = execute_phase_a(questions, cfg, gateway, client);

    write_submission(questions, outcome.results, cmd.output_path);
    std::string traces;
    for (const auto& line : outcome.trace_lines) traces += line.dump() + "\n";
    text::atomic_write_file(cmd.output_path.string() + ".trace.jsonl", traces);
    text::atomic_write_file(cmd.output_path.string() + ".summary.json",
                            summary_json(questions.size(), outcome.failures).dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// Phase B
// ---------------------------------------------------------------------------

struct PhaseBOutcome {
    std::map<std::string, QuestionResult> results;
    std::vector<OrderedJson> log_lines;
    std::vector<FailureRecord> failures;
};

inline PhaseBOutcome execute_phase_b(const std::vector<Question>& questions,
                                     const RunConfig& cfg, llm::Gateway& gateway) {
    PhaseBOutcome out;
    std::vector<OrderedJson> lines(questions.size());
    std::vector<std::optional<FailureRecord>> failures(questions.size());
    std::vector<std::optional<QuestionResult>> results(questions.size());

    parallel_for(questions.size(), cfg.workers, [&](size_t i) {
        const Question& q = questions[i];
        std::string context;
        if (cfg.grounded && q.gold_snippets) context = answerer::build_context(*q.gold_snippets);
        OrderedJson fps = OrderedJson::object();
        try {
            QuestionResult r;
            std::string fp;
            switch (q.type) {
                case QuestionType::yesno:
                    r.exact = answerer::answer_yesno(gateway, q, context, cfg.model_id, &fp);
                    fps["exact"] = fp;
                    break;
                case QuestionType::factoid:
                    r.exact = answerer::answer_factoid(gateway, q, context, cfg.model_id, &fp);
                    fps["exact"] = fp;
                    break;
                case QuestionType::list:
                    r.exact = answerer::answer_list(gateway, q, context, cfg.model_id, &fp);
                    fps["exact"] = fp;
                    break;
                case QuestionType::summary:
                    break; // ideal answer only
            }
            r.ideal = answerer::answer_ideal(gateway, q, context, cfg.model_id, &fp).text;
            fps["ideal"] = fp;
            results[i] = std::move(r);
            OrderedJson j;
            j["question_id"] = q.id;
            j["type"] = to_string(q.type);
            j["grounded"] = !context.empty();
            j["prompt_fingerprints"] = fps;
            lines[i] = std::move(j);
        } catch (const std::exception& e) {
            failures[i] = FailureRecord{q.id, e.what()};
            results[i] = QuestionResult{{}, {}, {}, std::string(e.what())};
            OrderedJson j;
            j["question_id"] = q.id;
            j["error"] = e.what();
            lines[i] = std::move(j);
        }
    });

    for (size_t i = 0; i < questions.size(); ++i) {
        out.results[questions[i].id] = std::move(*results[i]);
        out.log_lines.push_back(std::move(lines[i]));
        if (failures[i]) out.failures.push_back(*failures[i]);
    }
    return out;
}

inline int run_phase_b(const Command& cmd) {
    RunConfig cfg = resolve_config(cmd);
    auto questions = load_questions(cmd.input_path);
    llm::Gateway gateway(make_llm_backend(cfg), gateway_options(cfg, /*bypass_cache=*/false));

    auto outcome = execute_phase_b(questions, cfg, gateway);

    write_submission(questions, outcome.results, cmd.output_path);
    std::string log;
    for (const auto& line : outcome.log_lines) log += line.dump() + "\n";
    text::atomic_write_file(cmd.output_path.string() + ".log.jsonl", log);
    text::atomic_write_file(cmd.output_path.string() + ".summary.json",
                            summary_json(questions.size(), outcome.failures).dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// MedProcNER
// ---------------------------------------------------------------------------

inline std::vector<medproc::FewShotExample> load_examples(const std::filesystem::path& path,
                                                          int count) {
    Json doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_array())
        throw SchemaError("examples file must be a JSON array: " + path.string());
    std::vector<medproc::FewShotExample> out;
    for (const auto& j : doc) {
        medproc::FewShotExample ex;
        ex.input_text = j.at("text").get<std::string>();
        if (j.contains("procedures"))
            for (const auto& p : j["procedures"]) ex.output_procedures.push_back(p.get<std::string>());
        out.push_back(std::move(ex));
    }
    if (static_cast<int>(out.size()) < count)
        throw SchemaError("examples file holds " + std::to_string(out.size()) +
                          " examples, config asks for " + std::to_string(count));
    out.resize(count);
    return out;
}

inline int run_medprocner(const Command& cmd) {
    RunConfig cfg = resolve_config(cmd);
    if (cmd.gazetteer_path.empty()) throw ConfigError("run-medprocner requires --gazetteer");
    if (cmd.examples_path.empty()) throw ConfigError("run-medprocner requires --examples");

    auto gazetteer = medproc::load_gazetteer(cmd.gazetteer_path,
                                             medproc::gazetteer_columns_from(cfg));
    auto examples = load_examples(cmd.examples_path, cfg.few_shot_count);

    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(cmd.input_path))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no .txt documents in " + cmd.input_path.string());

    llm::Gateway gateway(make_llm_backend(cfg), gateway_options(cfg, /*bypass_cache=*/false));

    std::vector<std::vector<medproc::Mention>> mentions_by_doc(files.size());
    std::vector<std::optional<FailureRecord>> failures(files.size());
    std::vector<OrderedJson> lines(files.size());

    parallel_for(files.size(), cfg.workers, [&](size_t i) {
        const std::string doc_id = files[i].filename().string();
        try {
            std::string document = text::read_file(files[i]);
            std::vector<std::string> dropped;
            std::string fp;
            auto mentions =
                medproc::extract_procedures(gateway, doc_id, document, examples, cfg.model_id,
                                            cfg.few_shot_count, &dropped, &fp);
            for (auto& m : mentions) m.code = medproc::link(m.text, gazetteer, cfg.link_threshold);
            mentions_by_doc[i] = std::move(mentions);
            OrderedJson j;
            j["document"] = doc_id;
            j["mentions"] = mentions_by_doc[i].size();
            j["dropped_forms"] = dropped;
            j["prompt_fingerprint"] = fp;
            lines[i] = std::move(j);
        } catch (const std::exception& e) {
            failures[i] = FailureRecord{doc_id, e.what()};
            OrderedJson j;
            j["document"] = doc_id;
            j["error"] = e.what();
            lines[i] = std::move(j);
        }
    });

    std::vector<medproc::Mention> all;
    std::map<std::string, std::vector<std::string>> codes_by_doc;
    for (size_t i = 0; i < files.size(); ++i) {
        const std::string doc_id = files[i].filename().string();
        all.insert(all.end(), mentions_by_doc[i].begin(), mentions_by_doc[i].end());
        auto codes = medproc::index_document(mentions_by_doc[i]);
        if (!codes.empty()) codes_by_doc[doc_id] = std::move(codes);
    }

    std::filesystem::create_directories(cmd.output_path);
    medproc::write_ner_tsv(cmd.output_path / "ner.tsv", all);
    medproc::write_el_tsv(cmd.output_path / "el.tsv", all);
    medproc::write_index_tsv(cmd.output_path / "index.tsv", codes_by_doc);

    std::string log;
    for (const auto& line : lines) log += line.dump() + "\n";
    text::atomic_write_file(cmd.output_path / "run.log.jsonl", log);
    std::vector<FailureRecord> failed;
    for (const auto& f : failures)
        if (f) failed.push_back(*f);
    text::atomic_write_file(cmd.output_path / "summary.json",
                            summary_json(files.size(), failed).dump(2) + "\n");
    return 0;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline std::vector<metrics::Span> spans_from_tsv(const std::filesystem::path& path,
                                                 bool with_code) {
    std::vector<metrics::Span> out;
    for (const auto& m : medproc::read_span_tsv(path)) {
        metrics::Span s;
        s.doc = m.document_id;
        s.start = static_cast<int64_t>(m.start);
        s.end = static_cast<int64_t>(m.end);
        if (with_code) s.code = m.code.value_or("");
        out.push_back(std::move(s));
    }
    return out;
}

inline std::vector<metrics::Span> index_spans_from_tsv(const std::filesystem::path& path) {
    auto lines = text::split(text::read_file(path), '\n');
    std::vector<metrics::Span> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto fields = text::split(lines[i], '\t');
        if (fields.size() < 2)
            throw SchemaError(path.string() + ":" + std::to_string(i + 1) +
                              ": expected filename<TAB>code");
        out.push_back({fields[0], 0, 0, fields[1]});
    }
    return out;
}

inline std::map<std::string, double> evaluate_task(const Command& cmd, const RunConfig& cfg) {
    if (cmd.task == "phase-a") {
        auto gold = metrics::load_gold_answers(cmd.gold_path);
        auto pred = load_submission(cmd.pred_path);
        return metrics::evaluate_phase_a(gold, pred, cfg.gmap_epsilon);
    }
    if (cmd.task == "phase-b") {
        auto gold = metrics::load_gold_answers(cmd.gold_path);
        auto pred = load_submission(cmd.pred_path);
        return metrics::evaluate_phase_b(gold, pred);
    }
    if (cmd.task == "ner" || cmd.task == "el" || cmd.task == "indexing") {
        std::vector<metrics::Span> gold, pred;
        if (cmd.task == "indexing") {
            gold = index_spans_from_tsv(cmd.gold_path);
            pred = index_spans_from_tsv(cmd.pred_path);
        } else {
            bool with_code = cmd.task == "el";
            gold = spans_from_tsv(cmd.gold_path, with_code);
            pred = spans_from_tsv(cmd.pred_path, with_code);
        }
        auto prf = metrics::span_micro_f1(gold, pred);
        return {{cmd.task + "_precision", prf.precision},
                {cmd.task + "_recall", prf.recall},
                {cmd.task + "_f1", prf.f1}};
    }
    throw ConfigError("unknown evaluate task \"" + cmd.task +
                      "\" (expected phase-a|phase-b|ner|el|indexing)");
}

inline int evaluate(const Command& cmd) {
    RunConfig cfg = resolve_config(cmd, /*config_required=*/false);
    auto results = evaluate_task(cmd, cfg);
    std::cout << metrics::format_metric_table(results);
    if (!cmd.output_path.empty()) metrics::write_metric_report(cmd.output_path, results);
    return 0;
}

// ---------------------------------------------------------------------------
// Repeated-run variance
// ---------------------------------------------------------------------------

/// Runs the selected pipeline N times with the cache bypassed and reports
/// per-metric spread. The input file doubles as the gold standard.
inline int repeat(const Command& cmd) {
    if (cmd.times < 2) throw ConfigError("repeat requires --times >= 2");
    RunConfig cfg = resolve_config(cmd);
    auto questions = load_questions(cmd.input_path);
    auto gold = metrics::load_gold_answers(cmd.input_path);

    std::vector<std::map<std::string, double>> runs;
    for (int run = 0; run < cmd.times; ++run) {
        llm::Gateway gateway(make_llm_backend(cfg), gateway_options(cfg, /*bypass_cache=*/true));
        std::map<std::string, QuestionResult> results;
        if (cmd.pipeline == "phase-a") {
            pubmed::PubMedClient client(make_pubmed_fetcher(cfg), pubmed_options(cfg));
            results = execute_phase_a(questions, cfg, gateway, client).results;
        } else if (cmd.pipeline == "phase-b") {
            results = execute_phase_b(questions, cfg, gateway).results;
        } else {
            throw ConfigError("repeat --pipeline must be phase-a or phase-b");
        }
        std::vector<SubmissionEntry> entries;
        for (const auto& q : questions) {
            const auto& r = results.at(q.id);
            SubmissionEntry e;
            e.id = q.id;
            if (r.documents) e.documents = *r.documents;
            if (r.exact && r.exact->kind != ExactAnswer::Kind::summary)
                e.exact_answer = Json::parse(exact_answer_to_json(*r.exact).dump());
            if (r.ideal) e.ideal_answer = r.ideal;
            entries.push_back(std::move(e));
        }
        runs.push_back(cmd.pipeline == "phase-a"
                           ? metrics::evaluate_phase_a(gold, entries, cfg.gmap_epsilon)
                           : metrics::evaluate_phase_b(gold, entries));
    }

    auto stats = metrics::variance_report(runs);
    std::cout << metrics::format_variance_table(stats);
    if (!cmd.output_path.empty()) {
        OrderedJson doc;
        doc["runs"] = OrderedJson::array();
        for (const auto& run : runs) {
            OrderedJson r = OrderedJson::object();
            for (const auto& [k, v] : run) r[k] = v;
            doc["runs"].push_back(std::move(r));
        }
        doc["variance"] = OrderedJson::object();
        for (const auto& [k, s] : stats)
            doc["variance"][k] = {{"mean", s.mean},
                                  {"stddev", s.stddev},
                                  {"min", s.min},
                                  {"max", s.max}};
        text::atomic_write_file(cmd.output_path, doc.dump(2) + "\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

inline int dispatch(const Command& cmd) {
    if (cmd.verb == "run-phase-a") return run_phase_a(cmd);
    if (cmd.verb == "run-phase-b") return run_phase_b(cmd);
    if (cmd.verb == "run-medprocner") return run_medprocner(cmd);
    if (cmd.verb == "evaluate") return evaluate(cmd);
    if (cmd.verb == "repeat") return repeat(cmd);
    throw ConfigError("unknown command \"" + cmd.verb + "\"");
}

/// Maps errors to exit codes: 0 ok, 2 configuration, 1 anything else.
inline int run(const Command& cmd) {
    try {
        return dispatch(cmd);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace bioqa::cli
