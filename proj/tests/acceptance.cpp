// Acceptance suite: end-to-end checks of the toolkit's contract, one
// pass/fail line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "bioqa/answerer.hpp"
#include "bioqa/cli.hpp"
#include "bioqa/medproc.hpp"
#include "bioqa/metrics.hpp"
#include "bioqa/retrieval.hpp"
#include "fixtures.hpp"
#include "support.hpp"

using namespace bioqa;

namespace {

struct Criterion {
    std::string label;
    std::function<void(std::vector<std::string>&)> body;
};

void expect(std::vector<std::string>& failures, bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
}

double now_seconds() {
    using namespace std::chrono;
    return duration<double>(steady_clock::now().time_since_epoch()).count();
}

// --------------------------------------------------------------------------
// 1. average_precision vs. brute-force oracle
// --------------------------------------------------------------------------

double ap_oracle(const std::vector<std::string>& retrieved, const std::set<std::string>& gold) {
    if (gold.empty()) return 0.0;
    double sum = 0.0;
    for (size_t r = 1; r <= retrieved.size(); ++r) {
        if (!gold.count(retrieved[r - 1])) continue;
        size_t hits = 0;
        for (size_t k = 0; k < r; ++k) hits += gold.count(retrieved[k]);
        sum += static_cast<double>(hits) / static_cast<double>(r);
    }
    return sum / static_cast<double>(std::min<size_t>(gold.size(), 10));
}

void criterion_ap_oracle(std::vector<std::string>& failures) {
    std::mt19937 rng(101);
    double started = now_seconds();
    for (int iter = 0; iter < 1000; ++iter) {
        std::vector<std::string> pool;
        for (int i = 0; i < 25; ++i) pool.push_back(std::to_string(i));
        std::shuffle(pool.begin(), pool.end(), rng);
        std::vector<std::string> retrieved(pool.begin(),
                                           pool.begin() + static_cast<long>(rng() % 11));
        std::set<std::string> gold;
        size_t gold_n = 1 + rng() % 5;
        while (gold.size() < gold_n) gold.insert(std::to_string(rng() % 25));

        double got = metrics::average_precision(retrieved, gold);
        double want = ap_oracle(retrieved, gold);
        if (std::abs(got - want) > 1e-12) {
            expect(failures, false,
                   "AP mismatch: got " + std::to_string(got) + " want " + std::to_string(want));
            return;
        }
    }
    double elapsed = now_seconds() - started;
    expect(failures, elapsed < 5.0,
           "oracle comparison took " + std::to_string(elapsed) + "s (limit 5s)");
}

// --------------------------------------------------------------------------
// 2. order invariants
// --------------------------------------------------------------------------

void criterion_order_invariants(std::vector<std::string>& failures) {
    std::mt19937 rng(202);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<std::pair<metrics::SynonymSets, std::vector<std::string>>> items;
        size_t n = 1 + rng() % 12;
        for (size_t i = 0; i < n; ++i) {
            metrics::SynonymSets gold{{std::to_string(rng() % 9)}};
            if (rng() % 3 == 0) gold.push_back({std::to_string(rng() % 9)});
            std::vector<std::string> pred;
            size_t m = rng() % 7;
            for (size_t k = 0; k < m; ++k) pred.push_back(std::to_string(rng() % 9));
            items.push_back({gold, pred});
        }
        auto e = metrics::factoid_eval(items);
        if (!(e.strict_acc <= e.mrr + 1e-12 && e.mrr <= e.lenient_acc + 1e-12)) {
            expect(failures, false, "strict <= mrr <= lenient violated at iteration " +
                                        std::to_string(iter));
            return;
        }
    }
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    for (int iter = 0; iter < 500; ++iter) {
        std::vector<double> aps;
        size_t n = 1 + rng() % 25;
        for (size_t i = 0; i < n; ++i) aps.push_back(rng() % 4 == 0 ? 0.0 : uniform(rng));
        auto [_, gmap] = metrics::map_gmap(aps, 0.01);
        double adjusted = 0;
        for (double ap : aps) adjusted += std::max(ap, 0.01);
        adjusted /= static_cast<double>(aps.size());
        if (gmap > adjusted + 1e-12) {
            expect(failures, false, "gmap exceeded epsilon-adjusted mean at iteration " +
                                        std::to_string(iter));
            return;
        }
    }
}

// --------------------------------------------------------------------------
// 3. gold echo
// --------------------------------------------------------------------------

void criterion_gold_echo(std::vector<std::string>& failures) {
    std::mt19937 rng(303);

    std::vector<std::pair<std::vector<std::string>, std::set<std::string>>> runs;
    for (int q = 0; q < 12; ++q) {
        std::vector<std::string> docs;
        size_t n = 1 + rng() % 8;
        for (size_t i = 0; i < n; ++i) docs.push_back(std::to_string(q * 100 + i));
        runs.push_back({docs, {docs.begin(), docs.end()}});
    }
    auto retr = metrics::retrieval_eval(runs, 0.01);
    expect(failures, retr.map == 1.0, "gold-echo MAP != 1.0");

    std::vector<std::pair<Verdict, Verdict>> pairs{{Verdict::yes, Verdict::yes},
                                                   {Verdict::no, Verdict::no},
                                                   {Verdict::yes, Verdict::yes}};
    expect(failures, metrics::yesno_eval(pairs).macro_f1 == 1.0, "gold-echo macro F1 != 1.0");

    std::vector<std::pair<metrics::SynonymSets, std::vector<std::string>>> factoid;
    std::vector<std::pair<metrics::SynonymSets, std::vector<std::string>>> list;
    for (int q = 0; q < 10; ++q) {
        metrics::SynonymSets sets;
        size_t n = 1 + rng() % 4;
        for (size_t i = 0; i < n; ++i)
            sets.push_back({"item " + std::to_string(q) + "-" + std::to_string(i)});
        std::vector<std::string> echo;
        for (const auto& s : sets) echo.push_back(s[0]);
        factoid.push_back({sets, {echo.front()}});
        list.push_back({sets, echo});
    }
    expect(failures, metrics::factoid_eval(factoid).mrr == 1.0, "gold-echo MRR != 1.0");
    expect(failures, metrics::list_eval(list).mean_f1 == 1.0, "gold-echo list mean-F != 1.0");

    std::vector<metrics::Span> spans;
    for (int i = 0; i < 8; ++i)
        spans.push_back({"doc" + std::to_string(i % 3), i * 10, i * 10 + 5, "C" + std::to_string(i)});
    expect(failures, metrics::span_micro_f1(spans, spans).f1 == 1.0,
           "gold-echo span micro-F1 != 1.0");
}

// --------------------------------------------------------------------------
// 4. hand-derived fixtures
// --------------------------------------------------------------------------

void criterion_hand_fixtures(std::vector<std::string>& failures) {
    using V = Verdict;
    auto y = metrics::yesno_eval(
        {{V::yes, V::yes}, {V::yes, V::no}, {V::no, V::no}, {V::no, V::no}});
    expect(failures, std::abs(y.accuracy - 0.75) <= 1e-4,
           "yesno accuracy " + std::to_string(y.accuracy) + " != 0.75");
    expect(failures, std::abs(y.macro_f1 - 0.7333) <= 1e-4,
           "yesno macro F1 " + std::to_string(y.macro_f1) + " != 0.7333");

    double ap = metrics::average_precision({"A", "C", "B"}, {"A", "B"});
    expect(failures, std::abs(ap - 0.8333) <= 1e-4,
           "AP([A,C,B],{A,B}) " + std::to_string(ap) + " != 0.8333");
}

// --------------------------------------------------------------------------
// 5. pipeline determinism
// --------------------------------------------------------------------------

void criterion_pipeline_determinism(std::vector<std::string>& failures) {
    testsup::TempDir tmp;
    double started = now_seconds();

    auto corpus_a = fixtures::make_phase_a_corpus(tmp / "a", 10);
    auto run_a = [&](const std::string& name) {
        cli::Command cmd;
        cmd.verb = "run-phase-a";
        cmd.config_path = corpus_a.config_file;
        cmd.input_path = corpus_a.questions_file;
        cmd.output_path = tmp / name;
        if (cli::run(cmd) != 0) return std::string("EXIT-NONZERO");
        return testsup::read_file(cmd.output_path) +
               testsup::read_file(cmd.output_path.string() + ".trace.jsonl") +
               testsup::read_file(cmd.output_path.string() + ".summary.json");
    };
    auto a1 = run_a("a1.json"), a2 = run_a("a2.json"), a3 = run_a("a3.json");
    expect(failures, a1 != "EXIT-NONZERO", "phase A run failed");
    expect(failures, a1 == a2 && a2 == a3, "phase A outputs not byte-identical across 3 runs");

    auto corpus_b = fixtures::make_phase_b_corpus(tmp / "b", /*grounded=*/true);
    auto run_b = [&](const std::string& name) {
        cli::Command cmd;
        cmd.verb = "run-phase-b";
        cmd.config_path = corpus_b.config_file;
        cmd.input_path = corpus_b.questions_file;
        cmd.output_path = tmp / name;
        if (cli::run(cmd) != 0) return std::string("EXIT-NONZERO");
        return testsup::read_file(cmd.output_path) +
               testsup::read_file(cmd.output_path.string() + ".log.jsonl") +
               testsup::read_file(cmd.output_path.string() + ".summary.json");
    };
    auto b1 = run_b("b1.json"), b2 = run_b("b2.json"), b3 = run_b("b3.json");
    expect(failures, b1 != "EXIT-NONZERO", "phase B run failed");
    expect(failures, b1 == b2 && b2 == b3, "phase B outputs not byte-identical across 3 runs");

    cli::Command rep;
    rep.verb = "repeat";
    rep.config_path = corpus_a.config_file;
    rep.input_path = corpus_a.questions_file;
    rep.output_path = tmp / "variance.json";
    rep.times = 5;
    rep.pipeline = "phase-a";
    expect(failures, cli::run(rep) == 0, "repeat --times 5 failed");
    auto report = Json::parse(testsup::read_file(tmp / "variance.json"), nullptr, false);
    expect(failures, !report.is_discarded() && report.contains("variance"),
           "variance report unreadable");
    if (report.contains("variance")) {
        for (const auto& [metric, stats] : report["variance"].items())
            expect(failures, stats["stddev"] == 0.0, "metric " + metric + " has nonzero stddev");
    }

    double elapsed = now_seconds() - started;
    expect(failures, elapsed < 5.0,
           "determinism suite took " + std::to_string(elapsed) + "s (limit 5s)");
}

// --------------------------------------------------------------------------
// 6. Phase A contract fuzzing
// --------------------------------------------------------------------------

std::string random_rerank_reply(std::mt19937& rng, int n) {
    std::string reply;
    int kind = static_cast<int>(rng() % 6);
    if (kind == 0) { // pure prose, no digits
        reply = "these articles are all equally irrelevant";
    } else if (kind == 1) { // canonical list
        int count = 1 + static_cast<int>(rng() % 10);
        for (int i = 0; i < count; ++i) {
            if (i) reply += ", ";
            reply += std::to_string(1 + rng() % static_cast<unsigned>(n));
        }
    } else if (kind == 2) { // duplicates and range errors
        int count = 1 + static_cast<int>(rng() % 15);
        for (int i = 0; i < count; ++i) {
            if (i) reply += ", ";
            reply += std::to_string(rng() % (static_cast<unsigned>(n) + 30));
        }
    } else if (kind == 3) { // prose wrapping
        reply = "The most relevant articles are " + std::to_string(1 + rng() % n) + " and " +
                std::to_string(1 + rng() % static_cast<unsigned>(n)) + ".";
    } else if (kind == 4) { // fenced
        reply = "```\n" + std::to_string(1 + rng() % static_cast<unsigned>(n)) + ", " +
                std::to_string(1 + rng() % static_cast<unsigned>(n)) + "\n```";
    } else { // whitespace garbage with occasional digits
        for (int i = 0; i < 20; ++i) reply += (rng() % 4 == 0) ? std::to_string(rng() % 99) : "x ";
    }
    return reply;
}

void criterion_phase_a_contract(std::vector<std::string>& failures) {
    std::mt19937 rng(606);
    const Question question{"fuzz", "Which gene?", QuestionType::factoid, {}, {}};
    RunConfig cfg;
    cfg.model_id = "test-model";
    cfg.retry_base_delay_ms = 1;

    for (int iter = 0; iter < 1000 && failures.empty(); ++iter) {
        int n = 1 + static_cast<int>(rng() % 50);
        bool first_search_empty = rng() % 4 == 0;
        std::string reply = random_rerank_reply(rng, n);

        auto llm_backend = std::make_shared<llm::ScriptedBackend>();
        auto fetcher = std::make_shared<pubmed::ReplayFetcher>();
        llm::GatewayOptions gw_opts;
        gw_opts.sleeper = [](std::chrono::milliseconds) {};
        llm::Gateway gateway(llm_backend, gw_opts);
        pubmed::ClientOptions po;
        po.requests_per_second = 1e9;
        po.sleeper = [](std::chrono::milliseconds) {};
        pubmed::PubMedClient client(fetcher, po);

        auto system = llm::system_prompt(llm::Task::bioasq);
        std::string query = "fuzz query " + std::to_string(iter);
        llm_backend->add(
            llm::make_exchange(cfg.model_id, system, retrieval::expansion_prompt(question.body),
                               llm::profile_for(llm::Step::expansion)),
            query);

        std::vector<std::string> hits;
        for (int k = 1; k <= n; ++k) hits.push_back(std::to_string(10000 + k));

        std::string effective_query = query;
        if (first_search_empty) {
            fetcher->add(client.esearch_path({query, cfg.max_date, cfg.search_limit}),
                         fixtures::esearch_body({}));
            effective_query = "broader " + query;
            llm_backend->add(llm::make_exchange(
                                 cfg.model_id, system,
                                 retrieval::reformulation_prompt(question.body, query),
                                 llm::profile_for(llm::Step::reformulation)),
                             effective_query);
        }
        fetcher->add(client.esearch_path({effective_query, cfg.max_date, cfg.search_limit}),
                     fixtures::esearch_body(hits));
        fetcher->add(client.efetch_path(hits), fixtures::article_set(hits));

        std::vector<std::string> titles;
        for (const auto& h : hits) titles.push_back("Title " + h);
        int nr = std::min(10, n);
        llm_backend->add(
            llm::make_exchange(cfg.model_id, system,
                               retrieval::rerank_prompt(titles, question.body, nr),
                               llm::profile_for(llm::Step::reranking)),
            reply);

        retrieval::RetrievalTrace trace;
        try {
            trace = retrieval::retrieve(question, cfg, gateway, client);
        } catch (const std::exception& e) {
            expect(failures, false,
                   "retrieve crashed on fuzz reply \"" + reply + "\": " + e.what());
            return;
        }

        expect(failures, trace.reformulated_query.has_value() == first_search_empty,
               "reformulation fired != (first search empty) at iteration " +
                   std::to_string(iter));
        expect(failures, trace.final_documents.size() <= 10, "more than 10 final documents");
        std::set<std::string> seen;
        std::set<std::string> raw(trace.raw_hits.begin(), trace.raw_hits.end());
        size_t cursor_check = 0;
        (void)cursor_check;
        for (const auto& d : trace.final_documents) {
            expect(failures, raw.count(d) == 1, "final document not among raw hits");
            expect(failures, seen.insert(d).second, "duplicate final document");
        }
        if (trace.rerank_fallback) {
            // fallback must be the relevance-order head
            std::vector<std::string> head(trace.raw_hits.begin(),
                                          trace.raw_hits.begin() +
                                              static_cast<long>(std::min<size_t>(
                                                  trace.raw_hits.size(), 10)));
            expect(failures, trace.final_documents == head,
                   "fallback is not the relevance head");
        }
        if (!failures.empty()) {
            failures.back() += " [reply: " + reply + "]";
            return;
        }
    }
}

// --------------------------------------------------------------------------
// 7. answer-format perturbation corpus
// --------------------------------------------------------------------------

std::vector<std::string> perturbation_corpus() {
    std::vector<std::string> corpus;
    // plain arrays
    corpus.push_back(R"(["HER2"])");
    corpus.push_back(R"(["HER2","ERBB2","p53"])");
    corpus.push_back(R"([])");
    corpus.push_back(R"([" padded ","x"])");
    corpus.push_back("[\"moño\",\"año\"]");
    // code fences
    corpus.push_back("```json\n[\"a\"]\n```");
    corpus.push_back("```\n[\"a\",\"b\"]\n```");
    corpus.push_back("```JSON\n[]\n```");
    corpus.push_back("```json\n[\"fence no close\"]");
    corpus.push_back("``` [\"inline fence\"] ```");
    // prefixed / suffixed prose
    corpus.push_back("Answer: [\"a\", \"b\"]");
    corpus.push_back("The answer is: [\"one\"]");
    corpus.push_back("Here you go [\"x\",\"y\"] hope that helps");
    corpus.push_back("Sure! [\"alpha\"]. Let me know.");
    corpus.push_back("respuesta => [\"uno\", \"dos\"]");
    corpus.push_back("1. [\"ranked\"]");
    corpus.push_back("> [\"quoted\"]");
    corpus.push_back("*[\"starred\"]*");
    // numeric entries
    corpus.push_back("[1, 2, 3]");
    corpus.push_back("[\"a\", 2]");
    corpus.push_back("[2.5, \"b\"]");
    corpus.push_back("[42]");
    corpus.push_back("Answer: [\"a\", 2, \"c\"]");
    // oversize lists / entries
    {
        Json arr = Json::array();
        for (int i = 0; i < 120; ++i) arr.push_back("entry " + std::to_string(i));
        corpus.push_back(arr.dump());
    }
    corpus.push_back(Json(std::vector<std::string>{std::string(150, 'z')}).dump());
    {
        Json arr = Json::array();
        for (int i = 0; i < 110; ++i) arr.push_back(std::string(120, 'q'));
        corpus.push_back(arr.dump());
    }
    // quoting and escapes
    corpus.push_back(R"(["it's", "a \"quoted\" name"])");
    corpus.push_back(R"(["bracket [x]", "y"])");
    corpus.push_back(R"(["comma, inside", "tab\tinside"])");
    corpus.push_back("'[\"single-quoted wrapper\"]'");
    // whitespace / newlines
    corpus.push_back("\n\n   [\"spaced\"]   \n");
    corpus.push_back("[\n  \"multi\",\n  \"line\"\n]");
    corpus.push_back("\t[\"tabbed\"]");
    // duplicates for dedup handling
    corpus.push_back(R"(["X","x","Y","y","X"])");
    corpus.push_back(R"(["same","same","same"])");
    // trailing rationale after the list
    corpus.push_back("[\"first\"] because the snippets say so");
    corpus.push_back("The list: [\"a\"],[\"ignored second\"]");
    corpus.push_back("Answer:\n```json\n[\"combo\"]\n```");
    // deliberately unparseable
    corpus.push_back("no list here");
    corpus.push_back("{\"answer\": \"x\"}");
    return corpus;
}

void criterion_answer_formats(std::vector<std::string>& failures) {
    auto corpus = perturbation_corpus();
    expect(failures, corpus.size() == 40,
           "corpus has " + std::to_string(corpus.size()) + " patterns, expected 40");

    int parsed = 0;
    const Question list_q{"l", "List the genes.", QuestionType::list, {}, {}};
    for (const auto& pattern : corpus) {
        bool ok_parse = false;
        try {
            answerer::parse_json_string_array(pattern);
            ok_parse = true;
        } catch (const MalformedAnswer&) {
        } catch (const std::exception& e) {
            expect(failures, false,
                   "unexpected exception on pattern \"" + pattern.substr(0, 40) +
                       "\": " + e.what());
            return;
        }
        if (!ok_parse) continue;
        ++parsed;

        // Feed the same completion through the full list-answer path and
        // check the produced answer's invariants.
        auto backend = std::make_shared<llm::ScriptedBackend>();
        llm::GatewayOptions o;
        o.sleeper = [](std::chrono::milliseconds) {};
        llm::Gateway gateway(backend, o);
        auto ex = llm::make_exchange("m", llm::system_prompt(llm::Task::bioasq),
                                     answerer::list_prompt(list_q.body, ""),
                                     llm::profile_for(llm::Step::answering));
        backend->add(ex, pattern);
        auto answer = answerer::answer_list(gateway, list_q, "", "m");
        expect(failures, answer.valid(),
               "invalid ExactAnswer from pattern \"" + pattern.substr(0, 40) + "\"");
        expect(failures, answer.entries.size() <= 100, "list exceeded 100 entries");
        for (const auto& e : answer.entries)
            expect(failures, text::decode_utf8(e).size() <= 100, "entry exceeded 100 chars");
    }
    expect(failures, parsed >= 38,
           "only " + std::to_string(parsed) + "/40 patterns parsed (need >= 38)");

    // yes/no normalization and idempotence over a fuzz corpus
    try {
        expect(failures, answerer::normalize_yesno("Yes.") == Verdict::yes,
               "\"Yes.\" did not normalize to yes");
    } catch (const std::exception& e) {
        expect(failures, false, std::string("normalize_yesno(\"Yes.\") threw: ") + e.what());
    }
    std::vector<std::string> yesno_fuzz{
        "Yes.", "yes", "YES!", "Yes, definitely.", "  yes  ", "no", "No.", "NO",
        "No, it does not.", "The answer is yes", "Possibly no", "yes.\n", "'yes'", "\"no\"",
    };
    for (const auto& raw : yesno_fuzz) {
        auto v = answerer::normalize_yesno(raw);
        expect(failures, answerer::normalize_yesno(to_string(v)) == v,
               "normalize_yesno not idempotent for \"" + raw + "\"");
    }
}

// --------------------------------------------------------------------------
// 8. Levenshtein properties
// --------------------------------------------------------------------------

size_t levenshtein_oracle(const std::string& a8, const std::string& b8) {
    auto a = text::decode_utf8(a8);
    auto b = text::decode_utf8(b8);
    std::vector<std::vector<size_t>> dp(a.size() + 1, std::vector<size_t>(b.size() + 1));
    for (size_t i = 0; i <= a.size(); ++i) dp[i][0] = i;
    for (size_t j = 0; j <= b.size(); ++j) dp[0][j] = j;
    for (size_t i = 1; i <= a.size(); ++i)
        for (size_t j = 1; j <= b.size(); ++j)
            dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1,
                                 dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
    return dp[a.size()][b.size()];
}

void criterion_levenshtein(std::vector<std::string>& failures) {
    expect(failures, medproc::levenshtein("kitten", "sitting") == 3,
           "levenshtein(kitten, sitting) != 3");
    expect(failures, levenshtein_oracle("kitten", "sitting") == 3, "DP oracle disagrees on 3");

    std::mt19937 rng(808);
    const std::vector<std::string> alphabet{"a", "b", "c", "d", "ñ", "á", "é", "z"};
    auto random_word = [&] {
        std::string s;
        size_t n = rng() % 9;
        for (size_t i = 0; i < n; ++i) s += alphabet[rng() % alphabet.size()];
        return s;
    };
    for (int iter = 0; iter < 1000; ++iter) {
        auto a = random_word(), b = random_word(), c = random_word();
        size_t ab = medproc::levenshtein(a, b);
        if (medproc::levenshtein(a, a) != 0) {
            expect(failures, false, "identity violated for \"" + a + "\"");
            return;
        }
        if (ab != medproc::levenshtein(b, a)) {
            expect(failures, false, "symmetry violated for \"" + a + "\", \"" + b + "\"");
            return;
        }
        if (medproc::levenshtein(a, c) > ab + medproc::levenshtein(b, c)) {
            expect(failures, false, "triangle inequality violated");
            return;
        }
        if (ab != levenshtein_oracle(a, b)) {
            expect(failures, false, "implementation disagrees with DP oracle");
            return;
        }
    }
}

// --------------------------------------------------------------------------
// 9. MedProcNER round trip
// --------------------------------------------------------------------------

void criterion_medproc_roundtrip(std::vector<std::string>& failures) {
    testsup::TempDir tmp;

    struct Doc {
        std::string name;
        std::string text;
        std::string completion;
    };
    std::vector<Doc> docs{
        {"d1.txt", "Se realizó una tomografía computarizada y una biopsia hepática.",
         R"(["tomografía computarizada", "biopsia hepática"])"},
        {"d2.txt", "Ecografía abdominal normal. Segunda ecografía abdominal de control.",
         R"(["ecografía abdominal"])"},
        {"d3.txt", "El señor acudió tras vacunación; se indicó radiografía de tórax.",
         R"(["vacunación", "radiografía de tórax"])"},
        {"d4.txt", "Paciente sin procedimientos relevantes en esta visita.", "[]"},
        {"d5.txt", "Colonoscopia urgente; COLONOSCOPIA repetida por mala preparación.",
         R"(["colonoscopia"])"},
    };

    testsup::write_file(tmp / "gaz.tsv",
                        "code\tterm\tsemantic_tag\n"
                        "C001\ttomografía computarizada\tPROCEDIMIENTO\n"
                        "C002\tbiopsia hepática\tPROCEDIMIENTO\n"
                        "C003\tecografía abdominal\tPROCEDIMIENTO\n"
                        "C004\tvacunación\tPROCEDIMIENTO\n"
                        "C005\tradiografía de tórax\tPROCEDIMIENTO\n"
                        "C006\tcolonoscopia\tPROCEDIMIENTO\n");
    testsup::write_file(tmp / "examples.json", R"([
        {"text":"Ejemplo con gastroscopia.","procedures":["gastroscopia"]},
        {"text":"Ejemplo sin nada.","procedures":[]},
        {"text":"Ejemplo con sutura.","procedures":["sutura"]}
    ])");
    std::filesystem::create_directories(tmp / "docs");
    std::vector<medproc::FewShotExample> examples{
        {"Ejemplo con gastroscopia.", {"gastroscopia"}},
        {"Ejemplo sin nada.", {}},
        {"Ejemplo con sutura.", {"sutura"}},
    };
    std::map<std::string, std::string> llm_entries;
    for (const auto& d : docs) {
        testsup::write_file(tmp / "docs" / d.name, d.text);
        llm::ChatExchange ex;
        ex.model_id = "test-model";
        ex.messages = medproc::build_ner_conversation(d.text, examples);
        ex.profile = llm::profile_for(llm::Step::answering);
        llm_entries[llm::fingerprint(ex)] = d.completion;
    }
    save_cassette(tmp / "llm_cassette.json", llm_entries);
    save_cassette(tmp / "pubmed_cassette.json", {});
    fixtures::write_config(tmp / "run.conf", tmp.path());

    cli::Command cmd;
    cmd.verb = "run-medprocner";
    cmd.config_path = tmp / "run.conf";
    cmd.input_path = tmp / "docs";
    cmd.output_path = tmp / "out";
    cmd.gazetteer_path = tmp / "gaz.tsv";
    cmd.examples_path = tmp / "examples.json";
    expect(failures, cli::run(cmd) == 0, "run-medprocner failed");
    if (!failures.empty()) return;

    auto mentions = medproc::read_span_tsv(tmp / "out" / "ner.tsv");
    expect(failures, mentions.size() == 8,
           "expected 8 mentions across 5 documents, got " + std::to_string(mentions.size()));
    size_t exact = 0;
    for (const auto& m : mentions) {
        auto doc_it = std::find_if(docs.begin(), docs.end(),
                                   [&](const Doc& d) { return d.name == m.document_id; });
        if (doc_it == docs.end()) {
            expect(failures, false, "mention references unknown document " + m.document_id);
            return;
        }
        auto cps = text::decode_utf8(doc_it->text);
        if (m.end <= cps.size() &&
            text::encode_utf8(cps.substr(m.start, m.end - m.start)) == m.text)
            ++exact;
    }
    expect(failures, exact == mentions.size(),
           std::to_string(exact) + "/" + std::to_string(mentions.size()) +
               " mention slices matched their text");

    // indexing output: sorted, duplicate-free per document
    auto index_lines = text::split(testsup::read_file(tmp / "out" / "index.tsv"), '\n');
    std::map<std::string, std::vector<std::string>> codes_by_doc;
    for (size_t i = 1; i < index_lines.size(); ++i) {
        if (text::trim(index_lines[i]).empty()) continue;
        auto fields = text::split(index_lines[i], '\t');
        codes_by_doc[fields[0]].push_back(fields[1]);
    }
    for (const auto& [doc, codes] : codes_by_doc) {
        expect(failures, std::is_sorted(codes.begin(), codes.end()),
               "codes not sorted for " + doc);
        expect(failures,
               std::adjacent_find(codes.begin(), codes.end()) == codes.end(),
               "duplicate codes for " + doc);
    }
    expect(failures, codes_by_doc["d2.txt"] == std::vector<std::string>{"C003"},
           "d2 should index exactly C003");
    expect(failures, codes_by_doc.count("d4.txt") == 0, "d4 should have no index entries");
}

} // namespace

int main() {
    std::vector<Criterion> criteria{
        {"1. average_precision matches the brute-force oracle (1000 cases, 1e-12, <5s)",
         criterion_ap_oracle},
        {"2. order invariants: strict<=mrr<=lenient and gmap<=mean(eps-adjusted AP) (500+500)",
         criterion_order_invariants},
        {"3. gold-echo scores are exactly 1.0 in every metric family", criterion_gold_echo},
        {"4. hand-derived fixtures: yesno 0.75/0.7333, AP 0.8333 (1e-4)",
         criterion_hand_fixtures},
        {"5. scripted pipelines are byte-deterministic; repeat x5 has zero stddev (<5s)",
         criterion_pipeline_determinism},
        {"6. phase A contracts hold under 1000-case rerank fuzzing", criterion_phase_a_contract},
        {"7. answer-format suite: >=38/40 patterns parse, invariants hold, yes/no idempotent",
         criterion_answer_formats},
        {"8. Levenshtein identity/symmetry/triangle on 1000 triples; kitten-sitting = 3",
         criterion_levenshtein},
        {"9. MedProcNER round trip: slices equal text, index sorted and duplicate-free",
         criterion_medproc_roundtrip},
    };

    int failed = 0;
    for (auto& criterion : criteria) {
        std::vector<std::string> failures;
        try {
            criterion.body(failures);
        } catch (const std::exception& e) {
            failures.push_back(std::string("unhandled exception: ") + e.what());
        }
        if (failures.empty()) {
            std::cout << "[PASS] " << criterion.label << "\n";
        } else {
            ++failed;
            std::cout << "[FAIL] " << criterion.label << "\n";
            for (const auto& f : failures) std::cout << "       - " << f << "\n";
        }
    }
    if (failed) std::cout << failed << " criterion(s) failed\n";
    return failed == 0 ? 0 : 1;
}
