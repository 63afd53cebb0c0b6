#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "bioqa/answerer.hpp"
#include "bioqa/cassette.hpp"
#include "bioqa/cli.hpp"
#include "bioqa/retrieval.hpp"
#include "support.hpp"

// Deterministic end-to-end corpora: a questions file, a scripted LLM
// cassette, and a recorded PubMed cassette wired together through a config
// file, so the CLI verbs can run hermetically.

namespace fixtures {

using namespace bioqa;

struct Corpus {
    std::filesystem::path dir;
    std::filesystem::path config_file;
    std::filesystem::path questions_file;
    std::vector<Question> questions;
    std::map<std::string, std::vector<std::string>> expected_documents; // per question id
};

inline std::string esearch_body(const std::vector<std::string>& ids) {
    Json res;
    res["esearchresult"]["count"] = std::to_string(ids.size());
    res["esearchresult"]["idlist"] = ids;
    return res.dump();
}

inline std::string article_set(const std::vector<std::string>& ids) {
    std::string xml = "<?xml version=\"1.0\" ?>\n<PubmedArticleSet>";
    for (const auto& id : ids)
        xml += "<PubmedArticle><MedlineCitation><PMID>" + id +
               "</PMID><Article><ArticleTitle>Title " + id +
               "</ArticleTitle></Article></MedlineCitation></PubmedArticle>";
    xml += "</PubmedArticleSet>";
    return xml;
}

inline void write_config(const std::filesystem::path& path, const std::filesystem::path& dir,
                         const std::string& extra = "") {
    testsup::write_file(path,
                        "model_id = test-model\n"
                        "max_date = 2022-12-31\n"
                        "search_limit = 50\n"
                        "output_limit = 10\n"
                        "retry_base_delay_ms = 1\n"
                        "workers = 4\n"
                        "llm_backend = replay\n"
                        "llm_cassette = " + (dir / "llm_cassette.json").string() + "\n" +
                        "pubmed_backend = replay\n"
                        "pubmed_cassette = " + (dir / "pubmed_cassette.json").string() + "\n" +
                        extra);
}

inline std::string script_key(const std::string& model_id, const llm::ChatMessage& system,
                              const std::string& user, const GenerationProfile& profile) {
    return llm::fingerprint(llm::make_exchange(model_id, system, user, profile));
}

/// Phase A corpus: n questions, each with an expansion completion, one
/// esearch/efetch round, and a rerank reply of "3, 1, 2" over 12 hits.
/// When sabotage_id is nonempty that question's rerank entry is omitted so
/// the run exercises failure isolation.
inline Corpus make_phase_a_corpus(const std::filesystem::path& dir, int n_questions = 10,
                                  const std::string& sabotage_id = "") {
    Corpus corpus;
    corpus.dir = dir;
    std::filesystem::create_directories(dir);

    RunConfig cfg; // defaults for query/limit parameters used by path building
    cfg.model_id = "test-model";
    pubmed::PubMedClient path_builder(std::make_shared<pubmed::ReplayFetcher>());

    std::map<std::string, std::string> llm_entries;
    std::map<std::string, std::string> pubmed_entries;
    Json questions = Json::array();

    auto system = llm::system_prompt(llm::Task::bioasq);
    for (int i = 1; i <= n_questions; ++i) {
        Question q;
        q.id = "q" + std::to_string(i);
        q.body = "What does gene G" + std::to_string(i) + " regulate?";
        q.type = QuestionType::factoid;

        std::string query = "expanded query " + std::to_string(i);
        llm_entries[script_key(cfg.model_id, system, retrieval::expansion_prompt(q.body),
                               llm::profile_for(llm::Step::expansion))] = query;

        std::vector<std::string> hits;
        for (int k = 1; k <= 12; ++k) hits.push_back(std::to_string(i * 1000 + k));
        pubmed_entries[path_builder.esearch_path({query, cfg.max_date, cfg.search_limit})] =
            esearch_body(hits);
        pubmed_entries[path_builder.efetch_path(hits)] = article_set(hits);

        std::vector<std::string> titles;
        for (const auto& h : hits) titles.push_back("Title " + h);
        if (q.id != sabotage_id) {
            llm_entries[script_key(cfg.model_id, system,
                                   retrieval::rerank_prompt(titles, q.body, 10),
                                   llm::profile_for(llm::Step::reranking))] = "3, 1, 2";
        }
        std::vector<std::string> final_docs{hits[2], hits[0], hits[1]};
        corpus.expected_documents[q.id] = final_docs;

        Json jq;
        jq["id"] = q.id;
        jq["body"] = q.body;
        jq["type"] = "factoid";
        Json docs = Json::array();
        for (const auto& d : final_docs) docs.push_back(pmid_to_url(d));
        jq["documents"] = docs; // gold = the scripted outcome, so MAP is 1.0
        questions.push_back(jq);
        corpus.questions.push_back(q);
    }

    save_cassette(dir / "llm_cassette.json", llm_entries);
    save_cassette(dir / "pubmed_cassette.json", pubmed_entries);
    corpus.questions_file = dir / "questions.json";
    testsup::write_file(corpus.questions_file, Json({{"questions", questions}}).dump(2));
    corpus.config_file = dir / "run.conf";
    write_config(corpus.config_file, dir);
    return corpus;
}

/// Phase B corpus: ten questions mixing all four types, with gold snippets
/// and gold exact answers; completions are scripted for the requested
/// grounding mode.
inline Corpus make_phase_b_corpus(const std::filesystem::path& dir, bool grounded) {
    Corpus corpus;
    corpus.dir = dir;
    std::filesystem::create_directories(dir);

    const std::string model = "test-model";
    auto system = llm::system_prompt(llm::Task::bioasq);
    auto answering = llm::profile_for(llm::Step::answering);

    std::map<std::string, std::string> llm_entries;
    Json questions = Json::array();

    struct Spec {
        std::string id;
        QuestionType type;
        std::string completion; // for the exact-answer prompt
        Json gold_exact;
    };
    std::vector<Spec> specs{
        {"y1", QuestionType::yesno, "yes", Json("yes")},
        {"y2", QuestionType::yesno, "No, it does not.", Json("no")},
        {"y3", QuestionType::yesno, "Yes.", Json("yes")},
        {"f1", QuestionType::factoid, R"(["HER2","ERBB2"])", Json::parse(R"(["HER2"])")},
        {"f2", QuestionType::factoid, R"(["p53"])", Json::parse(R"(["p53","TP53"])")},
        {"f3", QuestionType::factoid, "```json\n[\"BRCA1\"]\n```", Json::parse(R"(["BRCA1"])")},
        {"l1", QuestionType::list, R"(["a","b","c"])", Json::parse(R"([["a"],["b"],["c"]])")},
        {"l2", QuestionType::list, R"(["x","y"])", Json::parse(R"([["x"],["y"]])")},
        {"s1", QuestionType::summary, "", Json()},
        {"s2", QuestionType::summary, "", Json()},
    };

    for (const auto& spec : specs) {
        Question q;
        q.id = spec.id;
        q.body = "Question body for " + spec.id + "?";
        q.type = spec.type;

        std::string snippet_text = "Gold snippet for " + spec.id + ".";
        std::string snippet_text2 = "Second snippet for " + spec.id + ".";
        std::string context = grounded ? snippet_text + "\n" + snippet_text2 : "";

        std::string ideal = "Ideal answer for " + spec.id + ".";
        llm_entries[script_key(model, system, answerer::ideal_prompt(q.body, context),
                               answering)] = ideal;
        switch (spec.type) {
            case QuestionType::yesno:
                llm_entries[script_key(model, system, answerer::yesno_prompt(q.body, context),
                                       answering)] = spec.completion;
                break;
            case QuestionType::factoid:
                llm_entries[script_key(model, system,
                                       answerer::factoid_prompt(q.body, context), answering)] =
                    spec.completion;
                break;
            case QuestionType::list:
                llm_entries[script_key(model, system, answerer::list_prompt(q.body, context),
                                       answering)] = spec.completion;
                break;
            case QuestionType::summary:
                break;
        }

        Json jq;
        jq["id"] = q.id;
        jq["body"] = q.body;
        jq["type"] = to_string(spec.type);
        jq["snippets"] = Json::array(
            {{{"document", "http://www.ncbi.nlm.nih.gov/pubmed/1"},
              {"text", snippet_text},
              {"beginSection", "abstract"},
              {"offsetInBeginSection", 0},
              {"offsetInEndSection", 10}},
             {{"document", "http://www.ncbi.nlm.nih.gov/pubmed/2"},
              {"text", snippet_text2},
              {"beginSection", "abstract"},
              {"offsetInBeginSection", 0},
              {"offsetInEndSection", 10}}});
        if (!spec.gold_exact.is_null()) jq["exact_answer"] = spec.gold_exact;
        jq["ideal_answer"] = "Reference ideal answer.";
        questions.push_back(jq);
        corpus.questions.push_back(q);
    }

    save_cassette(dir / "llm_cassette.json", llm_entries);
    save_cassette(dir / "pubmed_cassette.json", {}); // unused by phase B
    corpus.questions_file = dir / "questions.json";
    testsup::write_file(corpus.questions_file, Json({{"questions", questions}}).dump(2));
    corpus.config_file = dir / "run.conf";
    write_config(corpus.config_file, dir,
                 std::string("grounded = ") + (grounded ? "true" : "false") + "\n");
    return corpus;
}

} // namespace fixtures
