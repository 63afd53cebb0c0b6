#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/llm_gateway.hpp"
#include "bioqa/pubmed_client.hpp"
#include "bioqa/text.hpp"

namespace bioqa::retrieval {

/// Everything one question's document-retrieval run produced, including the
/// intermediate artifacts needed to audit it.
struct RetrievalTrace {
    std::string question_id;
    std::string mode;                              // "expanded" | "simple"
    std::optional<std::string> expanded_query;     // absent in simple mode
    std::optional<std::string> reformulated_query; // present iff first search was empty
    std::vector<std::string> raw_hits;             // relevance-ordered, <= search_limit
    std::vector<std::string> missing_articles;     // hits efetch did not return
    std::string rerank_reply;
    bool rerank_fallback = false;                  // malformed reply -> relevance order
    std::vector<int> dropped_indices;              // out-of-range or duplicate reply indices
    std::vector<std::string> final_documents;      // <= 10
    std::map<std::string, std::string> prompt_fingerprints; // stage -> request fingerprint

    OrderedJson to_json() const {
        OrderedJson j;
        j["question_id"] = question_id;
        j["mode"] = mode;
        if (expanded_query) j["expanded_query"] = *expanded_query;
        if (reformulated_query) j["reformulated_query"] = *reformulated_query;
        j["raw_hits"] = raw_hits;
        if (!missing_articles.empty()) j["missing_articles"] = missing_articles;
        j["rerank_reply"] = rerank_reply;
        j["rerank_fallback"] = rerank_fallback;
        j["dropped_indices"] = dropped_indices;
        j["final_documents"] = final_documents;
        OrderedJson fps = OrderedJson::object();
        for (const auto& [stage, fp] : prompt_fingerprints) fps[stage] = fp;
        j["prompt_fingerprints"] = fps;
        return j;
    }
};

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

inline std::string expansion_prompt(const std::string& question) {
    return "Expand this search query:\n'" + question +
           "' for PubMed by incorporating synonyms and additional terms that closely relate "
           "to the main topic and help reduce ambiguity. Assume that phrases are not stemmed; "
           "therefore, generate useful variations. Return only the query that can directly be "
           "used without any explanation text. Focus on maintaining the query's precision and "
           "relevance to the original question.";
}

inline std::string reformulation_prompt(const std::string& question,
                                        const std::string& original_query) {
    return "Given that the following search query for PubMed has returned\nno documents, "
           "please generate a broader query that retains the original question's context and "
           "relevance. Assume that phrases are not stemmed; therefore, generate useful "
           "variations. Return only the query that can directly be used without any "
           "explanation text. Focus on maintaining the query's precision and relevance to the "
           "original question. Original question: '" +
           question + "', Original query: '" + original_query + "'.";
}

/// "1. title" lines, 1-based, newline-joined.
inline std::string enumerate_titles(const std::vector<std::string>& titles) {
    std::string out;
    for (size_t i = 0; i < titles.size(); ++i) {
        if (i) out += "\n";
        out += std::to_string(i + 1) + ". " + titles[i];
    }
    return out;
}

inline std::string rerank_prompt(const std::vector<std::string>& titles,
                                 const std::string& question, int nr_of_articles) {
    return enumerate_titles(titles) + " \n\n Given these articles and the question: '" +
           question +
           "'. Rerank the articles based on their relevance to the question and return the "
           "top " +
           std::to_string(nr_of_articles) +
           " most relevant articles as a comma separated list of their index ids. Don't "
           "explain your answer, return only this list, for example: '1, 2, 3, 4' ";
}

// ---------------------------------------------------------------------------
// Completion cleanup and reply parsing
// ---------------------------------------------------------------------------

/// Trims whitespace, removes surrounding code fences and enclosing quotes.
inline std::string strip_completion(const std::string& raw) {
    std::string s = text::strip_code_fences(raw);
    while (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
        s = text::trim(s.substr(1, s.size() - 2));
    }
    return s;
}

/// Parses a comma-separated index list ("1, 2, 3, 4"). Indices outside [1, n]
/// and duplicates are dropped (first occurrence kept, drops recorded when
/// requested); the result is capped at min(cap, n). Raises MalformedReply when
/// no integer can be parsed at all.
inline std::vector<int> parse_rerank_reply(const std::string& reply, int n,
                                           std::vector<int>* dropped = nullptr, int cap = 10) {
    if (n < 1) throw SchemaError("parse_rerank_reply requires n >= 1");
    std::vector<int> kept;
    std::vector<char> seen(static_cast<size_t>(n) + 1, 0);
    bool any_integer = false;
    size_t i = 0;
    while (i < reply.size()) {
        if (std::isdigit(static_cast<unsigned char>(reply[i]))) {
            size_t j = i;
            long value = 0;
            bool overflow = false;
            while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) {
                value = value * 10 + (reply[j] - '0');
                if (value > 1'000'000) overflow = true;
                ++j;
            }
            any_integer = true;
            int idx = overflow ? n + 1 : static_cast<int>(value);
            if (idx >= 1 && idx <= n && !seen[static_cast<size_t>(idx)]) {
                seen[static_cast<size_t>(idx)] = 1;
                kept.push_back(idx);
            } else if (dropped) {
                dropped->push_back(overflow ? -1 : idx);
            }
            i = j;
        } else {
            ++i;
        }
    }
    if (!any_integer) throw MalformedReply("no index list in rerank reply: \"" +
                                           reply.substr(0, 120) + "\"");
    size_t limit = static_cast<size_t>(std::min(cap, n));
    if (kept.size() > limit) kept.resize(limit);
    return kept;
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline std::string expand_query(llm::Gateway& gateway, const Question& question,
                                const std::string& model_id,
                                std::string* fingerprint_out = nullptr) {
    if (question.body.empty()) throw SchemaError("question body must be nonempty");
    auto ex = llm::make_exchange(model_id, llm::system_prompt(llm::Task::bioasq),
                                 expansion_prompt(question.body),
                                 llm::profile_for(llm::Step::expansion));
    if (fingerprint_out) *fingerprint_out = llm::fingerprint(ex);
    std::string query = strip_completion(gateway.complete(ex));
    if (query.empty()) throw EmptyCompletion("query expansion returned empty text");
    return query;
}

/// Invoked at most once per question and only after a zero-hit search;
/// callers pass the hit count they observed for the original query.
inline std::string reformulate_query(llm::Gateway& gateway, const Question& question,
                                     const std::string& original_query,
                                     const std::string& model_id, size_t original_hit_count = 0,
                                     std::string* fingerprint_out = nullptr) {
    if (original_hit_count != 0)
        throw SchemaError("reformulation requires a zero-hit original query");
    auto ex = llm::make_exchange(model_id, llm::system_prompt(llm::Task::bioasq),
                                 reformulation_prompt(question.body, original_query),
                                 llm::profile_for(llm::Step::reformulation));
    if (fingerprint_out) *fingerprint_out = llm::fingerprint(ex);
    std::string query = strip_completion(gateway.complete(ex));
    if (query.empty()) throw EmptyCompletion("query reformulation returned empty text");
    return query;
}

/// Full Phase A pipeline for one question: (expand ->) search -> optional
/// one-shot reformulation -> title rerank -> index-to-PMID mapping. Zero hits
/// end with empty final_documents rather than an error.
inline RetrievalTrace retrieve(const Question& question, const RunConfig& config,
                               llm::Gateway& gateway, pubmed::PubMedClient& client) {
    RetrievalTrace trace;
    trace.question_id = question.id;
    trace.mode = config.expansion_enabled ? "expanded" : "simple";

    std::string query;
    if (config.expansion_enabled) {
        std::string fp;
        query = expand_query(gateway, question, config.model_id, &fp);
        trace.expanded_query = query;
        trace.prompt_fingerprints["expansion"] = fp;
    } else {
        query = question.body;
    }

    pubmed::SearchRequest request{query, config.max_date, config.search_limit};
    auto hits = client.search(request);

    if (hits.empty() && config.expansion_enabled) {
        std::string fp;
        std::string broader =
            reformulate_query(gateway, question, query, config.model_id, hits.size(), &fp);
        trace.reformulated_query = broader;
        trace.prompt_fingerprints["reformulation"] = fp;
        hits = client.search({broader, config.max_date, config.search_limit});
    }

    trace.raw_hits = hits;
    if (hits.empty()) return trace; // empty result, not an error

    auto fetched = client.fetch_articles(hits);
    trace.missing_articles = fetched.missing_pmids;
    if (fetched.articles.empty()) return trace;

    const int n = static_cast<int>(fetched.articles.size());
    const int cap = std::min(config.output_limit, 10);
    const int nr_of_articles = std::min(cap, n);

    std::vector<std::string> titles;
    titles.reserve(fetched.articles.size());
    for (const auto& a : fetched.articles) titles.push_back(a.title);

    auto ex = llm::make_exchange(config.model_id, llm::system_prompt(llm::Task::bioasq),
                                 rerank_prompt(titles, question.body, nr_of_articles),
                                 llm::profile_for(llm::Step::reranking));
    trace.prompt_fingerprints["reranking"] = llm::fingerprint(ex);
    trace.rerank_reply = gateway.complete(ex);

    std::vector<int> indices;
    try {
        indices = parse_rerank_reply(trace.rerank_reply, n, &trace.dropped_indices, cap);
    } catch (const MalformedReply&) {
        // Degrade to PubMed's relevance head rather than failing the question.
        trace.rerank_fallback = true;
        for (int i = 1; i <= nr_of_articles; ++i) indices.push_back(i);
    }

    for (int idx : indices)
        trace.final_documents.push_back(fetched.articles[static_cast<size_t>(idx) - 1].pmid);
    return trace;
}

} // namespace bioqa::retrieval
