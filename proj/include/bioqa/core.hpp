#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bioqa/errors.hpp"
#include "bioqa/text.hpp"

namespace bioqa {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class QuestionType { yesno, factoid, list, summary };

inline std::string to_string(QuestionType t) {
    switch (t) {
        case QuestionType::yesno: return "yesno";
        case QuestionType::factoid: return "factoid";
        case QuestionType::list: return "list";
        case QuestionType::summary: return "summary";
    }
    return "summary";
}

inline QuestionType question_type_from(const std::string& s) {
    if (s == "yesno") return QuestionType::yesno;
    if (s == "factoid") return QuestionType::factoid;
    if (s == "list") return QuestionType::list;
    if (s == "summary") return QuestionType::summary;
    throw SchemaError("unknown question type: \"" + s + "\"");
}

enum class Section { Title, Abstract };

struct Snippet {
    std::string document_id; // bare PMID
    std::string text;
    Section section = Section::Abstract;
    int64_t begin_offset = 0;
    int64_t end_offset = 0;
};

struct Question {
    std::string id;
    std::string body;
    QuestionType type = QuestionType::summary;
    std::optional<std::vector<std::string>> gold_documents; // bare PMIDs
    std::optional<std::vector<Snippet>> gold_snippets;
};

struct GenerationProfile {
    double temperature = 0.0;
    double frequency_penalty = 0.0;
    double presence_penalty = 0.0;

    bool operator==(const GenerationProfile&) const = default;
};

// ---------------------------------------------------------------------------
// Answers
// ---------------------------------------------------------------------------

enum class Verdict { yes, no };

inline std::string to_string(Verdict v) { return v == Verdict::yes ? "yes" : "no"; }

constexpr size_t kMaxFactoidEntries = 5;
constexpr size_t kMaxListEntries = 100;
constexpr size_t kMaxListEntryChars = 100;
constexpr size_t kMaxIdealWords = 200;

/// Type-tagged exact answer. Factories enforce the per-type size limits.
struct ExactAnswer {
    enum class Kind { yesno, factoid, list, summary };

    Kind kind = Kind::summary;
    Verdict verdict = Verdict::yes;     // meaningful iff kind == yesno
    std::vector<std::string> entries;   // meaningful iff kind == factoid | list

    static ExactAnswer make_yesno(Verdict v) {
        ExactAnswer a;
        a.kind = Kind::yesno;
        a.verdict = v;
        return a;
    }
    static ExactAnswer make_factoid(std::vector<std::string> entries) {
        ExactAnswer a;
        a.kind = Kind::factoid;
        a.entries = std::move(entries);
        if (!a.valid()) throw SchemaError("factoid answer exceeds 5 entries");
        return a;
    }
    static ExactAnswer make_list(std::vector<std::string> entries) {
        ExactAnswer a;
        a.kind = Kind::list;
        a.entries = std::move(entries);
        if (!a.valid()) throw SchemaError("list answer exceeds 100 entries / 100 chars per entry");
        return a;
    }
    static ExactAnswer make_summary() { return {}; }

    bool valid() const {
        switch (kind) {
            case Kind::yesno:
            case Kind::summary:
                return entries.empty();
            case Kind::factoid:
                return entries.size() <= kMaxFactoidEntries;
            case Kind::list:
                if (entries.size() > kMaxListEntries) return false;
                for (const auto& e : entries)
                    if (text::decode_utf8(e).size() > kMaxListEntryChars) return false;
                return true;
        }
        return false;
    }

    bool operator==(const ExactAnswer&) const = default;
};

struct IdealAnswer {
    std::string text;

    static IdealAnswer make(std::string t) {
        IdealAnswer a{std::move(t)};
        if (text::word_count(a.text) > kMaxIdealWords)
            throw SchemaError("ideal answer exceeds 200 words");
        return a;
    }
};

// ---------------------------------------------------------------------------
// PMID <-> PubMed URL
// ---------------------------------------------------------------------------

inline const std::string kPubMedUrlPrefix = "http://www.ncbi.nlm.nih.gov/pubmed/";

inline bool is_valid_pmid(std::string_view s) { return text::all_digits(s); }

inline std::string pmid_to_url(const std::string& pmid) {
    if (!is_valid_pmid(pmid)) throw SchemaError("invalid PMID: \"" + pmid + "\"");
    return kPubMedUrlPrefix + pmid;
}

/// Accepts the classic and https/modern PubMed URL forms as well as a bare PMID.
inline std::string url_to_pmid(const std::string& url) {
    static const std::string prefixes[] = {
        "http://www.ncbi.nlm.nih.gov/pubmed/",
        "https://www.ncbi.nlm.nih.gov/pubmed/",
        "http://pubmed.ncbi.nlm.nih.gov/",
        "https://pubmed.ncbi.nlm.nih.gov/",
    };
    std::string s = url;
    for (const auto& p : prefixes) {
        if (s.rfind(p, 0) == 0) {
            s = s.substr(p.size());
            break;
        }
    }
    while (!s.empty() && s.back() == '/') s.pop_back();
    if (!is_valid_pmid(s)) throw SchemaError("not a PubMed document URL: \"" + url + "\"");
    return s;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

struct RunConfig {
    std::string model_id = "gpt-4";
    std::string api_base_url = "https://api.openai.com/v1";
    std::string api_key_env_var = "OPENAI_API_KEY";
    std::string max_date = "2022-12-31"; // ISO date; PubMed publication-date cutoff
    int search_limit = 50;
    int output_limit = 10;
    bool expansion_enabled = true;
    bool grounded = true;
    std::string cache_dir; // empty disables response caching
    int retry_max = 5;
    int retry_base_delay_ms = 500;

    int workers = 4;
    double requests_per_second = 3.0;
    std::string pubmed_base_url = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils";
    std::string ncbi_api_key_env_var;

    // Backend selection: "http" talks to the live services, "replay" serves
    // recorded cassettes, "record" does both.
    std::string llm_backend = "http";
    std::string llm_cassette;
    std::string pubmed_backend = "http";
    std::string pubmed_cassette;

    double link_threshold = 0.25;
    int few_shot_count = 3;
    std::string gazetteer_code_column = "code";
    std::string gazetteer_term_column = "term";
    std::string gazetteer_tag_column = "semantic_tag";
    std::string procedure_tags = "procedure,procedimiento";

    double gmap_epsilon = 0.01;

    void validate() const {
        if (search_limit < 1) throw ConfigError("search_limit must be >= 1");
        if (output_limit < 1 || output_limit > search_limit)
            throw ConfigError("output_limit must be in [1, search_limit]");
        if (retry_max < 0) throw ConfigError("retry_max must be >= 0");
        if (retry_base_delay_ms < 0) throw ConfigError("retry_base_delay_ms must be >= 0");
        if (workers < 1) throw ConfigError("workers must be >= 1");
        if (requests_per_second <= 0) throw ConfigError("requests_per_second must be > 0");
        if (link_threshold < 0.0 || link_threshold > 1.0)
            throw ConfigError("link_threshold must be in [0, 1]");
        if (few_shot_count < 0) throw ConfigError("few_shot_count must be >= 0");
        if (gmap_epsilon <= 0.0) throw ConfigError("gmap_epsilon must be > 0");
        if (max_date.size() != 10 || max_date[4] != '-' || max_date[7] != '-' ||
            !text::all_digits(max_date.substr(0, 4)) || !text::all_digits(max_date.substr(5, 2)) ||
            !text::all_digits(max_date.substr(8, 2)))
            throw ConfigError("max_date must be YYYY-MM-DD, got \"" + max_date + "\"");
        for (const auto* b : {&llm_backend, &pubmed_backend})
            if (*b != "http" && *b != "replay" && *b != "record")
                throw ConfigError("backend must be http|replay|record, got \"" + *b + "\"");
    }
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
    std::string s = text::lower_ascii(v);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("bad boolean for " + key + ": \"" + v + "\"");
}

inline int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        int n = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return n;
    } catch (const std::exception&) {
        throw ConfigError("bad integer for " + key + ": \"" + v + "\"");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("bad number for " + key + ": \"" + v + "\"");
    }
}

inline std::string unquote(std::string v) {
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                          (v.front() == '\'' && v.back() == '\'')))
        return v.substr(1, v.size() - 2);
    return v;
}

} // namespace detail

/// Applies a single "key = value" assignment. Unknown keys are rejected.
inline void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& raw) {
    using namespace detail;
    const std::string value = unquote(raw);
    if (key == "model_id") cfg.model_id = value;
    else if (key == "api_base_url") cfg.api_base_url = value;
    else if (key == "api_key_env_var") cfg.api_key_env_var = value;
    else if (key == "max_date") cfg.max_date = value;
    else if (key == "search_limit") cfg.search_limit = parse_int(key, value);
    else if (key == "output_limit") cfg.output_limit = parse_int(key, value);
    else if (key == "expansion_enabled") cfg.expansion_enabled = parse_bool(key, value);
    else if (key == "grounded") cfg.grounded = parse_bool(key, value);
    else if (key == "cache_dir") cfg.cache_dir = value;
    else if (key == "retry_max") cfg.retry_max = parse_int(key, value);
    else if (key == "retry_base_delay_ms") cfg.retry_base_delay_ms = parse_int(key, value);
    else if (key == "workers") cfg.workers = parse_int(key, value);
    else if (key == "requests_per_second") cfg.requests_per_second = parse_double(key, value);
    else if (key == "pubmed_base_url") cfg.pubmed_base_url = value;
    else if (key == "ncbi_api_key_env_var") cfg.ncbi_api_key_env_var = value;
    else if (key == "llm_backend") cfg.llm_backend = value;
    else if (key == "llm_cassette") cfg.llm_cassette = value;
    else if (key == "pubmed_backend") cfg.pubmed_backend = value;
    else if (key == "pubmed_cassette") cfg.pubmed_cassette = value;
    else if (key == "link_threshold") cfg.link_threshold = parse_double(key, value);
    else if (key == "few_shot_count") cfg.few_shot_count = parse_int(key, value);
    else if (key == "gazetteer_code_column") cfg.gazetteer_code_column = value;
    else if (key == "gazetteer_term_column") cfg.gazetteer_term_column = value;
    else if (key == "gazetteer_tag_column") cfg.gazetteer_tag_column = value;
    else if (key == "procedure_tags") cfg.procedure_tags = value;
    else if (key == "gmap_epsilon") cfg.gmap_epsilon = parse_double(key, value);
    else throw ConfigError("unknown config key: \"" + key + "\"");
}

/// Flat "key = value" config file. '#' starts a comment line; blank lines ignored.
inline RunConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("config file not found: " + path.string());
    std::string content = text::read_file(path);
    RunConfig cfg;
    size_t lineno = 0;
    for (const auto& raw_line : text::split(content, '\n')) {
        ++lineno;
        std::string line = text::trim(raw_line);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        apply_config_entry(cfg, text::trim(line.substr(0, eq)), text::trim(line.substr(eq + 1)));
    }
    cfg.validate();
    return cfg;
}

/// CLI override of the form "key=value".
inline void apply_override(RunConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw ConfigError("override must be key=value, got \"" + assignment + "\"");
    apply_config_entry(cfg, text::trim(assignment.substr(0, eq)),
                       text::trim(assignment.substr(eq + 1)));
}

// ---------------------------------------------------------------------------
// Question / submission files
// ---------------------------------------------------------------------------

inline Snippet parse_snippet(const Json& j) {
    Snippet s;
    if (!j.contains("text") || !j["text"].is_string())
        throw SchemaError("snippet missing text");
    s.text = j["text"].get<std::string>();
    if (s.text.empty()) throw SchemaError("snippet text empty");
    if (j.contains("document")) s.document_id = url_to_pmid(j["document"].get<std::string>());
    std::string section = j.value("beginSection", "abstract");
    s.section = (section == "title") ? Section::Title : Section::Abstract;
    s.begin_offset = j.value("offsetInBeginSection", 0);
    s.end_offset = j.value("offsetInEndSection", 0);
    if (s.begin_offset > s.end_offset)
        throw SchemaError("snippet offsets out of order for document " + s.document_id);
    return s;
}

/// Loads a BioASQ-style questions file. Every element of the top-level
/// "questions" array yields exactly one Question or the whole load fails.
inline std::vector<Question> load_questions(const std::filesystem::path& path) {
    Json doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("not valid JSON: " + path.string());
    if (!doc.is_object() || !doc.contains("questions") || !doc["questions"].is_array())
        throw SchemaError("expected top-level \"questions\" array in " + path.string());

    std::vector<Question> out;
    out.reserve(doc["questions"].size());
    for (const auto& j : doc["questions"]) {
        Question q;
        if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
            throw SchemaError("question missing id");
        q.id = j["id"].get<std::string>();
        if (!j.contains("body") || !j["body"].is_string() || j["body"].get<std::string>().empty())
            throw SchemaError("question " + q.id + " missing body");
        q.body = j["body"].get<std::string>();
        if (!j.contains("type") || !j["type"].is_string())
            throw SchemaError("question " + q.id + " missing type");
        q.type = question_type_from(j["type"].get<std::string>());
        if (j.contains("documents")) {
            std::vector<std::string> docs;
            for (const auto& d : j["documents"]) docs.push_back(url_to_pmid(d.get<std::string>()));
            q.gold_documents = std::move(docs);
        }
        if (j.contains("snippets")) {
            std::vector<Snippet> snips;
            for (const auto& s : j["snippets"]) snips.push_back(parse_snippet(s));
            q.gold_snippets = std::move(snips);
        }
        out.push_back(std::move(q));
    }
    return out;
}

/// Per-question pipeline output destined for a submission file.
struct QuestionResult {
    std::optional<std::vector<std::string>> documents; // bare PMIDs, ranked
    std::optional<ExactAnswer> exact;
    std::optional<std::string> ideal;
    std::optional<std::string> error; // per-question failure note, not serialized
};

inline OrderedJson exact_answer_to_json(const ExactAnswer& a) {
    switch (a.kind) {
        case ExactAnswer::Kind::yesno:
            return OrderedJson(to_string(a.verdict));
        case ExactAnswer::Kind::factoid:
        case ExactAnswer::Kind::list: {
            OrderedJson arr = OrderedJson::array();
            for (const auto& e : a.entries) arr.push_back(OrderedJson::array({e}));
            return arr;
        }
        case ExactAnswer::Kind::summary:
            break;
    }
    return {};
}

/// Writes the BioASQ submission JSON: documents as full PubMed URLs,
/// exact_answer shaped per question type, stable key order.
inline void write_submission(const std::vector<Question>& questions,
                             const std::map<std::string, QuestionResult>& results,
                             const std::filesystem::path& path) {
    for (const auto& [id, r] : results) {
        bool known = std::any_of(questions.begin(), questions.end(),
                                 [&](const Question& q) { return q.id == id; });
        if (!known) throw UnknownQuestionId("result for unknown question id \"" + id + "\"");
    }
    OrderedJson out;
    out["questions"] = OrderedJson::array();
    for (const auto& q : questions) {
        OrderedJson jq;
        jq["id"] = q.id;
        jq["body"] = q.body;
        jq["type"] = to_string(q.type);
        auto it = results.find(q.id);
        if (it != results.end()) {
            const QuestionResult& r = it->second;
            if (r.documents) {
                OrderedJson docs = OrderedJson::array();
                for (const auto& pmid : *r.documents) docs.push_back(pmid_to_url(pmid));
                jq["documents"] = std::move(docs);
            }
            if (r.exact && r.exact->kind != ExactAnswer::Kind::summary)
                jq["exact_answer"] = exact_answer_to_json(*r.exact);
            if (r.ideal) jq["ideal_answer"] = *r.ideal;
        }
        out["questions"].push_back(std::move(jq));
    }
    text::atomic_write_file(path, out.dump(2) + "\n");
}

/// One parsed submission entry; exact_answer is kept as raw JSON so callers
/// can interpret it per question type.
struct SubmissionEntry {
    std::string id;
    std::vector<std::string> documents; // bare PMIDs
    std::optional<Json> exact_answer;
    std::optional<std::string> ideal_answer;
};

inline std::vector<SubmissionEntry> load_submission(const std::filesystem::path& path) {
    Json doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded()) throw SchemaError("not valid JSON: " + path.string());
    if (!doc.is_object() || !doc.contains("questions") || !doc["questions"].is_array())
        throw SchemaError("expected top-level \"questions\" array in " + path.string());
    std::vector<SubmissionEntry> out;
    for (const auto& j : doc["questions"]) {
        SubmissionEntry e;
        if (!j.contains("id") || !j["id"].is_string())
            throw SchemaError("submission entry missing id");
        e.id = j["id"].get<std::string>();
        if (j.contains("documents"))
            for (const auto& d : j["documents"]) e.documents.push_back(url_to_pmid(d.get<std::string>()));
        if (j.contains("exact_answer")) e.exact_answer = j["exact_answer"];
        if (j.contains("ideal_answer") && j["ideal_answer"].is_string())
            e.ideal_answer = j["ideal_answer"].get<std::string>();
        out.push_back(std::move(e));
    }
    return out;
}

} // namespace bioqa
