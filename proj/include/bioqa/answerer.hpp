#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/llm_gateway.hpp"
#include "bioqa/text.hpp"

namespace bioqa::answerer {

/// Gold snippet texts joined with newlines, in the given order. An empty list
/// yields empty text, which degrades the prompts to their ungrounded form.
inline std::string build_context(const std::vector<Snippet>& snippets) {
    std::string out;
    for (size_t i = 0; i < snippets.size(); ++i) {
        if (i) out += "\n";
        out += snippets[i].text;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prompts. All four share the same head: a space, the snippet context, two
// newlines, a literal backslash-space, then the quoted question.
// ---------------------------------------------------------------------------

namespace detail {
inline std::string prompt_head(const std::string& context, const std::string& body) {
    return " " + context + "\n\n\\ '" + body + "'. ";
}
} // namespace detail

inline std::string ideal_prompt(const std::string& body, const std::string& context) {
    return detail::prompt_head(context, body) +
           "Answer this question by returning a single paragraph-sized text ideally "
           "summarizing the most relevant information. The maximum allowed length of the "
           "answer is 200 words. The returned answer is intended to approximate a short text "
           "that a biomedical expert would write to answer the corresponding question (e.g., "
           "including prominent supportive information).";
}

inline std::string yesno_prompt(const std::string& body, const std::string& context) {
    return detail::prompt_head(context, body) +
           "You *must answer* only with lowercase 'yes' or 'no' even if you are not sure "
           "about the answer.";
}

inline std::string factoid_prompt(const std::string& body, const std::string& context) {
    return detail::prompt_head(context, body) +
           "Answer this question by returning only a JSON string array of entity names, "
           "numbers, or similar short expressions that are an answer to the question, ordered "
           "by decreasing confidence. The array should contain at max 5 elements but can "
           "contain less. If you don't know any answer return an empty list. Return only this "
           "list, it must not contain phrases and **must be valid JSON**.";
}

inline std::string list_prompt(const std::string& body, const std::string& context) {
    return detail::prompt_head(context, body) +
           "Answer this question by only returning a JSON string array of entity names, "
           "numbers, or similar short expressions that are an answer to the question (e.g., "
           "the most common symptoms of a disease). The returned list will have to contain no "
           "more than 100 entries of no more than 100 characters each. If you don't know any "
           "answer return an empty list. Return only this list, it must not contain phrases "
           "and **must be valid JSON**.";
}

// ---------------------------------------------------------------------------
// Completion parsing and normalization
// ---------------------------------------------------------------------------

/// Lowercases, strips punctuation at token boundaries, and scans tokens left
/// to right; the first token equal to "yes" or "no" decides. Idempotent.
inline Verdict normalize_yesno(const std::string& raw) {
    for (const auto& token : text::split_ws(text::lower_ascii(raw))) {
        size_t b = 0, e = token.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(token[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(token[e - 1]))) --e;
        std::string_view core(token.data() + b, e - b);
        if (core == "yes") return Verdict::yes;
        if (core == "no") return Verdict::no;
    }
    throw Unnormalizable("neither \"yes\" nor \"no\" found in: \"" + raw.substr(0, 120) + "\"");
}

namespace detail {

/// First balanced [ ... ] substring, honoring JSON string quoting.
inline std::optional<std::string> extract_first_array(const std::string& s) {
    auto start = s.find('[');
    if (start == std::string::npos) return std::nullopt;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < s.size(); ++i) {
        char c = s[i];
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[') ++depth;
        else if (c == ']') {
            --depth;
            if (depth == 0) return s.substr(start, i - start + 1);
        }
    }
    return std::nullopt;
}

inline std::vector<std::string> collect_strings(const Json& arr, bool coerce) {
    std::vector<std::string> out;
    for (const auto& el : arr) {
        std::string v;
        if (el.is_string()) v = el.get<std::string>();
        else if (coerce && (el.is_number() || el.is_boolean())) v = el.dump();
        else throw MalformedAnswer("non-scalar array element: " + el.dump());
        v = text::trim(v);
        if (!v.empty()) out.push_back(std::move(v));
    }
    return out;
}

} // namespace detail

/// Repair ladder, first success wins: (1) parse raw as a JSON string array;
/// (2) strip Markdown code fences and retry; (3) extract the first balanced
/// [ ... ] substring and retry; (4) coerce an array of scalars by
/// stringifying numbers. Entries are trimmed, empties dropped.
inline std::vector<std::string> parse_json_string_array(const std::string& raw) {
    std::vector<std::string> candidates{raw, text::strip_code_fences(raw)};
    if (auto ext = detail::extract_first_array(raw)) candidates.push_back(*ext);
    if (auto ext = detail::extract_first_array(candidates[1])) candidates.push_back(*ext);

    std::optional<Json> scalar_array;
    for (const auto& c : candidates) {
        Json doc = Json::parse(c, nullptr, false);
        if (doc.is_discarded() || !doc.is_array()) continue;
        bool all_strings = std::all_of(doc.begin(), doc.end(),
                                       [](const Json& el) { return el.is_string(); });
        if (all_strings) return detail::collect_strings(doc, /*coerce=*/false);
        if (!scalar_array) {
            bool all_scalars = std::all_of(doc.begin(), doc.end(), [](const Json& el) {
                return el.is_string() || el.is_number() || el.is_boolean();
            });
            if (all_scalars) scalar_array = doc;
        }
    }
    if (scalar_array) return detail::collect_strings(*scalar_array, /*coerce=*/true);
    throw MalformedAnswer("no JSON string array found in: \"" + raw.substr(0, 120) + "\"");
}

/// Case-insensitive dedup preserving first occurrences.
inline std::vector<std::string> dedupe_entries(const std::vector<std::string>& entries) {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& e : entries)
        if (seen.insert(text::lower_utf8(e)).second) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// Answer operations
// ---------------------------------------------------------------------------

namespace detail {
inline std::string complete_answer(llm::Gateway& gateway, const std::string& model_id,
                                   const std::string& user_prompt, std::string* fp_out) {
    auto ex = llm::make_exchange(model_id, llm::system_prompt(llm::Task::bioasq), user_prompt,
                                 llm::profile_for(llm::Step::answering));
    if (fp_out) *fp_out = llm::fingerprint(ex);
    return gateway.complete(ex);
}
} // namespace detail

/// Every question type gets an ideal answer; completions beyond 200 words are
/// truncated at the 200th word.
inline IdealAnswer answer_ideal(llm::Gateway& gateway, const Question& question,
                                const std::string& context, const std::string& model_id,
                                std::string* fp_out = nullptr) {
    std::string completion = text::trim(
        detail::complete_answer(gateway, model_id, ideal_prompt(question.body, context), fp_out));
    if (completion.empty()) throw EmptyCompletion("ideal answer was empty");
    return IdealAnswer::make(text::truncate_words(completion, kMaxIdealWords));
}

inline ExactAnswer answer_yesno(llm::Gateway& gateway, const Question& question,
                                const std::string& context, const std::string& model_id,
                                std::string* fp_out = nullptr) {
    if (question.type != QuestionType::yesno)
        throw SchemaError("answer_yesno requires a yesno question");
    std::string completion =
        detail::complete_answer(gateway, model_id, yesno_prompt(question.body, context), fp_out);
    return ExactAnswer::make_yesno(normalize_yesno(completion));
}

inline ExactAnswer answer_factoid(llm::Gateway& gateway, const Question& question,
                                  const std::string& context, const std::string& model_id,
                                  std::string* fp_out = nullptr) {
    if (question.type != QuestionType::factoid)
        throw SchemaError("answer_factoid requires a factoid question");
    std::string completion = detail::complete_answer(
        gateway, model_id, factoid_prompt(question.body, context), fp_out);
    auto entries = dedupe_entries(parse_json_string_array(completion));
    if (entries.size() > kMaxFactoidEntries) entries.resize(kMaxFactoidEntries);
    return ExactAnswer::make_factoid(std::move(entries));
}

inline ExactAnswer answer_list(llm::Gateway& gateway, const Question& question,
                               const std::string& context, const std::string& model_id,
                               std::string* fp_out = nullptr) {
    if (question.type != QuestionType::list)
        throw SchemaError("answer_list requires a list question");
    std::string completion =
        detail::complete_answer(gateway, model_id, list_prompt(question.body, context), fp_out);
    auto entries = dedupe_entries(parse_json_string_array(completion));
    if (entries.size() > kMaxListEntries) entries.resize(kMaxListEntries);
    for (auto& e : entries) {
        auto cps = text::decode_utf8(e);
        if (cps.size() > kMaxListEntryChars) {
            cps.resize(kMaxListEntryChars);
            e = text::encode_utf8(cps);
        }
    }
    return ExactAnswer::make_list(std::move(entries));
}

} // namespace bioqa::answerer
