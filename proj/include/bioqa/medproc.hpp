#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bioqa/answerer.hpp"
#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/llm_gateway.hpp"
#include "bioqa/text.hpp"

namespace bioqa::medproc {

// ---------------------------------------------------------------------------
// Spanish Snowball stemmer (operates on lowercase codepoints)
// ---------------------------------------------------------------------------

namespace snowball {

inline bool is_vowel(char32_t c) {
    switch (c) {
        case U'a': case U'e': case U'i': case U'o': case U'u':
        case U'á': case U'é': case U'í': case U'ó':
        case U'ú': case U'ü':
            return true;
        default:
            return false;
    }
}

/// Index just past the first codepoint at or after `from` whose vowel-ness
/// matches `want_vowel`; word length when there is none.
inline size_t after_first(const std::u32string& w, size_t from, bool want_vowel) {
    for (size_t i = from; i < w.size(); ++i)
        if (is_vowel(w[i]) == want_vowel) return i + 1;
    return w.size();
}

struct Regions {
    size_t rv, r1, r2;
};

inline Regions mark_regions(const std::u32string& w) {
    const size_t n = w.size();
    Regions r{n, n, n};
    if (n >= 3) {
        if (!is_vowel(w[0])) {
            r.rv = is_vowel(w[1]) ? 3 : after_first(w, 2, true);
        } else {
            r.rv = is_vowel(w[1]) ? after_first(w, 2, false) : after_first(w, 2, true);
        }
    }
    r.r1 = after_first(w, after_first(w, 0, true), false);
    r.r2 = after_first(w, after_first(w, r.r1, true), false);
    return r;
}

struct SuffixRule {
    const char32_t* suffix;
    int action;
};

/// Longest table entry that is a suffix of w ending at w.size(), whose start
/// is >= limit. Returns (start index, action) or action 0.
inline std::pair<size_t, int> longest_suffix(const std::u32string& w,
                                             const std::vector<SuffixRule>& table,
                                             size_t limit = 0) {
    size_t best_len = 0;
    int action = 0;
    for (const auto& rule : table) {
        std::u32string_view s(rule.suffix);
        if (s.size() <= best_len || s.size() > w.size()) continue;
        if (w.size() - s.size() < limit) continue;
        if (std::u32string_view(w).substr(w.size() - s.size()) == s) {
            best_len = s.size();
            action = rule.action;
        }
    }
    return {w.size() - best_len, action};
}

inline bool ends_with(const std::u32string& w, std::u32string_view s) {
    return w.size() >= s.size() && std::u32string_view(w).substr(w.size() - s.size()) == s;
}

// Step 0: attached pronouns (me/se/la/le/lo/... after gerund/infinitive).
inline void attached_pronoun(std::u32string& w, const Regions& reg) {
    static const std::vector<SuffixRule> pronouns{
        {U"selas", 1}, {U"selos", 1}, {U"sela", 1}, {U"selo", 1}, {U"las", 1}, {U"les", 1},
        {U"los", 1},   {U"nos", 1},   {U"la", 1},   {U"le", 1},   {U"lo", 1},  {U"me", 1},
        {U"se", 1},
    };
    static const std::vector<SuffixRule> endings{
        {U"iéndo", 1}, {U"ándo", 2}, {U"ár", 3}, {U"ér", 4},
        {U"ír", 5},    {U"ando", 6},      {U"iendo", 6},   {U"ar", 6},
        {U"er", 6},         {U"ir", 6},        {U"yendo", 7},
    };
    auto [pstart, paction] = longest_suffix(w, pronouns);
    if (paction == 0) return;
    std::u32string head = w.substr(0, pstart);
    auto [estart, eaction] = longest_suffix(head, endings);
    if (eaction == 0 || estart < reg.rv) return;
    switch (eaction) {
        case 1: w = head.substr(0, estart) + U"iendo"; break;
        case 2: w = head.substr(0, estart) + U"ando"; break;
        case 3: w = head.substr(0, estart) + U"ar"; break;
        case 4: w = head.substr(0, estart) + U"er"; break;
        case 5: w = head.substr(0, estart) + U"ir"; break;
        case 6: w = head; break;
        case 7:
            if (estart >= 1 && head[estart - 1] == U'u') w = head;
            break;
    }
}

// Step 1: standard (mostly derivational) suffixes.
inline bool standard_suffix(std::u32string& w, const Regions& reg) {
    static const std::vector<SuffixRule> table{
        {U"ica", 1},      {U"icas", 1},     {U"ico", 1},      {U"icos", 1},
        {U"osa", 1},      {U"osas", 1},     {U"oso", 1},      {U"osos", 1},
        {U"ista", 1},     {U"istas", 1},    {U"anza", 1},     {U"anzas", 1},
        {U"able", 1},     {U"ables", 1},    {U"ible", 1},     {U"ibles", 1},
        {U"ismo", 1},     {U"ismos", 1},    {U"amiento", 1},  {U"amientos", 1},
        {U"imiento", 1},  {U"imientos", 1},
        {U"ancia", 2},    {U"ancias", 2},   {U"adora", 2},    {U"adoras", 2},
        {U"ador", 2},     {U"adores", 2},   {U"ante", 2},     {U"antes", 2},
        {U"ación", 2}, {U"aciones", 2},
        {U"logía", 3}, {U"logías", 3},
        {U"ución", 4}, {U"uciones", 4},
        {U"encia", 5},    {U"encias", 5},
        {U"amente", 6},
        {U"mente", 7},
        {U"idad", 8},     {U"idades", 8},
        {U"iva", 9},      {U"ivas", 9},     {U"ivo", 9},      {U"ivos", 9},
    };
    auto [start, action] = longest_suffix(w, table);
    if (action == 0) return false;

    auto erase_if_r2 = [&](std::u32string_view suffix) {
        if (ends_with(w, suffix) && w.size() - suffix.size() >= reg.r2)
            w.erase(w.size() - suffix.size());
    };

    switch (action) {
        case 1:
            if (start < reg.r2) return false;
            w.erase(start);
            break;
        case 2:
            if (start < reg.r2) return false;
            w.erase(start);
            erase_if_r2(U"ic");
            break;
        case 3:
            if (start < reg.r2) return false;
            w = w.substr(0, start) + U"log";
            break;
        case 4:
            if (start < reg.r2) return false;
            w = w.substr(0, start) + U"u";
            break;
        case 5:
            if (start < reg.r2) return false;
            w = w.substr(0, start) + U"ente";
            break;
        case 6: { // amente
            if (start < reg.r1) return false;
            w.erase(start);
            // iv gets a further "at" removal; ic/ad/os are plain deletes
            static const std::vector<SuffixRule> sub{{U"iv", 1}, {U"ic", 2}, {U"ad", 2},
                                                     {U"os", 2}};
            auto [s2, a2] = longest_suffix(w, sub);
            if (a2 != 0 && s2 >= reg.r2) {
                bool was_iv = (a2 == 1);
                w.erase(s2);
                if (was_iv) erase_if_r2(U"at");
            }
            break;
        }
        case 7: { // mente
            if (start < reg.r2) return false;
            w.erase(start);
            static const std::vector<SuffixRule> sub{{U"able", 1}, {U"ible", 1}, {U"ante", 1}};
            auto [s2, a2] = longest_suffix(w, sub);
            if (a2 != 0 && s2 >= reg.r2) w.erase(s2);
            break;
        }
        case 8: { // idad(es)
            if (start < reg.r2) return false;
            w.erase(start);
            static const std::vector<SuffixRule> sub{{U"abil", 1}, {U"ic", 1}, {U"iv", 1}};
            auto [s2, a2] = longest_suffix(w, sub);
            if (a2 != 0 && s2 >= reg.r2) w.erase(s2);
            break;
        }
        case 9: // iv{a,o,as,os}
            if (start < reg.r2) return false;
            w.erase(start);
            erase_if_r2(U"at");
            break;
    }
    return true;
}

// Step 2a: verb suffixes beginning with y, only valid after "u".
inline bool y_verb_suffix(std::u32string& w, const Regions& reg) {
    static const std::vector<SuffixRule> table{
        {U"yeron", 1}, {U"yendo", 1}, {U"yamos", 1}, {U"yais", 1}, {U"yan", 1},
        {U"yen", 1},   {U"yas", 1},   {U"yes", 1},   {U"ya", 1},   {U"ye", 1},
        {U"yo", 1},    {U"yó", 1},
    };
    auto [start, action] = longest_suffix(w, table, reg.rv);
    if (action == 0) return false;
    if (start < 1 || w[start - 1] != U'u') return false;
    w.erase(start);
    return true;
}

// Step 2b: remaining verb suffixes, matched inside RV.
inline bool verb_suffix(std::u32string& w, const Regions& reg) {
    static const std::vector<SuffixRule> table{
        {U"aríamos", 2}, {U"eríamos", 2}, {U"iríamos", 2},
        {U"iéramos", 2}, {U"iésemos", 2},
        {U"aríais", 2},  {U"eríais", 2},  {U"iríais", 2},
        {U"aremos", 2},       {U"eremos", 2},       {U"iremos", 2},
        {U"ábamos", 2},  {U"áramos", 2},  {U"ásemos", 2},
        {U"arían", 2},   {U"arías", 2},   {U"aréis", 2},
        {U"erían", 2},   {U"erías", 2},   {U"eréis", 2},
        {U"irían", 2},   {U"irías", 2},   {U"iréis", 2},
        {U"ieran", 2},        {U"iesen", 2},        {U"ieron", 2},        {U"iendo", 2},
        {U"ieras", 2},        {U"ieses", 2},        {U"abais", 2},        {U"arais", 2},
        {U"ierais", 2},       {U"íamos", 2},   {U"aseis", 2},        {U"ieseis", 2},
        {U"asteis", 2},       {U"isteis", 2},       {U"ados", 2},         {U"idos", 2},
        {U"amos", 2},         {U"emos", 1},         {U"arán", 2},    {U"arás", 2},
        {U"aban", 2},         {U"aran", 2},         {U"asen", 2},         {U"aron", 2},
        {U"erán", 2},    {U"erás", 2},    {U"irán", 2},    {U"irás", 2},
        {U"ían", 2},     {U"íais", 2},    {U"ando", 2},         {U"iera", 2},
        {U"iese", 2},         {U"aste", 2},         {U"iste", 2},         {U"aría", 2},
        {U"ería", 2},    {U"iría", 2},    {U"abas", 2},         {U"adas", 2},
        {U"idas", 2},         {U"aras", 2},         {U"ases", 2},         {U"ías", 2},
        {U"áis", 2},     {U"éis", 1},     {U"imos", 2},
        {U"aba", 2},          {U"ada", 2},          {U"ida", 2},          {U"ara", 2},
        {U"ase", 2},          {U"ía", 2},      {U"ado", 2},          {U"ido", 2},
        {U"ará", 2},     {U"aré", 2},     {U"erá", 2},     {U"eré", 2},
        {U"irá", 2},     {U"iré", 2},     {U"ió", 2},      {U"ís", 2},
        {U"an", 2},           {U"en", 1},           {U"es", 1},           {U"as", 2},
        {U"ad", 2},           {U"ed", 2},           {U"id", 2},           {U"ar", 2},
        {U"er", 2},           {U"ir", 2},
    };
    auto [start, action] = longest_suffix(w, table, reg.rv);
    if (action == 0) return false;
    if (action == 1 && start >= 2 && w[start - 1] == U'u' && w[start - 2] == U'g') {
        w.erase(start - 1); // the u of "gu" goes too
    } else {
        w.erase(start);
    }
    return true;
}

// Step 3: residual vowel suffixes.
inline void residual_suffix(std::u32string& w, const Regions& reg) {
    static const std::vector<SuffixRule> table{
        {U"os", 1},      {U"a", 1},       {U"o", 1},       {U"á", 1},
        {U"í", 1},  {U"ó", 1},  {U"e", 2},       {U"é", 2},
    };
    auto [start, action] = longest_suffix(w, table);
    if (action == 0 || start < reg.rv) return;
    w.erase(start);
    if (action == 2 && ends_with(w, U"gu") && w.size() - 1 >= reg.rv) {
        w.erase(w.size() - 1); // drop the u of a trailing "gu" inside RV
    }
}

inline void remove_acute_accents(std::u32string& w) {
    for (auto& c : w) {
        switch (c) {
            case U'á': c = U'a'; break;
            case U'é': c = U'e'; break;
            case U'í': c = U'i'; break;
            case U'ó': c = U'o'; break;
            case U'ú': c = U'u'; break;
            default: break;
        }
    }
}

/// Stems one lowercase word.
inline std::u32string stem_word(const std::u32string& input) {
    std::u32string w = input;
    const Regions reg = mark_regions(w);
    attached_pronoun(w, reg);
    if (!standard_suffix(w, reg)) {
        if (!y_verb_suffix(w, reg)) verb_suffix(w, reg);
    }
    residual_suffix(w, reg);
    remove_acute_accents(w);
    return w;
}

} // namespace snowball

/// Lowercases, then applies Spanish Snowball stemming to each whitespace
/// token; tokens are rejoined with single spaces. Idempotent on its output.
inline std::string stem(const std::string& term) {
    std::vector<std::string> stems;
    for (const auto& token : text::split_ws(term)) {
        auto lowered = text::fold_case(text::decode_utf8(token));
        stems.push_back(text::encode_utf8(snowball::stem_word(lowered)));
    }
    return text::join(stems, " ");
}

// ---------------------------------------------------------------------------
// Levenshtein distance (codepoint-level, unit costs)
// ---------------------------------------------------------------------------

inline size_t levenshtein(std::string_view a_utf8, std::string_view b_utf8) {
    const std::u32string a = text::decode_utf8(a_utf8);
    const std::u32string b = text::decode_utf8(b_utf8);
    if (a.empty()) return b.size();
    if (b.empty()) return a.size();
    std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (size_t j = 1; j <= b.size(); ++j) {
            size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

// ---------------------------------------------------------------------------
// Gazetteer and entity linking
// ---------------------------------------------------------------------------

struct GazetteerEntry {
    std::string code;         // SNOMED CT id
    std::string term;
    std::string semantic_tag;
    std::string stemmed_term; // cached stem(term)
};

struct GazetteerColumns {
    std::string code = "code";
    std::string term = "term";
    std::string tag = "semantic_tag";
    /// Accepted semantic-tag values, compared case-insensitively.
    std::vector<std::string> procedure_tags = {"procedure", "procedimiento"};
};

inline GazetteerColumns gazetteer_columns_from(const RunConfig& cfg) {
    GazetteerColumns cols;
    cols.code = cfg.gazetteer_code_column;
    cols.term = cfg.gazetteer_term_column;
    cols.tag = cfg.gazetteer_tag_column;
    cols.procedure_tags.clear();
    for (const auto& t : text::split(cfg.procedure_tags, ','))
        if (!text::trim(t).empty()) cols.procedure_tags.push_back(text::trim(t));
    return cols;
}

/// Loads the task gazetteer TSV, keeps only procedure rows, and stems every
/// kept term once.
inline std::vector<GazetteerEntry> load_gazetteer(const std::filesystem::path& path,
                                                  const GazetteerColumns& columns = {}) {
    std::string content = text::read_file(path);
    auto lines = text::split(content, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw SchemaError("gazetteer file has no header: " + path.string());

    auto header = text::split(text::trim(lines[0]), '\t');
    auto column_index = [&](const std::string& name) -> size_t {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw MissingColumn("gazetteer is missing column \"" + name + "\"");
    };
    const size_t code_idx = column_index(columns.code);
    const size_t term_idx = column_index(columns.term);
    const size_t tag_idx = column_index(columns.tag);

    std::set<std::string> accepted;
    for (const auto& t : columns.procedure_tags) accepted.insert(text::lower_utf8(t));

    std::vector<GazetteerEntry> out;
    for (size_t lineno = 1; lineno < lines.size(); ++lineno) {
        if (text::trim(lines[lineno]).empty()) continue;
        auto fields = text::split(lines[lineno], '\t');
        size_t needed = std::max({code_idx, term_idx, tag_idx});
        if (fields.size() <= needed)
            throw SchemaError("gazetteer row " + std::to_string(lineno + 1) + " has " +
                              std::to_string(fields.size()) + " fields");
        if (!accepted.count(text::lower_utf8(text::trim(fields[tag_idx])))) continue;
        GazetteerEntry e;
        e.code = text::trim(fields[code_idx]);
        e.term = text::trim(fields[term_idx]);
        e.semantic_tag = text::trim(fields[tag_idx]);
        if (e.code.empty() || e.term.empty())
            throw SchemaError("gazetteer row " + std::to_string(lineno + 1) +
                              " has empty code or term");
        e.stemmed_term = stem(e.term);
        out.push_back(std::move(e));
    }
    return out;
}

/// Nearest gazetteer entry by normalized Levenshtein distance between stems;
/// none when the minimum exceeds the threshold. Ties break toward the smaller
/// raw distance, then the lexicographically smallest code.
inline std::optional<std::string> link(const std::string& mention_text,
                                       const std::vector<GazetteerEntry>& gazetteer,
                                       double threshold) {
    if (gazetteer.empty()) throw SchemaError("link requires a nonempty gazetteer");
    if (threshold < 0.0 || threshold > 1.0)
        throw SchemaError("link threshold must be in [0, 1]");

    const std::string mention_stem = stem(mention_text);
    const size_t mention_len = text::decode_utf8(mention_stem).size();

    bool have_best = false;
    double best_norm = 0.0;
    size_t best_dist = 0;
    const GazetteerEntry* best = nullptr;
    for (const auto& entry : gazetteer) {
        size_t dist = levenshtein(mention_stem, entry.stemmed_term);
        size_t denom = std::max(mention_len, text::decode_utf8(entry.stemmed_term).size());
        double norm = denom == 0 ? 0.0 : static_cast<double>(dist) / static_cast<double>(denom);
        bool better = !have_best || norm < best_norm ||
                      (norm == best_norm &&
                       (dist < best_dist || (dist == best_dist && entry.code < best->code)));
        if (better) {
            have_best = true;
            best_norm = norm;
            best_dist = dist;
            best = &entry;
        }
    }
    if (!best || best_norm > threshold) return std::nullopt;
    return best->code;
}

// ---------------------------------------------------------------------------
// Few-shot NER
// ---------------------------------------------------------------------------

struct FewShotExample {
    std::string input_text;
    std::vector<std::string> output_procedures;
};

struct Mention {
    std::string document_id;
    size_t start = 0; // codepoint offsets
    size_t end = 0;
    std::string text;
    std::optional<std::string> code;
};

namespace detail {

/// json.dumps-style serialization: ", " separators, non-ASCII escaped.
inline std::string py_json_dumps(const std::vector<std::string>& items) {
    std::string out = "[";
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += '"';
        for (char32_t cp : text::decode_utf8(items[i])) {
            if (cp == U'"') out += "\\\"";
            else if (cp == U'\\') out += "\\\\";
            else if (cp == U'\n') out += "\\n";
            else if (cp == U'\r') out += "\\r";
            else if (cp == U'\t') out += "\\t";
            else if (cp < 0x20 || cp > 0x7E) {
                char buf[8];
                if (cp <= 0xFFFF) {
                    std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(cp));
                    out += buf;
                } else {
                    char32_t v = cp - 0x10000;
                    std::snprintf(buf, sizeof buf, "\\u%04x",
                                  static_cast<unsigned>(0xD800 + (v >> 10)));
                    out += buf;
                    std::snprintf(buf, sizeof buf, "\\u%04x",
                                  static_cast<unsigned>(0xDC00 + (v & 0x3FF)));
                    out += buf;
                }
            } else {
                out += static_cast<char>(cp);
            }
        }
        out += '"';
    }
    out += "]";
    return out;
}

} // namespace detail

inline const std::string kExtractionInstruction =
    "Extraiga todos los procedimientos médicos del texto delimitado por tres comillas "
    "invertidas. Devuelve una lista vacía si no se menciona ninguno. ";

/// Spanish system prompt, then alternating user/assistant example turns with
/// JSON-array assistant outputs, then the document.
inline std::vector<llm::ChatMessage> build_ner_conversation(
    const std::string& document, const std::vector<FewShotExample>& examples) {
    std::vector<llm::ChatMessage> conversation;
    conversation.push_back(llm::system_prompt(llm::Task::medprocner));
    for (const auto& ex : examples) {
        conversation.push_back({llm::Role::user, ex.input_text});
        conversation.push_back(
            {llm::Role::assistant, detail::py_json_dumps(ex.output_procedures)});
    }
    conversation.push_back({llm::Role::user, kExtractionInstruction + document});
    return conversation;
}

/// All case-insensitive, non-overlapping occurrences of `form` in `document`
/// as [start, end) codepoint ranges.
inline std::vector<std::pair<size_t, size_t>> locate_all(const std::u32string& folded_doc,
                                                         const std::u32string& folded_form) {
    std::vector<std::pair<size_t, size_t>> out;
    if (folded_form.empty() || folded_form.size() > folded_doc.size()) return out;
    size_t from = 0;
    while (from + folded_form.size() <= folded_doc.size()) {
        auto it = std::search(folded_doc.begin() + static_cast<ptrdiff_t>(from),
                              folded_doc.end(), folded_form.begin(), folded_form.end());
        if (it == folded_doc.end()) break;
        size_t start = static_cast<size_t>(it - folded_doc.begin());
        out.emplace_back(start, start + folded_form.size());
        from = start + folded_form.size();
    }
    return out;
}

/// Few-shot NER over one document: prompts the model, parses the JSON string
/// array, and localizes every returned surface form in the document. Forms
/// that do not occur are dropped (and reported via dropped_forms).
inline std::vector<Mention> extract_procedures(
    llm::Gateway& gateway, const std::string& document_id, const std::string& document,
    const std::vector<FewShotExample>& examples, const std::string& model_id,
    int required_examples = 3, std::vector<std::string>* dropped_forms = nullptr,
    std::string* fp_out = nullptr) {
    if (required_examples >= 0 && static_cast<int>(examples.size()) != required_examples)
        throw SchemaError("expected " + std::to_string(required_examples) +
                          " few-shot examples, got " + std::to_string(examples.size()));

    llm::ChatExchange ex;
    ex.model_id = model_id;
    ex.messages = build_ner_conversation(document, examples);
    ex.profile = llm::profile_for(llm::Step::answering);
    if (fp_out) *fp_out = llm::fingerprint(ex);
    std::string completion = gateway.complete(ex);

    auto forms = answerer::parse_json_string_array(completion);

    const std::u32string doc_cps = text::decode_utf8(document);
    const std::u32string doc_folded = text::fold_case(doc_cps);

    std::vector<Mention> mentions;
    std::set<std::pair<size_t, size_t>> seen_spans;
    for (const auto& form : forms) {
        auto occurrences = locate_all(doc_folded, text::fold_case(text::decode_utf8(form)));
        if (occurrences.empty()) {
            if (dropped_forms) dropped_forms->push_back(form);
            continue;
        }
        for (auto [start, end] : occurrences) {
            if (!seen_spans.insert({start, end}).second) continue;
            Mention m;
            m.document_id = document_id;
            m.start = start;
            m.end = end;
            m.text = text::encode_utf8(doc_cps.substr(start, end - start));
            mentions.push_back(std::move(m));
        }
    }
    std::sort(mentions.begin(), mentions.end(), [](const Mention& a, const Mention& b) {
        return std::tie(a.start, a.end) < std::tie(b.start, b.end);
    });
    return mentions;
}

/// Document-level indexing: the union of all linked codes, sorted, unique.
inline std::vector<std::string> index_document(const std::vector<Mention>& mentions) {
    std::set<std::string> codes;
    for (const auto& m : mentions)
        if (m.code) codes.insert(*m.code);
    return {codes.begin(), codes.end()};
}

// ---------------------------------------------------------------------------
// Task output files (TSV)
// ---------------------------------------------------------------------------

inline const std::string kMentionLabel = "PROCEDIMIENTO";

inline void write_ner_tsv(const std::filesystem::path& path,
                          const std::vector<Mention>& mentions) {
    std::string out = "filename\tlabel\tstart_span\tend_span\ttext\n";
    for (const auto& m : mentions)
        out += m.document_id + "\t" + kMentionLabel + "\t" + std::to_string(m.start) + "\t" +
               std::to_string(m.end) + "\t" + m.text + "\n";
    text::atomic_write_file(path, out);
}

/// Entity-linking predictions: only mentions that received a code.
inline void write_el_tsv(const std::filesystem::path& path,
                         const std::vector<Mention>& mentions) {
    std::string out = "filename\tlabel\tstart_span\tend_span\ttext\tcode\n";
    for (const auto& m : mentions) {
        if (!m.code) continue;
        out += m.document_id + "\t" + kMentionLabel + "\t" + std::to_string(m.start) + "\t" +
               std::to_string(m.end) + "\t" + m.text + "\t" + *m.code + "\n";
    }
    text::atomic_write_file(path, out);
}

/// Indexing predictions: one (filename, code) row per assigned code.
inline void write_index_tsv(const std::filesystem::path& path,
                            const std::map<std::string, std::vector<std::string>>& codes_by_doc) {
    std::string out = "filename\tcode\n";
    for (const auto& [doc, codes] : codes_by_doc)
        for (const auto& code : codes) out += doc + "\t" + code + "\n";
    text::atomic_write_file(path, out);
}

/// Parses the NER/EL TSV shape back into mentions (header required).
inline std::vector<Mention> read_span_tsv(const std::filesystem::path& path) {
    auto lines = text::split(text::read_file(path), '\n');
    std::vector<Mention> out;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        auto fields = text::split(lines[i], '\t');
        if (fields.size() < 5)
            throw SchemaError(path.string() + ":" + std::to_string(i + 1) + ": expected >=5 columns");
        Mention m;
        m.document_id = fields[0];
        m.start = static_cast<size_t>(std::stoull(fields[2]));
        m.end = static_cast<size_t>(std::stoull(fields[3]));
        m.text = fields[4];
        if (fields.size() >= 6 && !fields[5].empty()) m.code = fields[5];
        out.push_back(std::move(m));
    }
    return out;
}

} // namespace bioqa::medproc
