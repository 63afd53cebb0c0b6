#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/text.hpp"

namespace bioqa::metrics {

// ---------------------------------------------------------------------------
// Retrieval metrics
// ---------------------------------------------------------------------------

/// AP = (sum of Precision@r over relevant ranks r) / min(|gold|, 10);
/// 0 when gold is empty. Duplicate retrieved documents are a caller bug.
inline double average_precision(const std::vector<std::string>& retrieved,
                                const std::set<std::string>& gold) {
    std::set<std::string> seen;
    for (const auto& d : retrieved)
        if (!seen.insert(d).second)
            throw DuplicateDocument("duplicate retrieved document: " + d);
    if (gold.empty()) return 0.0;
    double sum = 0.0;
    size_t relevant_so_far = 0;
    for (size_t r = 0; r < retrieved.size(); ++r) {
        if (gold.count(retrieved[r])) {
            ++relevant_so_far;
            sum += static_cast<double>(relevant_so_far) / static_cast<double>(r + 1);
        }
    }
    double denom = static_cast<double>(std::min<size_t>(gold.size(), 10));
    return sum / denom;
}

/// Arithmetic mean and epsilon-floored geometric mean of per-question APs.
inline std::pair<double, double> map_gmap(const std::vector<double>& aps, double epsilon) {
    if (aps.empty()) throw EmptyInput("map_gmap requires at least one AP");
    if (epsilon <= 0.0) throw SchemaError("gmap epsilon must be > 0");
    double sum = 0.0, log_sum = 0.0;
    for (double ap : aps) {
        if (ap < 0.0 || ap > 1.0) throw SchemaError("AP outside [0, 1]");
        sum += ap;
        log_sum += std::log(std::max(ap, epsilon));
    }
    double n = static_cast<double>(aps.size());
    return {sum / n, std::exp(log_sum / n)};
}

struct RetrievalEval {
    std::vector<double> per_question_ap;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;
    double map = 0.0;
    double gmap = 0.0;
    double epsilon = 0.01;
};

inline double harmonic_f1(double p, double r) { return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0; }

/// Per-question document-list evaluation: P/R/F against the gold set plus
/// MAP/GMAP over APs.
inline RetrievalEval retrieval_eval(
    const std::vector<std::pair<std::vector<std::string>, std::set<std::string>>>& runs,
    double epsilon) {
    if (runs.empty()) throw EmptyInput("retrieval_eval requires at least one question");
    RetrievalEval out;
    out.epsilon = epsilon;
    double psum = 0, rsum = 0, fsum = 0;
    for (const auto& [retrieved, gold] : runs) {
        out.per_question_ap.push_back(average_precision(retrieved, gold));
        size_t hit = 0;
        for (const auto& d : retrieved) hit += gold.count(d);
        double p = retrieved.empty() ? 0.0
                                     : static_cast<double>(hit) /
                                           static_cast<double>(retrieved.size());
        double r = gold.empty() ? 0.0
                                : static_cast<double>(hit) / static_cast<double>(gold.size());
        psum += p;
        rsum += r;
        fsum += harmonic_f1(p, r);
    }
    double n = static_cast<double>(runs.size());
    out.mean_precision = psum / n;
    out.mean_recall = rsum / n;
    out.mean_f1 = fsum / n;
    std::tie(out.map, out.gmap) = map_gmap(out.per_question_ap, epsilon);
    return out;
}

// ---------------------------------------------------------------------------
// Exact-answer metrics
// ---------------------------------------------------------------------------

struct YesNoEval {
    double accuracy = 0.0;
    double f1_yes = 0.0;
    double f1_no = 0.0;
    double macro_f1 = 0.0;
};

inline YesNoEval yesno_eval(const std::vector<std::pair<Verdict, Verdict>>& pairs) {
    if (pairs.empty()) throw EmptyInput("yesno_eval requires at least one pair");
    auto class_f1 = [&](Verdict positive) {
        size_t tp = 0, fp = 0, fn = 0;
        for (const auto& [gold, pred] : pairs) {
            if (pred == positive && gold == positive) ++tp;
            else if (pred == positive) ++fp;
            else if (gold == positive) ++fn;
        }
        double p = (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        double r = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        return harmonic_f1(p, r);
    };
    YesNoEval out;
    size_t correct = 0;
    for (const auto& [gold, pred] : pairs) correct += (gold == pred);
    out.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
    out.f1_yes = class_f1(Verdict::yes);
    out.f1_no = class_f1(Verdict::no);
    out.macro_f1 = (out.f1_yes + out.f1_no) / 2.0;
    return out;
}

/// Matching hook: defaults to trimmed, case-folded exact equality.
using Normalizer = std::function<std::string(const std::string&)>;

inline Normalizer default_normalizer() {
    return [](const std::string& s) { return text::lower_utf8(text::trim(s)); };
}

/// Gold side of one question: each inner vector is one gold item's synonyms.
using SynonymSets = std::vector<std::vector<std::string>>;

struct FactoidEval {
    double strict_acc = 0.0;
    double lenient_acc = 0.0;
    double mrr = 0.0;
};

inline FactoidEval factoid_eval(
    const std::vector<std::pair<SynonymSets, std::vector<std::string>>>& items,
    const Normalizer& normalize = default_normalizer()) {
    if (items.empty()) throw EmptyInput("factoid_eval requires at least one question");
    double strict = 0, lenient = 0, rr_sum = 0;
    for (const auto& [gold_sets, predicted] : items) {
        std::set<std::string> gold_forms;
        for (const auto& set : gold_sets)
            for (const auto& s : set) gold_forms.insert(normalize(s));
        size_t rank = 0; // 0 = no match
        for (size_t i = 0; i < predicted.size() && i < 5; ++i) {
            if (gold_forms.count(normalize(predicted[i]))) {
                rank = i + 1;
                break;
            }
        }
        if (rank == 1) strict += 1;
        if (rank >= 1) lenient += 1;
        if (rank >= 1) rr_sum += 1.0 / static_cast<double>(rank);
    }
    double n = static_cast<double>(items.size());
    return {strict / n, lenient / n, rr_sum / n};
}

struct ListEval {
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;
};

inline ListEval list_eval(
    const std::vector<std::pair<SynonymSets, std::vector<std::string>>>& items,
    const Normalizer& normalize = default_normalizer()) {
    if (items.empty()) throw EmptyInput("list_eval requires at least one question");
    double psum = 0, rsum = 0, fsum = 0;
    for (const auto& [gold_sets, predicted] : items) {
        std::vector<std::set<std::string>> gold;
        for (const auto& set : gold_sets) {
            std::set<std::string> forms;
            for (const auto& s : set) forms.insert(normalize(s));
            gold.push_back(std::move(forms));
        }
        auto matches_any = [&](const std::string& pred) {
            auto norm = normalize(pred);
            return std::any_of(gold.begin(), gold.end(),
                               [&](const auto& set) { return set.count(norm) > 0; });
        };
        size_t matched_preds = 0;
        for (const auto& pred : predicted) matched_preds += matches_any(pred);
        size_t covered = 0;
        for (const auto& set : gold) {
            bool hit = std::any_of(predicted.begin(), predicted.end(), [&](const auto& pred) {
                return set.count(normalize(pred)) > 0;
            });
            covered += hit;
        }
        double p, r;
        if (predicted.empty()) p = gold.empty() ? 1.0 : 0.0;
        else p = static_cast<double>(matched_preds) / static_cast<double>(predicted.size());
        if (gold.empty()) r = predicted.empty() ? 1.0 : 0.0;
        else r = static_cast<double>(covered) / static_cast<double>(gold.size());
        psum += p;
        rsum += r;
        fsum += harmonic_f1(p, r);
    }
    double n = static_cast<double>(items.size());
    return {psum / n, rsum / n, fsum / n};
}

// ---------------------------------------------------------------------------
// Span metrics (MedProcNER)
// ---------------------------------------------------------------------------

/// One scored unit: NER uses (doc, start, end); entity linking adds the code;
/// indexing uses (doc, code) with zeroed offsets.
struct Span {
    std::string doc;
    int64_t start = 0;
    int64_t end = 0;
    std::string code;

    auto operator<=>(const Span&) const = default;
};

struct Prf {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Exact-match micro precision/recall/F1 over span sets.
inline Prf span_micro_f1(const std::vector<Span>& gold, const std::vector<Span>& pred) {
    std::set<Span> g(gold.begin(), gold.end());
    std::set<Span> p(pred.begin(), pred.end());
    size_t tp = 0;
    for (const auto& s : p) tp += g.count(s);
    double precision = p.empty() ? (g.empty() ? 1.0 : 0.0)
                                 : static_cast<double>(tp) / static_cast<double>(p.size());
    double recall = g.empty() ? (p.empty() ? 1.0 : 0.0)
                              : static_cast<double>(tp) / static_cast<double>(g.size());
    return {precision, recall, harmonic_f1(precision, recall)};
}

// ---------------------------------------------------------------------------
// Repeated-run variance
// ---------------------------------------------------------------------------

struct Stats {
    double mean = 0.0;
    double stddev = 0.0; // sample standard deviation
    double min = 0.0;
    double max = 0.0;
};

inline std::map<std::string, Stats> variance_report(
    const std::vector<std::map<std::string, double>>& runs) {
    if (runs.size() < 2) throw EmptyInput("variance_report requires at least two runs");
    for (size_t i = 1; i < runs.size(); ++i) {
        if (runs[i].size() != runs[0].size())
            throw KeyMismatch("run " + std::to_string(i) + " has a different metric set");
        for (const auto& [k, v] : runs[0])
            if (!runs[i].count(k)) throw KeyMismatch("run " + std::to_string(i) +
                                                     " is missing metric \"" + k + "\"");
    }
    std::map<std::string, Stats> out;
    const double n = static_cast<double>(runs.size());
    for (const auto& [key, first] : runs[0]) {
        Stats s;
        s.min = s.max = first;
        double sum = 0;
        for (const auto& run : runs) {
            double v = run.at(key);
            sum += v;
            s.min = std::min(s.min, v);
            s.max = std::max(s.max, v);
        }
        s.mean = sum / n;
        if (s.min == s.max) {
            // identical values have exactly zero spread; avoid FP residue
            s.mean = s.min;
            s.stddev = 0.0;
        } else {
            double sq = 0;
            for (const auto& run : runs) {
                double d = run.at(key) - s.mean;
                sq += d * d;
            }
            s.stddev = std::sqrt(sq / (n - 1));
        }
        out[key] = s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gold / prediction file interpretation
// ---------------------------------------------------------------------------

/// Gold synonym sets from a BioASQ exact_answer payload. Factoid gold given
/// as a flat string array is one synonym set; list gold given flat is one
/// singleton set per string. Nested arrays are taken as-is.
inline SynonymSets parse_synonym_sets(const Json& exact, QuestionType type) {
    SynonymSets out;
    if (exact.is_string()) {
        out.push_back({exact.get<std::string>()});
        return out;
    }
    if (!exact.is_array()) throw SchemaError("exact_answer must be string or array");
    bool nested = std::any_of(exact.begin(), exact.end(),
                              [](const Json& el) { return el.is_array(); });
    if (nested) {
        for (const auto& el : exact) {
            std::vector<std::string> set;
            if (el.is_array())
                for (const auto& s : el) set.push_back(s.get<std::string>());
            else set.push_back(el.get<std::string>());
            out.push_back(std::move(set));
        }
        return out;
    }
    if (type == QuestionType::factoid) {
        std::vector<std::string> synonyms;
        for (const auto& s : exact) synonyms.push_back(s.get<std::string>());
        out.push_back(std::move(synonyms));
    } else {
        for (const auto& s : exact) out.push_back({s.get<std::string>()});
    }
    return out;
}

/// Ranked entries from a predicted exact_answer ([["a"],["b"]] or ["a","b"]).
inline std::vector<std::string> parse_predicted_entries(const Json& exact) {
    std::vector<std::string> out;
    if (!exact.is_array()) throw SchemaError("predicted exact_answer must be an array");
    for (const auto& el : exact) {
        if (el.is_array()) {
            if (!el.empty()) out.push_back(el[0].get<std::string>());
        } else {
            out.push_back(el.get<std::string>());
        }
    }
    return out;
}

inline Verdict parse_verdict(const Json& exact) {
    if (!exact.is_string()) throw SchemaError("yes/no exact_answer must be a string");
    std::string s = text::lower_ascii(text::trim(exact.get<std::string>()));
    if (s == "yes") return Verdict::yes;
    if (s == "no") return Verdict::no;
    throw SchemaError("yes/no exact_answer must be yes|no, got \"" + s + "\"");
}

struct GoldAnswers {
    QuestionType type = QuestionType::summary;
    std::optional<Verdict> verdict;
    SynonymSets synsets;
    std::set<std::string> documents;
};

/// Reads gold answers (type, exact_answer, documents) from a questions file.
inline std::map<std::string, GoldAnswers> load_gold_answers(const std::filesystem::path& path) {
    Json doc = Json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.is_object() || !doc.contains("questions"))
        throw SchemaError("expected questions file: " + path.string());
    std::map<std::string, GoldAnswers> out;
    for (const auto& j : doc["questions"]) {
        if (!j.contains("id") || !j.contains("type")) continue;
        GoldAnswers g;
        g.type = question_type_from(j["type"].get<std::string>());
        if (j.contains("documents"))
            for (const auto& d : j["documents"]) g.documents.insert(url_to_pmid(d.get<std::string>()));
        if (j.contains("exact_answer")) {
            if (g.type == QuestionType::yesno) g.verdict = parse_verdict(j["exact_answer"]);
            else if (g.type != QuestionType::summary)
                g.synsets = parse_synonym_sets(j["exact_answer"], g.type);
        }
        out[j["id"].get<std::string>()] = std::move(g);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File-level evaluation drivers
// ---------------------------------------------------------------------------

inline std::map<std::string, double> evaluate_phase_a(
    const std::map<std::string, GoldAnswers>& gold,
    const std::vector<SubmissionEntry>& predictions, double epsilon) {
    std::map<std::string, std::vector<std::string>> predicted_docs;
    for (const auto& e : predictions) predicted_docs[e.id] = e.documents;
    std::vector<std::pair<std::vector<std::string>, std::set<std::string>>> runs;
    for (const auto& [id, g] : gold) {
        if (g.documents.empty()) continue;
        auto it = predicted_docs.find(id);
        runs.push_back({it == predicted_docs.end() ? std::vector<std::string>{} : it->second,
                        g.documents});
    }
    if (runs.empty()) throw EmptyInput("no questions with gold documents");
    auto eval = retrieval_eval(runs, epsilon);
    return {{"map", eval.map},
            {"gmap", eval.gmap},
            {"mean_precision", eval.mean_precision},
            {"mean_recall", eval.mean_recall},
            {"mean_f1", eval.mean_f1}};
}

inline std::map<std::string, double> evaluate_phase_b(
    const std::map<std::string, GoldAnswers>& gold,
    const std::vector<SubmissionEntry>& predictions,
    const Normalizer& normalize = default_normalizer()) {
    std::vector<std::pair<Verdict, Verdict>> yesno_pairs;
    std::vector<std::pair<SynonymSets, std::vector<std::string>>> factoid_items;
    std::vector<std::pair<SynonymSets, std::vector<std::string>>> list_items;

    for (const auto& e : predictions) {
        auto it = gold.find(e.id);
        if (it == gold.end()) continue;
        const GoldAnswers& g = it->second;
        switch (g.type) {
            case QuestionType::yesno:
                if (g.verdict && e.exact_answer)
                    yesno_pairs.push_back({*g.verdict, parse_verdict(*e.exact_answer)});
                break;
            case QuestionType::factoid:
                if (!g.synsets.empty())
                    factoid_items.push_back(
                        {g.synsets, e.exact_answer ? parse_predicted_entries(*e.exact_answer)
                                                   : std::vector<std::string>{}});
                break;
            case QuestionType::list:
                if (!g.synsets.empty())
                    list_items.push_back(
                        {g.synsets, e.exact_answer ? parse_predicted_entries(*e.exact_answer)
                                                   : std::vector<std::string>{}});
                break;
            case QuestionType::summary:
                break;
        }
    }

    std::map<std::string, double> out;
    if (!yesno_pairs.empty()) {
        auto y = yesno_eval(yesno_pairs);
        out["yesno_accuracy"] = y.accuracy;
        out["yesno_f1_yes"] = y.f1_yes;
        out["yesno_f1_no"] = y.f1_no;
        out["yesno_macro_f1"] = y.macro_f1;
    }
    if (!factoid_items.empty()) {
        auto f = factoid_eval(factoid_items, normalize);
        out["factoid_strict_acc"] = f.strict_acc;
        out["factoid_lenient_acc"] = f.lenient_acc;
        out["factoid_mrr"] = f.mrr;
    }
    if (!list_items.empty()) {
        auto l = list_eval(list_items, normalize);
        out["list_mean_precision"] = l.mean_precision;
        out["list_mean_recall"] = l.mean_recall;
        out["list_mean_f1"] = l.mean_f1;
    }
    if (out.empty()) throw EmptyInput("no evaluable questions in the gold file");
    return out;
}

// ---------------------------------------------------------------------------
// Report output
// ---------------------------------------------------------------------------

inline void write_metric_report(const std::filesystem::path& path,
                                const std::map<std::string, double>& metrics) {
    OrderedJson doc;
    doc["metrics"] = OrderedJson::object();
    for (const auto& [k, v] : metrics) doc["metrics"][k] = v;
    text::atomic_write_file(path, doc.dump(2) + "\n");
}

inline std::string format_metric_table(const std::map<std::string, double>& metrics) {
    size_t width = 0;
    for (const auto& [k, _] : metrics) width = std::max(width, k.size());
    std::string out;
    char buf[64];
    for (const auto& [k, v] : metrics) {
        std::snprintf(buf, sizeof buf, "%.4f", v);
        out += k + std::string(width - k.size() + 2, ' ') + buf + "\n";
    }
    return out;
}

inline std::string format_variance_table(const std::map<std::string, Stats>& stats) {
    size_t width = std::string("metric").size();
    for (const auto& [k, _] : stats) width = std::max(width, k.size());
    std::string out = "metric" + std::string(width - 6 + 2, ' ') +
                      "mean     stddev   min      max\n";
    char buf[128];
    for (const auto& [k, s] : stats) {
        std::snprintf(buf, sizeof buf, "%-8.4f %-8.4f %-8.4f %-8.4f", s.mean, s.stddev, s.min,
                      s.max);
        out += k + std::string(width - k.size() + 2, ' ') + buf + "\n";
    }
    return out;
}

} // namespace bioqa::metrics
