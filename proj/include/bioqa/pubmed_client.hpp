#pragma once

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "bioqa/cassette.hpp"
#include "bioqa/core.hpp"
#include "bioqa/errors.hpp"
#include "bioqa/text.hpp"

namespace bioqa::pubmed {

struct SearchRequest {
    std::string query;            // PubMed boolean syntax, field tags allowed
    std::string max_date;         // ISO date; publication-date cutoff
    int limit = 50;
};

struct Article {
    std::string pmid;
    std::string title;
    std::optional<std::string> abstract;
};

/// Articles in input order plus explicit markers for PMIDs the server did
/// not return; nothing is silently dropped.
struct FetchOutcome {
    std::vector<Article> articles;
    std::vector<std::string> missing_pmids;
};

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

class HttpFetcher {
public:
    virtual ~HttpFetcher() = default;
    /// GET the given path+query (relative to the eUtils base). Returns the
    /// response body; throws TransportError or ScriptMiss.
    virtual std::string get(const std::string& path_and_query) = 0;
};

class LiveFetcher : public HttpFetcher {
public:
    explicit LiveFetcher(std::string base_url,
                         std::chrono::seconds timeout = std::chrono::seconds(60))
        : base_url_(std::move(base_url)), timeout_(timeout) {}

    std::string get(const std::string& path_and_query) override {
        auto scheme_end = base_url_.find("://");
        size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
        auto slash = base_url_.find('/', host_start);
        std::string host = slash == std::string::npos ? base_url_ : base_url_.substr(0, slash);
        std::string prefix = slash == std::string::npos ? "" : base_url_.substr(slash);
        while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

        httplib::Client client(host);
        client.set_connection_timeout(timeout_);
        client.set_read_timeout(timeout_);
        auto res = client.Get(prefix + path_and_query);
        if (!res)
            throw TransportError("eUtils request failed: " + httplib::to_string(res.error()),
                                 /*retryable=*/true);
        if (res->status == 429 || res->status >= 500)
            throw TransportError("eUtils HTTP " + std::to_string(res->status),
                                 /*retryable=*/true, res->status);
        if (res->status != 200)
            throw TransportError("eUtils HTTP " + std::to_string(res->status),
                                 /*retryable=*/false, res->status);
        return res->body;
    }

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

/// Replays recorded response bodies keyed by path+query.
class ReplayFetcher : public HttpFetcher {
public:
    ReplayFetcher() = default;
    explicit ReplayFetcher(std::map<std::string, std::string> entries)
        : entries_(std::move(entries)) {}

    static std::shared_ptr<ReplayFetcher> from_cassette(const std::filesystem::path& path) {
        return std::make_shared<ReplayFetcher>(load_cassette(path));
    }

    void add(const std::string& path_and_query, std::string body) {
        entries_[path_and_query] = std::move(body);
    }

    std::string get(const std::string& path_and_query) override {
        auto it = entries_.find(path_and_query);
        if (it == entries_.end())
            throw ScriptMiss("no recorded response for " + path_and_query);
        return it->second;
    }

private:
    std::map<std::string, std::string> entries_;
};

class RecordingFetcher : public HttpFetcher {
public:
    RecordingFetcher(std::shared_ptr<HttpFetcher> inner, std::filesystem::path cassette)
        : inner_(std::move(inner)), cassette_(std::move(cassette)) {
        if (std::filesystem::exists(cassette_)) entries_ = load_cassette(cassette_);
    }

    std::string get(const std::string& path_and_query) override {
        {
            std::lock_guard lock(mutex_);
            auto it = entries_.find(path_and_query);
            if (it != entries_.end()) return it->second;
        }
        std::string body = inner_->get(path_and_query);
        std::lock_guard lock(mutex_);
        auto [it, inserted] = entries_.emplace(path_and_query, body);
        if (inserted) save_cassette(cassette_, entries_);
        return it->second;
    }

private:
    std::shared_ptr<HttpFetcher> inner_;
    std::filesystem::path cassette_;
    std::map<std::string, std::string> entries_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// Rate limiting
// ---------------------------------------------------------------------------

/// Sliding-window limiter: at most floor(rps) admissions per rolling second
/// (for rps < 1, one admission per 1/rps seconds). Thread-safe.
class RateLimiter {
public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit RateLimiter(
        double rps,
        Clock clock = [] { return std::chrono::steady_clock::now(); },
        Sleeper sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
        : clock_(std::move(clock)), sleeper_(std::move(sleeper)) {
        if (rps >= 1.0) {
            max_in_window_ = static_cast<size_t>(rps);
            window_ = std::chrono::milliseconds(1000);
        } else {
            max_in_window_ = 1;
            window_ = std::chrono::milliseconds(static_cast<int64_t>(std::ceil(1000.0 / rps)));
        }
    }

    void acquire() {
        std::unique_lock lock(mutex_);
        for (;;) {
            auto now = clock_();
            while (!admissions_.empty() && now - admissions_.front() >= window_)
                admissions_.pop_front();
            if (admissions_.size() < max_in_window_) {
                admissions_.push_back(now);
                return;
            }
            auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(
                            admissions_.front() + window_ - now) +
                        std::chrono::milliseconds(1);
            lock.unlock();
            sleeper_(wait);
            lock.lock();
        }
    }

private:
    Clock clock_;
    Sleeper sleeper_;
    size_t max_in_window_ = 3;
    std::chrono::milliseconds window_{1000};
    std::deque<std::chrono::steady_clock::time_point> admissions_;
    std::mutex mutex_;
};

// ---------------------------------------------------------------------------
// eUtils payload parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::string percent_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    out.reserve(s.size());
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

inline std::string decode_entities(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    size_t i = 0;
    while (i < s.size()) {
        if (s[i] != '&') {
            out.push_back(s[i++]);
            continue;
        }
        auto semi = s.find(';', i);
        if (semi == std::string_view::npos || semi - i > 10) {
            out.push_back(s[i++]);
            continue;
        }
        std::string_view ent = s.substr(i + 1, semi - i - 1);
        if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "amp") out.push_back('&');
        else if (ent == "quot") out.push_back('"');
        else if (ent == "apos") out.push_back('\'');
        else if (!ent.empty() && ent[0] == '#') {
            char32_t cp = 0;
            bool ok = true;
            if (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')) {
                for (size_t k = 2; k < ent.size() && ok; ++k) {
                    char c = ent[k];
                    int d = (c >= '0' && c <= '9')   ? c - '0'
                            : (c >= 'a' && c <= 'f') ? c - 'a' + 10
                            : (c >= 'A' && c <= 'F') ? c - 'A' + 10
                                                     : -1;
                    if (d < 0) ok = false;
                    else cp = cp * 16 + static_cast<char32_t>(d);
                }
                ok = ok && ent.size() > 2;
            } else {
                for (size_t k = 1; k < ent.size() && ok; ++k) {
                    if (ent[k] < '0' || ent[k] > '9') ok = false;
                    else cp = cp * 10 + static_cast<char32_t>(ent[k] - '0');
                }
                ok = ok && ent.size() > 1;
            }
            if (ok && cp > 0) text::append_utf8(out, cp);
            else out.append(s.substr(i, semi - i + 1));
        } else {
            out.append(s.substr(i, semi - i + 1));
        }
        i = semi + 1;
    }
    return out;
}

inline std::string strip_tags(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_tag = false;
    for (char c : s) {
        if (c == '<') in_tag = true;
        else if (c == '>') in_tag = false;
        else if (!in_tag) out.push_back(c);
    }
    return out;
}

/// Inner text of the first <tag ...>...</tag>; inline markup stripped,
/// entities decoded.
inline std::optional<std::string> first_tag_text(std::string_view xml, std::string_view tag) {
    std::string open_a = "<" + std::string(tag) + ">";
    std::string open_b = "<" + std::string(tag) + " ";
    std::string close = "</" + std::string(tag) + ">";
    size_t start = xml.find(open_a);
    size_t content_start;
    if (start != std::string_view::npos) {
        content_start = start + open_a.size();
    } else {
        start = xml.find(open_b);
        if (start == std::string_view::npos) return std::nullopt;
        auto gt = xml.find('>', start);
        if (gt == std::string_view::npos) return std::nullopt;
        content_start = gt + 1;
    }
    auto end = xml.find(close, content_start);
    if (end == std::string_view::npos) return std::nullopt;
    return decode_entities(strip_tags(xml.substr(content_start, end - content_start)));
}

inline std::vector<std::string> all_tag_texts(std::string_view xml, std::string_view tag) {
    std::vector<std::string> out;
    std::string close = "</" + std::string(tag) + ">";
    size_t pos = 0;
    while (pos < xml.size()) {
        auto rest = xml.substr(pos);
        auto text_opt = first_tag_text(rest, tag);
        if (!text_opt) break;
        out.push_back(*text_opt);
        auto end = rest.find(close);
        pos += end + close.size();
    }
    return out;
}

/// Top-level <PubmedArticle> blocks ("<PubmedArticleSet>" must not match).
inline std::vector<std::string> article_blocks(std::string_view xml) {
    std::vector<std::string> out;
    size_t pos = 0;
    const std::string close = "</PubmedArticle>";
    while (pos < xml.size()) {
        auto start = xml.find("<PubmedArticle", pos);
        while (start != std::string_view::npos) {
            char next = start + 14 < xml.size() ? xml[start + 14] : '\0';
            if (next == '>' || next == ' ') break;
            start = xml.find("<PubmedArticle", start + 1);
        }
        if (start == std::string_view::npos) break;
        auto end = xml.find(close, start);
        if (end == std::string_view::npos) break;
        out.emplace_back(xml.substr(start, end + close.size() - start));
        pos = end + close.size();
    }
    return out;
}

inline std::string to_eutils_date(const std::string& iso) {
    // "2022-12-31" -> "2022/12/31"
    std::string d = iso;
    for (auto& c : d)
        if (c == '-') c = '/';
    return d;
}

} // namespace detail

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

struct ClientOptions {
    double requests_per_second = 3.0;
    int retry_max = 5;
    std::chrono::milliseconds retry_base_delay{500};
    std::string api_key; // optional NCBI key
    RateLimiter::Clock clock = [] { return std::chrono::steady_clock::now(); };
    RateLimiter::Sleeper sleeper = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };
    uint64_t jitter_seed = std::random_device{}();
};

class PubMedClient {
public:
    PubMedClient(std::shared_ptr<HttpFetcher> fetcher, ClientOptions options = {})
        : fetcher_(std::move(fetcher)), options_(options),
          limiter_(options.requests_per_second, options.clock, options.sleeper),
          jitter_rng_(options.jitter_seed) {}

    std::string esearch_path(const SearchRequest& req) const {
        std::string p = "/esearch.fcgi?db=pubmed&term=" + detail::percent_encode(req.query) +
                        "&sort=relevance&retmax=" + std::to_string(req.limit) +
                        "&datetype=pdat&maxdate=" +
                        detail::percent_encode(detail::to_eutils_date(req.max_date)) +
                        "&retmode=json";
        if (!options_.api_key.empty()) p += "&api_key=" + detail::percent_encode(options_.api_key);
        return p;
    }

    std::string efetch_path(const std::vector<std::string>& pmids) const {
        std::string ids = text::join(pmids, ",");
        std::string p = "/efetch.fcgi?db=pubmed&id=" + ids + "&retmode=xml";
        if (!options_.api_key.empty()) p += "&api_key=" + detail::percent_encode(options_.api_key);
        return p;
    }

    /// Relevance-ordered PMIDs, at most req.limit, publication date <= max_date.
    /// An empty list is a valid outcome.
    std::vector<std::string> search(const SearchRequest& req) {
        if (req.query.empty()) throw SchemaError("search query must be nonempty");
        if (req.limit < 1) throw SchemaError("search limit must be >= 1");
        std::string body = get_with_retry(esearch_path(req));
        Json doc = Json::parse(body, nullptr, false);
        if (doc.is_discarded()) throw ParseError("esearch returned non-JSON payload");
        if (doc.contains("error"))
            throw QuerySyntaxRejected("eUtils rejected request: " + doc["error"].dump());
        if (!doc.contains("esearchresult"))
            throw ParseError("esearch payload missing esearchresult");
        const Json& res = doc["esearchresult"];
        if (res.contains("ERROR"))
            throw QuerySyntaxRejected("eUtils rejected query: " + res["ERROR"].dump());
        std::vector<std::string> pmids;
        if (res.contains("idlist"))
            for (const auto& id : res["idlist"]) {
                std::string pmid = id.get<std::string>();
                if (!is_valid_pmid(pmid)) throw ParseError("esearch returned bad PMID: " + pmid);
                pmids.push_back(std::move(pmid));
            }
        if (pmids.size() > static_cast<size_t>(req.limit)) pmids.resize(req.limit);
        return pmids;
    }

    /// Titles/abstracts for the given PMIDs, order-preserving.
    FetchOutcome fetch_articles(const std::vector<std::string>& pmids) {
        if (pmids.empty()) throw SchemaError("fetch_articles requires at least one PMID");
        for (const auto& p : pmids)
            if (!is_valid_pmid(p)) throw SchemaError("invalid PMID: \"" + p + "\"");

        std::string body = get_with_retry(efetch_path(pmids));
        auto blocks = detail::article_blocks(body);
        if (blocks.empty() && body.find("<PubmedArticleSet") == std::string::npos)
            throw ParseError("efetch payload is not PubmedArticleSet XML");

        std::map<std::string, Article> by_pmid;
        for (const auto& block : blocks) {
            auto pmid = detail::first_tag_text(block, "PMID");
            auto title = detail::first_tag_text(block, "ArticleTitle");
            if (!pmid || pmid->empty()) continue;
            Article a;
            a.pmid = text::trim(*pmid);
            if (!title || text::trim(*title).empty()) continue; // unusable record
            a.title = text::trim(*title);
            auto abs_parts = detail::all_tag_texts(block, "AbstractText");
            if (!abs_parts.empty()) {
                // eUtils splits structured abstracts into sections
                std::vector<std::string> trimmed;
                for (auto& part : abs_parts) {
                    auto t = text::trim(part);
                    if (!t.empty()) trimmed.push_back(std::move(t));
                }
                if (!trimmed.empty()) a.abstract = text::join(trimmed, " ");
            }
            by_pmid.emplace(a.pmid, std::move(a));
        }

        FetchOutcome out;
        for (const auto& pmid : pmids) {
            auto it = by_pmid.find(pmid);
            if (it == by_pmid.end()) out.missing_pmids.push_back(pmid);
            else out.articles.push_back(it->second);
        }
        return out;
    }

private:
    std::string get_with_retry(const std::string& path) {
        const int max_attempts = options_.retry_max + 1;
        std::string last_error;
        for (int attempt = 1; attempt <= max_attempts; ++attempt) {
            limiter_.acquire();
            try {
                return fetcher_->get(path);
            } catch (const TransportError& e) {
                last_error = e.what();
                if (!e.retryable())
                    throw TransportExhausted("non-retryable transport failure: " + last_error);
                if (attempt == max_attempts) break;
                double factor;
                {
                    std::lock_guard lock(jitter_mutex_);
                    factor = 1.0 + std::uniform_real_distribution<double>(0.0, 1.0)(jitter_rng_);
                }
                double ms = static_cast<double>(options_.retry_base_delay.count()) *
                            std::pow(2.0, attempt - 1) * factor;
                options_.sleeper(std::chrono::milliseconds(static_cast<int64_t>(ms)));
            }
        }
        throw TransportExhausted("gave up after " + std::to_string(max_attempts) +
                                 " attempts: " + last_error);
    }

    std::shared_ptr<HttpFetcher> fetcher_;
    ClientOptions options_;
    RateLimiter limiter_;
    std::mt19937_64 jitter_rng_;
    std::mutex jitter_mutex_;
};

} // namespace bioqa::pubmed
