#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "bioqa/errors.hpp"
#include "bioqa/text.hpp"

namespace bioqa {

// Record/replay cassettes: {"entries": {"<request key>": "<response body>"}}.
// The key is a chat-request fingerprint for the LLM gateway and the request
// path+query for the PubMed client.

inline std::map<std::string, std::string> load_cassette(const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::parse(text::read_file(path), nullptr, false);
    if (doc.is_discarded() || !doc.contains("entries") || !doc["entries"].is_object())
        throw SchemaError("not a cassette file: " + path.string());
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : doc["entries"].items()) out[k] = v.get<std::string>();
    return out;
}

inline void save_cassette(const std::filesystem::path& path,
                          const std::map<std::string, std::string>& entries) {
    nlohmann::ordered_json doc;
    doc["entries"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : entries) doc["entries"][k] = v;
    text::atomic_write_file(path, doc.dump(2) + "\n");
}

} // namespace bioqa
