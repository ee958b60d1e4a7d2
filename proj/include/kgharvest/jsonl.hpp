// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace kgharvest {

using json = nlohmann::json;

inline std::vector<json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<json> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        rows.push_back(json::parse(line));
    }
    return rows;
}

inline void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&)>& fn) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        fn(json::parse(line));
    }
}

inline void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& row : rows) out << row.dump() << '\n';
}

// Append-only writer, one JSON object per line. Appends are serialized so
// concurrent workers never interleave partial lines.
class JsonlAppender {
public:
    explicit JsonlAppender(std::filesystem::path path) : path_(std::move(path)) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        out_.open(path_, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open " + path_.string());
    }

    void append(const json& row) {
        std::lock_guard<std::mutex> lock(mu_);
        out_ << row.dump() << '\n';
        out_.flush();
    }

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::ofstream out_;
    std::mutex mu_;
};

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return json::parse(in);
}

inline void write_json_file(const std::filesystem::path& path, const json& value, int indent = 2) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << value.dump(indent) << '\n';
}

}  // namespace kgharvest
