// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <unordered_map>

#include "kgharvest/jsonl.hpp"

namespace kgharvest {

inline std::string iso8601_utc(std::time_t t) {
    char buf[32];
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string now_iso8601() {
    return iso8601_utc(std::chrono::system_clock::to_time_t(std::chrono::system_clock::now()));
}

// Append-only progress log keyed by item id. Loading replays the file, so
// the latest status per id wins and a restart resumes where it left off.
class CheckpointStore {
public:
    explicit CheckpointStore(std::filesystem::path path, bool fixed_timestamps = false)
        : path_(std::move(path)), fixed_timestamps_(fixed_timestamps) {
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        if (std::filesystem::exists(path_)) {
            for_each_jsonl(path_, [&](const json& row) {
                status_[row.at("id").get<std::string>()] = row.at("status").get<std::string>();
            });
        }
        out_.open(path_, std::ios::app);
        if (!out_) throw std::runtime_error("cannot open checkpoint " + path_.string());
    }

    bool is_done(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = status_.find(id);
        return it != status_.end() && it->second == "done";
    }

    std::string status(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = status_.find(id);
        return it == status_.end() ? "" : it->second;
    }

    void record(const std::string& id, const std::string& status, const json& extra = json::object()) {
        json row = extra;
        row["id"] = id;
        row["status"] = status;
        row["ts"] = fixed_timestamps_ ? iso8601_utc(0) : now_iso8601();
        std::lock_guard<std::mutex> lock(mu_);
        status_[id] = status;
        out_ << row.dump() << '\n';
        out_.flush();
    }

    size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return status_.size();
    }

private:
    std::filesystem::path path_;
    bool fixed_timestamps_;
    std::unordered_map<std::string, std::string> status_;
    std::ofstream out_;
    mutable std::mutex mu_;
};

}  // namespace kgharvest
