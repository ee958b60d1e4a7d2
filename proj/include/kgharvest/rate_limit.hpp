// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <unordered_map>

namespace kgharvest {

// Token bucket; acquire() blocks until a token is available.
class TokenBucket {
public:
    TokenBucket(double tokens_per_sec, double burst)
        : rate_(tokens_per_sec), burst_(burst), tokens_(burst),
          last_(std::chrono::steady_clock::now()) {}

    void acquire() {
        std::unique_lock<std::mutex> lock(mu_);
        refill();
        while (tokens_ < 1.0) {
            double deficit = 1.0 - tokens_;
            auto wait = std::chrono::duration<double>(deficit / rate_);
            cv_.wait_for(lock, wait);
            refill();
        }
        tokens_ -= 1.0;
    }

private:
    void refill() {
        auto now = std::chrono::steady_clock::now();
        double elapsed = std::chrono::duration<double>(now - last_).count();
        tokens_ = std::min(burst_, tokens_ + elapsed * rate_);
        last_ = now;
    }

    double rate_;
    double burst_;
    double tokens_;
    std::chrono::steady_clock::time_point last_;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;

    std::chrono::milliseconds backoff_for(int attempt) const {
        double ms = static_cast<double>(initial_backoff.count());
        for (int i = 0; i < attempt; ++i) ms *= multiplier;
        return std::chrono::milliseconds(static_cast<long long>(ms));
    }
};

// Serializes requests per host: one in flight at a time, with a minimum
// delay between the end of one request and the start of the next.
class HostThrottle {
public:
    explicit HostThrottle(std::chrono::milliseconds delay) : delay_(delay) {}

    // Runs fn while holding the host's slot.
    template <typename Fn>
    auto with_host(const std::string& host, Fn&& fn) -> decltype(fn()) {
        HostState* state;
        {
            std::lock_guard<std::mutex> lock(mu_);
            state = &hosts_[host];
        }
        std::unique_lock<std::mutex> host_lock(state->mu);
        auto now = std::chrono::steady_clock::now();
        if (state->next_allowed > now) std::this_thread::sleep_until(state->next_allowed);
        auto done = [&] { state->next_allowed = std::chrono::steady_clock::now() + delay_; };
        if constexpr (std::is_void_v<decltype(fn())>) {
            fn();
            done();
        } else {
            auto result = fn();
            done();
            return result;
        }
    }

private:
    struct HostState {
        std::mutex mu;
        std::chrono::steady_clock::time_point next_allowed{};
    };

    std::chrono::milliseconds delay_;
    std::mutex mu_;
    std::unordered_map<std::string, HostState> hosts_;
};

}  // namespace kgharvest
