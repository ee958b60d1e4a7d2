// SPDX-License-Identifier: Apache-2.0
//
// Shared lifecycle for the localhost mock servers used by tests and the
// dry-run subcommand. Binds an ephemeral 127.0.0.1 port and serves from a
// background thread until destroyed.
#pragma once

#include <atomic>
#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include <httplib.h>

namespace kgharvest {

class MockHttpServer {
public:
    MockHttpServer() = default;
    virtual ~MockHttpServer() { stop(); }

    MockHttpServer(const MockHttpServer&) = delete;
    MockHttpServer& operator=(const MockHttpServer&) = delete;

    void start() {
        if (thread_.joinable()) return;
        port_ = server_.bind_to_any_port("127.0.0.1");
        if (port_ <= 0) throw std::runtime_error("mock server: cannot bind a port");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        while (!server_.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }

    void stop() {
        if (!thread_.joinable()) return;
        server_.stop();
        thread_.join();
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int request_count() const { return request_count_.load(); }
    void reset_request_count() { request_count_ = 0; }

protected:
    void count_request() { ++request_count_; }

    httplib::Server server_;

private:
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> request_count_{0};
};

}  // namespace kgharvest
