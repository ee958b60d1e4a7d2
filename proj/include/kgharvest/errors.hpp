// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace kgharvest {

// Bad configuration or arguments: maps to CLI exit code 1.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A caller violated an operation's contract (programming error).
struct ContractError : std::logic_error {
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

// Unrecoverable runtime failure: maps to CLI exit code 3.
struct FatalError : std::runtime_error {
    explicit FatalError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace kgharvest
