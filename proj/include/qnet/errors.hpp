#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace qnet {

// Exception with a stable, machine-readable failure code ("invalid-routing",
// "refuse-unstable", ...) next to the human-readable message. Callers that
// branch on failure kind match on code(), never on what().
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace qnet
