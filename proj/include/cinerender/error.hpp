#pragma once

#include <stdexcept>
#include <string>

namespace cinerender {

/// Exception carrying a stable machine-readable code (surfaced by the service
/// as the "error" field and by the CLI as the exit message prefix).
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string &message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string &code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace cinerender
