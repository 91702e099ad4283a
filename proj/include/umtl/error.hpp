#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace umtl {

// Every failure path carries a stable machine-parsable code. The CLI prints
// "umtl: <code>: <message>" on one line and exits nonzero.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

    std::string line() const { return code_ + ": " + what(); }

private:
    std::string code_;
};

namespace errc {
inline constexpr const char* config = "E_CONFIG";
inline constexpr const char* io = "E_IO";
inline constexpr const char* digest = "E_DIGEST";
inline constexpr const char* shape = "E_SHAPE";
inline constexpr const char* degenerate = "E_DEGENERATE";
inline constexpr const char* empty = "E_EMPTY";
inline constexpr const char* state = "E_STATE";
inline constexpr const char* diverged = "E_DIVERGED";
inline constexpr const char* single_class = "E_SINGLE_CLASS";
}  // namespace errc

inline void check(bool cond, const char* code, const std::string& message) {
    if (!cond) throw Error(code, message);
}

}  // namespace umtl
