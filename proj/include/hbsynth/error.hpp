#pragma once

#include <stdexcept>
#include <string>

namespace hbsynth {

/// Domain error carrying a short, stable message that callers and tests
/// can match on (e.g. "no predecessor beat", "gap out of bounds").
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

}  // namespace hbsynth
