#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace mflqg {

struct ParseError : std::runtime_error {
    int line;
    std::string key;
    ParseError(const std::string& msg, int line_, std::string key_ = {})
        : std::runtime_error("parse error (line " + std::to_string(line_) +
                             (key_.empty() ? "" : ", key '" + key_ + "'") + "): " + msg),
          line(line_), key(std::move(key_)) {}
};

struct DimensionError : std::runtime_error {
    std::string key;
    DimensionError(const std::string& key_, const std::string& msg)
        : std::runtime_error("dimension mismatch for '" + key_ + "': " + msg), key(key_) {}
};

struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GateRejection : std::runtime_error {
    std::vector<std::string> violations;
    explicit GateRejection(std::vector<std::string> v)
        : std::runtime_error("special-case gate rejected: " + join(v)), violations(std::move(v)) {}
    static std::string join(const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) { if (!s.empty()) s += ", "; s += x; }
        return s;
    }
};

struct BlowUpError : std::runtime_error {
    double t;
    explicit BlowUpError(double t_, double norm)
        : std::runtime_error("solution norm blow-up at t = " + std::to_string(t_) +
                             " (max-norm " + std::to_string(norm) + ")"),
          t(t_) {}
};

struct SimulationError : std::runtime_error {
    int step;
    SimulationError(const std::string& msg, int step_)
        : std::runtime_error(msg + " at step " + std::to_string(step_)), step(step_) {}
};

} // namespace mflqg
