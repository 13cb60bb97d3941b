#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mflqg {

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Thrown by parse_args when --help is requested; carries the help text.
struct HelpRequested : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Command { Solve, Simulate, Verify, AlExample };

struct RunConfig {
    Command command = Command::AlExample;
    std::string scenario_path;
    std::optional<double> dt_override;
    long long paths = 20000;
    unsigned long long seed = 42;
    std::string out_dir = ".";
    std::string format = "csv";  // csv | json
    bool gzip = false;
};

// Throws UsageError on bad flags; `al-example` and `verify` need no scenario.
RunConfig parse_args(const std::vector<std::string>& argv);

// Exit codes: 0 success, 1 validation/gate failure, 2 numerical blow-up,
// 3 verification failure, 64 usage.
int execute(const RunConfig& config);

int run_cli(int argc, char** argv);

} // namespace mflqg
