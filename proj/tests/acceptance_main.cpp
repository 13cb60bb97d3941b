// Acceptance suite runner: prints one pass/fail line per criterion check and
// exits nonzero if any fails. Path counts and seeds follow the library gate
// defaults; MFLQG_ACCEPT_PATHS overrides for quick local runs.
#include <cstdio>
#include <cstdlib>

#include "mflqg/verify.hpp"

int main() {
    mflqg::AcceptanceConfig cfg;
    if (const char* env = std::getenv("MFLQG_ACCEPT_PATHS")) {
        long long p = std::atoll(env);
        if (p > 1) cfg.paths = p;
    }
    mflqg::VerifyReport rep = mflqg::run_acceptance(cfg);
    int failed = 0;
    for (const auto& c : rep.checks) {
        std::printf("%s %-28s statistic=%-14.6g threshold=%-14.6g %s\n",
                    c.pass ? "PASS" : "FAIL", c.name.c_str(), c.statistic, c.threshold,
                    c.detail.c_str());
        if (!c.pass) ++failed;
    }
    std::printf("%d/%zu checks passed\n", static_cast<int>(rep.checks.size()) - failed,
                rep.checks.size());
    return failed == 0 ? 0 : 1;
}
