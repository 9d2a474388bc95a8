#include <cstdio>

#include "pinn/verify.hpp"

// Standalone acceptance gate: runs the nine numbered suites and prints one
// line per criterion. Exit status is the number of failing criteria.

int main() {
    const auto results = pinn::run_suites({}, /*include_supplementary=*/false);
    int failed = 0;
    for (const auto& r : results) {
        std::printf("%s criterion %d (%s): %s [%.1fs]\n", r.pass ? "PASS" : "FAIL", r.criterion,
                    r.name.c_str(), r.detail.c_str(), r.seconds);
        for (const auto& n : r.notes) std::printf("        %s\n", n.c_str());
        std::fflush(stdout);
        failed += r.pass ? 0 : 1;
    }
    std::printf("%d/%zu criteria met\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed;
}
