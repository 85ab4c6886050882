// Runs every acceptance preset at desk scale and prints one PASS/FAIL line
// per criterion. Bundles go to $FDIFF_OUTPUT_ROOT or ./acceptance-out.

#include <array>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fdiff/presets.hpp"

using namespace fdiff;

namespace {

const std::map<int, std::string> kCriteria = {
    {1, "particle periods, Poincare section"},
    {2, "particle periods, spectral peak"},
    {3, "noise regimes"},
    {4, "planar equilibria"},
    {5, "closure critical noise"},
    {6, "closure oscillations"},
    {7, "propagation of chaos rate"},
    {8, "gaussian approximation order"},
    {9, "Fokker-Planck densities"},
    {10, "closure identities"},
};

struct Verdict {
    bool passed = true;
    bool seen = false;
    std::vector<std::string> details;
};

}  // namespace

int main() {
    const char* env = std::getenv("FDIFF_OUTPUT_ROOT");
    const std::string root = env && *env ? env : "acceptance-out";
    const std::uint64_t seed = 1;

    std::map<int, Verdict> verdicts;
    const std::array<const char*, 11> order = {"fig3",  "fig8",  "closure",     "fig6",        "chaos",      "tilde",
                                               "fig2",  "fig4",  "table1-row1", "table1-row2", "table1-row3"};
    for (const char* name : order) {
        try {
            const PresetResult r = run_preset(name, seed, Scale::desk, root);
            for (const auto& c : r.checks) {
                Verdict& v = verdicts[c.criterion];
                v.seen = true;
                v.passed = v.passed && c.passed;
                v.details.push_back(std::string(c.passed ? "ok " : "NOT ") + c.name + ": " + c.detail);
            }
            std::cerr << name << " done in " << r.wall_seconds << " s\n";
        } catch (const std::exception& e) {
            for (int c : find_preset(name).criteria) {
                Verdict& v = verdicts[c];
                v.seen = true;
                v.passed = false;
                v.details.push_back(std::string(name) + " raised: " + e.what());
            }
        }
    }

    int failures = 0;
    for (const auto& [id, title] : kCriteria) {
        const Verdict& v = verdicts[id];
        const bool ok = v.seen && v.passed;
        failures += !ok;
        std::cout << (ok ? "PASS" : "FAIL") << "  criterion " << id << "  " << title;
        if (!v.seen) std::cout << "  (no preset produced a check)";
        std::cout << "\n";
        for (const auto& d : v.details) std::cout << "      " << d << "\n";
    }
    std::cout << (10 - failures) << "/10 criteria passed\n";
    return failures == 0 ? 0 : 1;
}
