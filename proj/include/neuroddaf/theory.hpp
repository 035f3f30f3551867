#pragma once
// Mechanized verification of the standing theory assumptions: contractive
// diffusion, norm-preserving advection, nonexpansive spectral prior,
// residual-size stability, integrator order and fusion/uncertainty identities.

#include <cstdint>
#include <string>
#include <vector>

namespace neuroddaf::theory {

struct CheckResult {
    int item = 0;           // standing-assumption checklist item 1..6
    std::string name;       // lemma/theorem-level check name
    bool pass = false;
    std::string detail;     // measured quantity vs. tolerance
};

// Runs the full suite. Deterministic given the seed.
std::vector<CheckResult> run_all(std::uint64_t seed);

bool all_passed(const std::vector<CheckResult>& results);

// Aligned pass/fail matrix, one line per check, keyed by item and name.
std::string format_report(const std::vector<CheckResult>& results);

} // namespace neuroddaf::theory
