#pragma once

// End-to-end acceptance suite: twelve numbered criteria, each evaluated from
// closed-loop runs of the preset scenarios and reported as one pass/fail line.

#include <iosfwd>
#include <string>
#include <vector>

namespace scinv {

struct CriterionResult {
    int id = 0;
    std::string title;
    bool pass = false;
    std::vector<std::string> checks;  // "name: value vs bound -> ok/FAIL"
};

struct AcceptanceOptions {
    unsigned workers = 0;          // 0 = hardware concurrency
    bool step_size_study = true;   // rerun every preset at dt_sim / 2
    bool verbose = false;          // print individual checks under each line
};

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opt = {});

/// "[PASS] 1 five-level synthesis" style line, followed by the checks when verbose.
void print_acceptance(const std::vector<CriterionResult>& results, std::ostream& out, bool verbose);

}  // namespace scinv
