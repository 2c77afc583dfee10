#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "macft/gradcheck.hpp"

namespace macft {

struct SuiteCheck {
    std::string name;
    GradCheckReport report;
};

// Central-difference verification of every differentiable operation, each
// network module, and the three training objectives end to end at the small
// default geometry (32x32 search, 16x16 template, P=4, D=32, L=2, K=2).
// Every check runs once per seed with freshly drawn fixtures.
struct GradSuiteResult {
    std::vector<SuiteCheck> checks;
    bool all_passed = true;
    double worst_rel_err = 0.0;
    std::string worst_check;
};

GradSuiteResult run_gradient_suite(std::uint64_t master_seed, int n_seeds = 5,
                                   double epsilon = 1e-5, double tolerance = 1e-4,
                                   std::ostream* log = nullptr);

}  // namespace macft
