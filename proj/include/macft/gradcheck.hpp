#pragma once

#include <functional>
#include <string>
#include <vector>

#include "macft/param.hpp"
#include "macft/rng.hpp"

namespace macft {

// Result of comparing one parameter's analytical gradient against central
// differences at a sampled set of coordinates.
struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    std::size_t checked = 0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    bool all_passed = true;
    double worst_rel_err = 0.0;
    std::string worst_name;
};

// loss() must run a full forward pass and return the scalar objective;
// grad() must zero parameter gradients, run forward+backward once and leave
// the analytical gradients on the parameters. Each parameter is perturbed at
// up to `samples_per_param` coordinates (all of them if the tensor is small).
GradCheckReport gradcheck(const ParamRefs& params, const std::function<double()>& loss,
                          const std::function<void()>& grad, double epsilon = 1e-5,
                          double tolerance = 1e-6, int samples_per_param = 16,
                          std::uint64_t seed = 17);

std::string format_report(const GradCheckReport& report);

}  // namespace macft
