#pragma once

#include <cstdint>
#include <vector>

#include "macft/param.hpp"

namespace macft {

// AdamW with decoupled weight decay. Parameters are registered in groups so
// different parts of the model can use different learning rates (e.g. a lower
// rate for backbone weights than for freshly initialised heads).
class AdamW {
  public:
    struct Group {
        ParamRefs params;
        double lr;
    };

    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
          double weight_decay = 1e-4)
        : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

    void add_group(ParamRefs params, double lr);

    // Applies one update using the gradients currently stored on each
    // parameter, then leaves the gradients untouched (callers zero them).
    void step();

    void zero_grad();

    std::int64_t steps_taken() const { return t_; }

  private:
    struct State {
        std::vector<double> m, v;
    };

    double beta1_, beta2_, eps_, weight_decay_;
    std::int64_t t_ = 0;
    std::vector<Group> groups_;
    std::vector<std::vector<State>> state_;  // parallel with groups_
};

}  // namespace macft
