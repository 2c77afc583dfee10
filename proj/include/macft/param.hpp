#pragma once

#include <string>
#include <vector>

#include "macft/tensor.hpp"

namespace macft {

// A named trainable tensor. Gradient storage lives inside the tensor and is
// only allocated once the parameter is marked trainable, so inference-only
// models never pay for it.
struct Param {
    std::string name;
    Tensor value;
    bool trainable = false;

    Param() = default;
    Param(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

    void set_trainable(bool on) {
        trainable = on;
        value.set_requires_grad(on);
    }
};

using ParamRefs = std::vector<Param*>;

// Order-sensitive checksum over parameter values; used to verify that frozen
// parameters are bit-identical before and after a training stage.
std::uint64_t params_checksum(const ParamRefs& params);

}  // namespace macft
