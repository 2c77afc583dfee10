#pragma once

#include <map>
#include <string>

#include "macft/param.hpp"
#include "macft/tensor.hpp"

namespace macft {

// Flat binary container for named tensors. Layout (all integers 64-bit
// little-endian unless noted): 8-byte magic "MACFTCKP", u32 version, u64
// tensor count; then per tensor: u64 name length, UTF-8 name bytes, u64 rank,
// u64 dims[rank], fp64 payload. Round-trips are bit-exact.
void save_checkpoint(const std::string& path, const ParamRefs& params);

std::map<std::string, Tensor> read_checkpoint(const std::string& path);

// Loads values into the given parameters; every parameter must be present in
// the file with a matching shape. Extra tensors in the file are an error when
// `strict` (the default).
void load_checkpoint(const std::string& path, const ParamRefs& params, bool strict = true);

}  // namespace macft
