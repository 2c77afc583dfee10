#pragma once

#include <string>

#include "macft/model.hpp"
#include "macft/objectives.hpp"
#include "macft/sampling.hpp"
#include "macft/train.hpp"

namespace macft {

// Everything a run needs, parseable from a flat key=value file with section
// prefixes (model.dim=32). '#' starts a comment; unknown keys are rejected.
// emit_config(parse_config_text(emit_config(c))) is byte-identical.
struct RunConfig {
    std::string variant = "full";
    std::uint64_t seed = 1234;
    std::string train_data;  // dataset directory for training
    std::string eval_data;   // dataset directory for held-out evaluation
    ModelConfig model;
    SampleConfig sample;  // sizes are synced from model in finalize_config
    struct TrainSchedule {
        int epochs = 2;
        int samples_per_epoch = 512;
        int batch = 16;
        double lr_backbone = 1e-4;
        double lr_rest = 1e-3;
    } train;
    LossWeights loss;
};

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);
// "key=value" override (the --set flag).
void apply_override(RunConfig& cfg, const std::string& keyval);
// Canonical text form, fixed key order, round-trips exactly.
std::string emit_config(const RunConfig& cfg);
// Sync derived fields (sample crop sizes) and validate invariants.
void finalize_config(RunConfig& cfg);

}  // namespace macft
