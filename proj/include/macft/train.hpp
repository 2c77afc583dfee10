#pragma once

#include <string>
#include <vector>

#include "macft/dataset.hpp"
#include "macft/model.hpp"
#include "macft/objectives.hpp"
#include "macft/optim.hpp"
#include "macft/sampling.hpp"

namespace macft {

struct StageConfig {
    int stage = 1;
    int epochs = 2;
    int samples_per_epoch = 512;
    int batch = 16;
    double lr_backbone = 1e-4;  // branch embeds + encoder stacks
    double lr_rest = 1e-3;      // fusion + corner head
    LossWeights weights;
};

struct TrainResult {
    struct Row {
        int step = 0;
        double loss = 0.0, giou = 0.0, l1 = 0.0, kl = 0.0;
    };
    std::vector<Row> trace;
};

// Runs one training stage on the model in place. Stage 1 trains the RGB then
// the TIR specific branch sequentially (single-branch variants train only
// their branch); stage 2 trains the shared branch through the min-of-modality
// objective plus the divergence term; stage 3 trains fusion + head with all
// backbones frozen. Frozen parameters are checksum-verified unchanged.
TrainResult train_stage(MacftModel& model, const StageConfig& cfg, const SampleConfig& scfg,
                        const std::vector<SequencePair>& data, std::uint64_t master_seed);

// Which stages apply to a variant (e.g. single-branch variants only stage 1).
std::vector<int> stages_for_variant(VariantId v);

void write_loss_csv(const std::string& path, const std::vector<TrainResult::Row>& rows);
// Creates the file, or appends with the step numbering continued from the
// rows already present (stages trained into one directory share the trace).
void append_loss_csv(const std::string& path, std::vector<TrainResult::Row> rows);

}  // namespace macft
