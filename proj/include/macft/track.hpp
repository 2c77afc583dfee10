#pragma once

#include <vector>

#include "macft/dataset.hpp"
#include "macft/model.hpp"
#include "macft/sampling.hpp"

namespace macft {

// Runs the model over a sequence: templates are cut once from the annotated
// first frame and kept fixed; every frame (including the first) is predicted
// from a search crop centered on the previous output box. No online update.
std::vector<Box> track_sequence(const MacftModel& model, const SequencePair& seq,
                                const SampleConfig& cfg);

}  // namespace macft
