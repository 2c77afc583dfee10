#pragma once

#include <string>
#include <vector>

#include "macft/box.hpp"
#include "macft/tensor.hpp"

namespace macft {

// An aligned RGB/TIR sequence with per-frame ground truth. Frames are loaded
// lazily from disk unless the sequence was synthesized in memory.
struct SequencePair {
    std::string name;
    std::vector<std::string> rgb_paths, tir_paths;
    std::vector<Tensor> rgb_mem, tir_mem;  // in-memory frames (synthesis)
    std::vector<Box> gt;
    std::vector<std::string> attributes;

    int size() const { return static_cast<int>(gt.size()); }
    Tensor rgb_frame(int i) const;
    Tensor tir_frame(int i) const;
};

// Frame range [begin, end) with either additive Gaussian pixel noise or a
// full blank-out (frame replaced by pure noise).
struct CorruptionRange {
    int begin = 0, end = 0;
    double noise_sigma = 0.0;
    bool blank = false;
};

struct SynthConfig {
    std::string name = "seq";
    int frames = 30;
    int canvas = 64;
    double target_size = 12.0;  // nominal square side, pixels
    double size_drift = 0.0;    // relative sinusoidal size modulation
    double amp_x = 10.0;        // trajectory amplitudes, pixels
    double amp_y = 6.0;
    double period = 20.0;  // frames per trajectory cycle
    double phase = 0.0;
    std::vector<CorruptionRange> rgb_corruption, tir_corruption;
    std::uint64_t seed = 1;
    std::vector<std::string> attributes;

    void validate() const;
};

// Bright square (RGB) / hot Gaussian blob (TIR) moving on a sinusoidal
// trajectory over textured noise; ground truth follows analytically.
SequencePair synth_sequence(const SynthConfig& cfg);

// Directory layout: <dir>/rgb/*.png, <dir>/tir/*.pgm, gt.txt ("x,y,w,h" per
// frame), optional attributes.json.
void write_sequence(const std::string& dir, const SequencePair& seq);
SequencePair load_sequence(const std::string& dir);

// All sequence subdirectories of `dir`, sorted by name.
std::vector<SequencePair> load_dataset(const std::string& dir);

// Deterministic family of varied synthetic sequences (trajectory, size and
// texture differ per sequence). corrupt selects which modality gets a strong
// corruption window covering half of every sequence: "none", "rgb", "tir",
// or "mixed" (alternates per sequence).
std::vector<SynthConfig> benchmark_specs(int sequences, int frames, std::uint64_t master_seed,
                                         const std::string& corrupt = "none");
std::vector<SequencePair> synth_dataset(const std::vector<SynthConfig>& specs);

}  // namespace macft
