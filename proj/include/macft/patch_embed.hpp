#pragma once

#include "macft/nn.hpp"

namespace macft {

// [H x W x C] image -> [N x P*P*C] patch matrix, row-major patch order
// (top-left to bottom-right), each row a flattened P x P x C block.
Tensor patchify(const Tensor& img, int patch);
// Exact inverse of patchify (test support).
Tensor unpatchify(const Tensor& patches, int height, int width, int channels, int patch);

// Fixed 2D sinusoidal table over a grid_w x grid_h patch grid. Rows are
// ordered like patchify output; dim must be divisible by 4 (the four quarters
// hold sin/cos of the x index and sin/cos of the y index across a geometric
// frequency ladder).
Tensor sinusoid_pos_table(int grid_w, int grid_h, int dim);

struct PatchEmbedCache {
    Tensor search_patches;
    Tensor template_patches;
    Tensor pos_hidden;  // pre-activation hidden of the template positional MLP
};

// Shared patch projection for template and search crops, plus positional
// encodings: a fixed sinusoidal table for the search grid and a learnable
// two-layer MLP over normalized patch-center coordinates for the template.
class PatchEmbed {
  public:
    PatchEmbed() = default;
    PatchEmbed(const std::string& prefix, int search_size, int template_size, int patch, int dim,
               Rng& rng);

    Tensor embed_search(const Tensor& img, PatchEmbedCache& cache) const;
    Tensor embed_template(const Tensor& img, PatchEmbedCache& cache) const;
    void backward_search(const PatchEmbedCache& cache, const Tensor& dtokens);
    void backward_template(const PatchEmbedCache& cache, const Tensor& dtokens);

    void collect(ParamRefs& out);
    void set_trainable(bool on);

    int n_search() const { return n_search_; }
    int n_template() const { return n_template_; }
    int patch() const { return patch_; }

    Linear proj;              // [P*P*3 x D]
    Linear pos_fc1, pos_fc2;  // template positional MLP: 2 -> D -> D
    Tensor search_pos;        // fixed [N_x x D]
    Tensor template_centers;  // [N_z x 2] normalized patch centers

  private:
    int patch_ = 0, n_search_ = 0, n_template_ = 0;
};

}  // namespace macft
