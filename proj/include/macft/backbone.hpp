#pragma once

#include <string>
#include <vector>

#include "macft/nn.hpp"

namespace macft {

struct BackboneConfig {
    int depth = 2;         // encoder layers L
    int dim = 32;          // token dim D
    int heads = 4;         // attention heads
    int ffn_mult = 4;      // FFN hidden = ffn_mult * dim
    int freeze_count = 0;  // layers [0, F) excluded from training
};

// Joint template+search token sequence, template rows first.
struct TokenSequence {
    Tensor tokens;  // [(n_template + n_search) x D]
    int n_template = 0;
    int n_search = 0;
};

struct BackboneCache {
    std::vector<Tensor> layer_inputs;
    std::vector<EncoderLayerCache> layers;
    LayerNormCache final_ln;
    int n_template = 0, n_search = 0;
};

// One-stream transformer branch: attention runs over the concatenated
// template+search sequence, so every layer mixes the two groups (the four
// template/search attention blocks are sub-blocks of one full attention).
class Backbone {
  public:
    Backbone() = default;
    Backbone(const std::string& prefix, const BackboneConfig& cfg, Rng& rng);

    // Token inputs must already carry positional encodings. Passing a cache
    // retains per-layer state for backward and attention export; without one,
    // a single scratch cache is reused (constant memory).
    TokenSequence forward(const Tensor& z_tokens, const Tensor& x_tokens,
                          BackboneCache* cache = nullptr) const;
    // Encoder stack only (no final norm); with all attention/FFN weights zero
    // this is the identity, which the tests assert bitwise.
    Tensor forward_stack(const Tensor& tokens, BackboneCache* cache = nullptr) const;

    // Returns the gradient w.r.t. the concatenated input tokens.
    Tensor backward(const BackboneCache& cache, const Tensor& dy);

    void collect(ParamRefs& out);
    // Layer l becomes trainable iff `on` and l >= freeze_count; the final
    // norm follows `on`.
    void set_trainable(bool on, int freeze_count);
    ParamRefs frozen_params(int freeze_count);

    const BackboneConfig& config() const { return cfg_; }

    std::vector<EncoderLayer> layers;
    LayerNorm final_ln;

  private:
    BackboneConfig cfg_;
};

// Attention blocks of one (layer, head): the four template/search sub-blocks
// of the recorded full attention matrix, in order z->z, z->x, x->z, x->x.
struct AttentionBlocks {
    Tensor zz, zx, xz, xx;
};

AttentionBlocks split_attention_blocks(const Tensor& attn_rows, int head, int n_q_template,
                                       int n_k_template);
// Extracts blocks from a recorded forward cache; throws if the cache was not
// populated (export requires a cached forward).
AttentionBlocks export_attention(const BackboneCache& cache, int layer, int head);
// Writes the four blocks as CSV and min-max normalized PGM heatmaps named
// L{layer}_H{head}_{block}.{csv,pgm} inside `dir`.
void write_attention_export(const std::string& dir, const BackboneCache& cache, int layer,
                            int head);

}  // namespace macft
