#pragma once

#include <vector>

#include "macft/backbone.hpp"
#include "macft/nn.hpp"

namespace macft {

// Rows n_template..end of a joint sequence (the search-aligned part).
// Requires real partition metadata: re-selecting an already-selected stream
// is an error, not a no-op.
Tensor select_search_part(const TokenSequence& seq);

struct CamCache {
    LayerNormCache ln1_a, ln1_b, ln2_a, ln2_b;
    Tensor na, nb;  // pre-norm outputs feeding the cross attention
    AttentionCache attn_ab, attn_ba;
    Tensor a1, b1;  // post-attention residuals
    FfnCache ffn_a, ffn_b;
};

// Cross-attention-only block over a stream pair: queries from each stream
// attend to the other. One shared q/k/v/out projection, norm and FFN serve
// both streams (the projections act on the concatenated pair, so the two
// directions share weights).
class CamBlock {
  public:
    CamBlock() = default;
    CamBlock(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng);

    void forward(const Tensor& a, const Tensor& b, Tensor& out_a, Tensor& out_b,
                 CamCache& cache) const;
    // Gradients of the block inputs; accumulates param grads.
    void backward(const CamCache& cache, const Tensor& dout_a, const Tensor& dout_b, Tensor& da,
                  Tensor& db);

    void collect(ParamRefs& out);

    MultiHeadAttention attn;
    LayerNorm ln1, ln2;
    Ffn ffn;
};

struct MamCache {
    Tensor concat_in;  // row-concatenated pair fed to the inner layer
    EncoderLayerCache layer;
};

// Mixed-attention block: full self-attention over the row-concatenation of
// the pair (self + cross blocks in one attention), then split back. Shares
// the encoder layer implementation, which makes the equivalence with
// unpartitioned self-attention exact.
class MamBlock {
  public:
    MamBlock() = default;
    MamBlock(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng);

    void forward(const Tensor& a, const Tensor& b, Tensor& out_a, Tensor& out_b,
                 MamCache& cache) const;
    void backward(const MamCache& cache, const Tensor& dout_a, const Tensor& dout_b, Tensor& da,
                  Tensor& db);

    void collect(ParamRefs& out);

    EncoderLayer layer;
};

struct FusionConfig {
    int dim = 32;   // channel dim C (== backbone D)
    int k = 6;      // depth of the late attention stack
    int heads = 4;
    int ffn_mult = 4;
};

// Which pieces the fusion network is built from (ablation variants):
//  Dm        - channel concat of the two specific streams + one affine merge
//  DmCam     - K cascaded cross-attention blocks over the specific pair
//  DmMam     - K cascaded mixed-attention blocks over the specific pair
//  Full      - early cross pairing with the shared branch + MAM stack
//  FullCamCom- as Full but the late stack uses CAM blocks instead of MAM
enum class FusionKind { Dm, DmCam, DmMam, Full, FullCamCom };

struct FusionCache {
    Tensor rvx, rtx, gvx, gtx;  // selected search parts (kept for shape info)
    CamCache cam_vt, cam_tv;
    Tensor cat_vt, cat_tv;  // channel concats feeding the early reductions
    std::vector<CamCache> stack_cam;
    std::vector<MamCache> stack_mam;
    Tensor cat_out;  // channel concat feeding the final reduction
    bool has_shared = false;
};

class FusionNetwork {
  public:
    FusionNetwork() = default;
    FusionNetwork(const std::string& prefix, FusionKind kind, const FusionConfig& cfg, Rng& rng);

    // g_v/g_t are required for Full/FullCamCom and must be null otherwise.
    // Output is [N_x x C]. Passing a cache retains state for backward.
    Tensor fuse(const TokenSequence& r_v, const TokenSequence& r_t, const TokenSequence* g_v,
                const TokenSequence* g_t, FusionCache* cache = nullptr) const;

    struct InputGrads {
        Tensor d_rvx, d_rtx;  // grads of the selected specific search parts
        Tensor d_gvx, d_gtx;  // grads of the selected shared parts (when used)
    };
    InputGrads backward(const FusionCache& cache, const Tensor& dout);

    void collect(ParamRefs& out);
    void set_trainable(bool on);

    FusionKind kind() const { return kind_; }
    const FusionConfig& config() const { return cfg_; }

    CamBlock cam_vt, cam_tv;      // early interaction (Full/FullCamCom)
    Linear dr_vt, dr_tv;          // early per-stream reductions 2C -> C
    std::vector<CamBlock> stack_cam;
    std::vector<MamBlock> stack_mam;
    Linear dr_out;  // final reduction 2C -> C

  private:
    FusionKind kind_ = FusionKind::Full;
    FusionConfig cfg_;
};

}  // namespace macft
