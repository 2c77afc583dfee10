#pragma once

#include <memory>
#include <string>

#include "macft/backbone.hpp"
#include "macft/corner_head.hpp"
#include "macft/fusion.hpp"
#include "macft/patch_embed.hpp"
#include "macft/shared_branch.hpp"

namespace macft {

struct ModelConfig {
    int search_size = 32;
    int template_size = 16;
    int patch = 4;
    int dim = 32;
    int depth = 2;         // backbone layers per branch
    int heads = 4;
    int ffn_mult = 4;
    int freeze_count = 0;  // backbone layers kept frozen during fine-tuning
    int fusion_k = 6;      // late fusion stack depth

    int n_search() const {
        const int g = search_size / patch;
        return g * g;
    }
    int n_template() const {
        const int g = template_size / patch;
        return g * g;
    }
    void validate() const;
};

// Ablation lineup: single-modality baselines, concat-only dual-modal, pure
// cross/mixed attention stacks, the CAM-everywhere variant, and the complete
// model.
enum class VariantId { BRgb, BT, Dm, DmCam, DmMam, DmCamCom, Full };

VariantId parse_variant(const std::string& name);
std::string variant_name(VariantId v);
bool variant_uses_tir(VariantId v);
bool variant_uses_rgb(VariantId v);
bool variant_uses_shared(VariantId v);
bool variant_uses_fusion(VariantId v);

// Forward state for a single-branch pass (one modality in, box out).
struct SingleState {
    PatchEmbedCache emb;
    BackboneCache bb;
    TokenSequence seq;
    Tensor feat;  // selected search part
    CornerHeadCache head;
    Corners corners;
    NormBox box;
};

// Forward state for the shared branch driven by both modalities (the
// divergence-training path: per-modality boxes from one parameter set).
struct SharedState {
    PatchEmbedCache emb_v, emb_t;
    BackboneCache bb_v, bb_t;
    TokenSequence g_v, g_t;
    Tensor feat_v, feat_t;
    CornerHeadCache head_v, head_t;
    Corners c_v, c_t;
    NormBox b_v, b_t;
    KlResult kl;
};

// Forward state for the fused path (everything up to the corner head).
struct FusedState {
    PatchEmbedCache emb_rgb, emb_tir, emb_shv, emb_sht;
    BackboneCache bb_rgb, bb_tir, bb_shv, bb_sht;
    bool backbones_cached = false;
    TokenSequence r_v, r_t, g_v, g_t;
    FusionCache fusion;
    Tensor fused;
    CornerHeadCache head;
    Corners corners;
    NormBox box;
};

class MacftModel {
  public:
    MacftModel(VariantId variant, const ModelConfig& cfg, std::uint64_t seed);

    VariantId variant() const { return variant_; }
    const ModelConfig& config() const { return cfg_; }

    // --- forward/backward paths ------------------------------------------
    // One modality through its specific branch to a box. rgb selects branch.
    NormBox forward_single(bool rgb, const Tensor& z_img, const Tensor& x_img,
                           SingleState* state = nullptr) const;
    void backward_single(bool rgb, SingleState& state, const NormBox& dbox);

    // Shared branch on both modality pairs; per-modality boxes + divergence.
    void forward_shared_pair(const Tensor& z_rgb, const Tensor& x_rgb, const Tensor& z_tir,
                             const Tensor& x_tir, SharedState& state) const;
    // dbox_* from the stage-2 objective (zero for the unselected branch),
    // dkl the upstream coefficient on the divergence loss.
    void backward_shared_pair(SharedState& state, const NormBox& dbox_v, const NormBox& dbox_t,
                              double dkl);

    // Full fused pipeline (variants with two specific branches). Set
    // cache_backbones when gradients must flow past the fusion inputs.
    NormBox forward_fused(const Tensor& z_rgb, const Tensor& x_rgb, const Tensor& z_tir,
                          const Tensor& x_tir, FusedState* state = nullptr,
                          bool cache_backbones = false) const;
    void backward_fused(FusedState& state, const NormBox& dbox);

    // Variant dispatch for inference (unused modality may be empty).
    NormBox predict(const Tensor& z_rgb, const Tensor& x_rgb, const Tensor& z_tir,
                    const Tensor& x_tir) const;

    // --- parameters -------------------------------------------------------
    ParamRefs params_all();
    ParamRefs params_backbones();  // all branch embeds + encoder stacks
    ParamRefs params_rest();       // fusion + head
    ParamRefs params_branch_rgb();
    ParamRefs params_branch_tir();
    ParamRefs params_branch_shared();
    ParamRefs params_head();
    ParamRefs params_fusion();

    void set_all_trainable(bool on);
    // Stage trainability per the training plan; freeze_count applies inside
    // each trained backbone.
    void set_stage_trainable(int stage, bool rgb_phase = true);

    // per-branch forward counters (ablation instrumentation)
    std::int64_t rgb_forward_count() const { return rgb_forwards_; }
    std::int64_t tir_forward_count() const { return tir_forwards_; }
    std::int64_t shared_forward_count() const { return shared_forwards_; }

    std::unique_ptr<PatchEmbed> emb_rgb, emb_tir, emb_shared;
    std::unique_ptr<Backbone> bb_rgb, bb_tir, bb_shared;
    std::unique_ptr<FusionNetwork> fusion;
    CornerHead head;

  private:
    TokenSequence run_branch(const PatchEmbed& emb, const Backbone& bb, const Tensor& z_img,
                             const Tensor& x_img, PatchEmbedCache* emb_cache,
                             BackboneCache* bb_cache) const;

    VariantId variant_;
    ModelConfig cfg_;
    mutable std::int64_t rgb_forwards_ = 0, tir_forwards_ = 0, shared_forwards_ = 0;
};

}  // namespace macft
