#include "macft/model.hpp"

#include "macft/common.hpp"

namespace macft {

void ModelConfig::validate() const {
    check(patch > 0 && search_size > 0 && template_size > 0, "geometry must be positive");
    check(search_size % patch == 0, "patch ", patch, " must divide search size ", search_size);
    check(template_size % patch == 0, "patch ", patch, " must divide template size ",
          template_size);
    check(dim % 4 == 0, "dim ", dim, " must be divisible by 4 (positional table quarters)");
    check(dim % heads == 0, "dim ", dim, " must be divisible by heads ", heads);
    check(dim % 16 == 0, "dim ", dim, " must be divisible by 16 (corner head reduction)");
    check(depth >= 1, "depth must be >= 1");
    check(freeze_count >= 0 && freeze_count <= depth, "freeze_count ", freeze_count,
          " outside [0, ", depth, "]");
    check(fusion_k >= 1, "fusion_k must be >= 1");
}

VariantId parse_variant(const std::string& name) {
    if (name == "b-rgb") return VariantId::BRgb;
    if (name == "b-t") return VariantId::BT;
    if (name == "dm") return VariantId::Dm;
    if (name == "dm-cam") return VariantId::DmCam;
    if (name == "dm-mam") return VariantId::DmMam;
    if (name == "dm-cam-com") return VariantId::DmCamCom;
    if (name == "full") return VariantId::Full;
    check(false, "unknown variant: ", name,
          " (expected b-rgb|b-t|dm|dm-cam|dm-mam|dm-cam-com|full)");
    return VariantId::Full;
}

std::string variant_name(VariantId v) {
    switch (v) {
        case VariantId::BRgb: return "b-rgb";
        case VariantId::BT: return "b-t";
        case VariantId::Dm: return "dm";
        case VariantId::DmCam: return "dm-cam";
        case VariantId::DmMam: return "dm-mam";
        case VariantId::DmCamCom: return "dm-cam-com";
        case VariantId::Full: return "full";
    }
    return "?";
}

bool variant_uses_rgb(VariantId v) { return v != VariantId::BT; }
bool variant_uses_tir(VariantId v) { return v != VariantId::BRgb; }
bool variant_uses_shared(VariantId v) {
    return v == VariantId::DmCamCom || v == VariantId::Full;
}
bool variant_uses_fusion(VariantId v) {
    return v != VariantId::BRgb && v != VariantId::BT;
}

namespace {
// rng stream ids per component, stable across variants so shared pieces
// initialize identically
enum : std::uint64_t {
    kSeedEmbRgb = 1,
    kSeedBbRgb = 2,
    kSeedEmbTir = 3,
    kSeedBbTir = 4,
    kSeedEmbShared = 5,
    kSeedBbShared = 6,
    kSeedFusion = 7,
    kSeedHead = 8,
};

FusionKind fusion_kind_for(VariantId v) {
    switch (v) {
        case VariantId::Dm: return FusionKind::Dm;
        case VariantId::DmCam: return FusionKind::DmCam;
        case VariantId::DmMam: return FusionKind::DmMam;
        case VariantId::DmCamCom: return FusionKind::FullCamCom;
        default: return FusionKind::Full;
    }
}
}  // namespace

MacftModel::MacftModel(VariantId variant, const ModelConfig& cfg, std::uint64_t seed)
    : variant_(variant), cfg_(cfg) {
    cfg.validate();
    BackboneConfig bb_cfg{cfg.depth, cfg.dim, cfg.heads, cfg.ffn_mult, cfg.freeze_count};
    auto make_embed = [&](const char* prefix, std::uint64_t purpose) {
        Rng rng = Rng::derive(seed, purpose);
        return std::make_unique<PatchEmbed>(prefix, cfg.search_size, cfg.template_size, cfg.patch,
                                            cfg.dim, rng);
    };
    auto make_backbone = [&](const char* prefix, std::uint64_t purpose) {
        Rng rng = Rng::derive(seed, purpose);
        return std::make_unique<Backbone>(prefix, bb_cfg, rng);
    };
    if (variant_uses_rgb(variant)) {
        emb_rgb = make_embed("rgb.embed", kSeedEmbRgb);
        bb_rgb = make_backbone("rgb.backbone", kSeedBbRgb);
    }
    if (variant_uses_tir(variant)) {
        emb_tir = make_embed("tir.embed", kSeedEmbTir);
        bb_tir = make_backbone("tir.backbone", kSeedBbTir);
    }
    if (variant_uses_shared(variant)) {
        emb_shared = make_embed("shared.embed", kSeedEmbShared);
        bb_shared = make_backbone("shared.backbone", kSeedBbShared);
    }
    if (variant_uses_fusion(variant)) {
        FusionConfig fcfg{cfg.dim, cfg.fusion_k, cfg.heads, cfg.ffn_mult};
        Rng rng = Rng::derive(seed, kSeedFusion);
        fusion = std::make_unique<FusionNetwork>("fusion", fusion_kind_for(variant), fcfg, rng);
    }
    Rng rng = Rng::derive(seed, kSeedHead);
    head = CornerHead("head", cfg.dim, rng);
}

TokenSequence MacftModel::run_branch(const PatchEmbed& emb, const Backbone& bb,
                                     const Tensor& z_img, const Tensor& x_img,
                                     PatchEmbedCache* emb_cache, BackboneCache* bb_cache) const {
    PatchEmbedCache scratch;
    PatchEmbedCache& ec = emb_cache ? *emb_cache : scratch;
    Tensor z_tokens = emb.embed_template(z_img, ec);
    Tensor x_tokens = emb.embed_search(x_img, ec);
    return bb.forward(z_tokens, x_tokens, bb_cache);
}

NormBox MacftModel::forward_single(bool rgb, const Tensor& z_img, const Tensor& x_img,
                                   SingleState* state) const {
    const PatchEmbed& emb = rgb ? *emb_rgb : *emb_tir;
    const Backbone& bb = rgb ? *bb_rgb : *bb_tir;
    (rgb ? rgb_forwards_ : tir_forwards_)++;
    SingleState local;
    SingleState& st = state ? *state : local;
    st.seq = run_branch(emb, bb, z_img, x_img, &st.emb, state ? &st.bb : nullptr);
    st.feat = select_search_part(st.seq);
    st.corners = head.forward(st.feat, st.head);
    st.box = corners_to_box(st.corners);
    return st.box;
}

void MacftModel::backward_single(bool rgb, SingleState& state, const NormBox& dbox) {
    Corners dcorners;
    corners_to_box_backward(state.corners, dbox, dcorners);
    Tensor dfeat = head.backward(state.head, dcorners);
    // scatter the search-part gradient back into the joint sequence
    Tensor dseq({state.seq.tokens.rows(), state.seq.tokens.cols()});
    const std::size_t offset =
        static_cast<std::size_t>(state.seq.n_template) * state.seq.tokens.cols();
    for (std::size_t i = 0; i < dfeat.size(); ++i) dseq[offset + i] = dfeat[i];
    Backbone& bb = rgb ? *bb_rgb : *bb_tir;
    PatchEmbed& emb = rgb ? *emb_rgb : *emb_tir;
    Tensor dtokens = bb.backward(state.bb, dseq);
    Tensor dz = slice_rows(dtokens, 0, state.seq.n_template);
    Tensor dx = slice_rows(dtokens, state.seq.n_template, dtokens.rows());
    emb.backward_template(state.emb, dz);
    emb.backward_search(state.emb, dx);
}

void MacftModel::forward_shared_pair(const Tensor& z_rgb, const Tensor& x_rgb,
                                     const Tensor& z_tir, const Tensor& x_tir,
                                     SharedState& state) const {
    check(emb_shared && bb_shared, "variant ", variant_name(variant_), " has no shared branch");
    shared_forwards_ += 2;
    state.g_v = run_branch(*emb_shared, *bb_shared, z_rgb, x_rgb, &state.emb_v, &state.bb_v);
    state.g_t = run_branch(*emb_shared, *bb_shared, z_tir, x_tir, &state.emb_t, &state.bb_t);
    state.feat_v = select_search_part(state.g_v);
    state.feat_t = select_search_part(state.g_t);
    state.c_v = head.forward(state.feat_v, state.head_v);
    state.c_t = head.forward(state.feat_t, state.head_t);
    state.b_v = corners_to_box(state.c_v);
    state.b_t = corners_to_box(state.c_t);
    state.kl = kl_divergence_loss(state.g_v.tokens, state.g_t.tokens);
}

void MacftModel::backward_shared_pair(SharedState& state, const NormBox& dbox_v,
                                      const NormBox& dbox_t, double dkl) {
    const int cols = state.g_v.tokens.cols();
    Tensor dg_v({state.g_v.tokens.rows(), cols});
    Tensor dg_t({state.g_t.tokens.rows(), cols});
    if (dkl != 0.0) kl_divergence_backward(state.kl, dkl, dg_v, dg_t);

    auto add_box_path = [&](const NormBox& dbox, const Corners& corners, CornerHeadCache& hc,
                            Tensor& dg, int n_template) {
        if (dbox.cx == 0.0 && dbox.cy == 0.0 && dbox.w == 0.0 && dbox.h == 0.0) return;
        Corners dcorners;
        corners_to_box_backward(corners, dbox, dcorners);
        Tensor dfeat = head.backward(hc, dcorners);
        const std::size_t offset = static_cast<std::size_t>(n_template) * cols;
        for (std::size_t i = 0; i < dfeat.size(); ++i) dg[offset + i] += dfeat[i];
    };
    add_box_path(dbox_v, state.c_v, state.head_v, dg_v, state.g_v.n_template);
    add_box_path(dbox_t, state.c_t, state.head_t, dg_t, state.g_t.n_template);

    Tensor dtok_v = bb_shared->backward(state.bb_v, dg_v);
    Tensor dtok_t = bb_shared->backward(state.bb_t, dg_t);
    emb_shared->backward_template(state.emb_v, slice_rows(dtok_v, 0, state.g_v.n_template));
    emb_shared->backward_search(state.emb_v,
                                slice_rows(dtok_v, state.g_v.n_template, dtok_v.rows()));
    emb_shared->backward_template(state.emb_t, slice_rows(dtok_t, 0, state.g_t.n_template));
    emb_shared->backward_search(state.emb_t,
                                slice_rows(dtok_t, state.g_t.n_template, dtok_t.rows()));
}

NormBox MacftModel::forward_fused(const Tensor& z_rgb, const Tensor& x_rgb, const Tensor& z_tir,
                                  const Tensor& x_tir, FusedState* state,
                                  bool cache_backbones) const {
    check(fusion != nullptr, "variant ", variant_name(variant_), " has no fusion path");
    FusedState local;
    FusedState& st = state ? *state : local;
    st.backbones_cached = state && cache_backbones;
    BackboneCache* cr = st.backbones_cached ? &st.bb_rgb : nullptr;
    BackboneCache* ct = st.backbones_cached ? &st.bb_tir : nullptr;

    rgb_forwards_++;
    st.r_v = run_branch(*emb_rgb, *bb_rgb, z_rgb, x_rgb, &st.emb_rgb, cr);
    tir_forwards_++;
    st.r_t = run_branch(*emb_tir, *bb_tir, z_tir, x_tir, &st.emb_tir, ct);

    const TokenSequence* g_v = nullptr;
    const TokenSequence* g_t = nullptr;
    if (variant_uses_shared(variant_)) {
        shared_forwards_ += 2;
        BackboneCache* cv = st.backbones_cached ? &st.bb_shv : nullptr;
        BackboneCache* cth = st.backbones_cached ? &st.bb_sht : nullptr;
        st.g_v = run_branch(*emb_shared, *bb_shared, z_rgb, x_rgb, &st.emb_shv, cv);
        st.g_t = run_branch(*emb_shared, *bb_shared, z_tir, x_tir, &st.emb_sht, cth);
        g_v = &st.g_v;
        g_t = &st.g_t;
    }
    st.fused = fusion->fuse(st.r_v, st.r_t, g_v, g_t, state ? &st.fusion : nullptr);
    st.corners = head.forward(st.fused, st.head);
    st.box = corners_to_box(st.corners);
    return st.box;
}

void MacftModel::backward_fused(FusedState& state, const NormBox& dbox) {
    Corners dcorners;
    corners_to_box_backward(state.corners, dbox, dcorners);
    Tensor dfused = head.backward(state.head, dcorners);
    FusionNetwork::InputGrads g = fusion->backward(state.fusion, dfused);
    if (!state.backbones_cached) return;  // backbones frozen: gradient stops here

    auto through_branch = [&](PatchEmbed& emb, Backbone& bb, PatchEmbedCache& ec,
                              BackboneCache& bc, const TokenSequence& seq, const Tensor& dsel) {
        Tensor dseq({seq.tokens.rows(), seq.tokens.cols()});
        const std::size_t offset =
            static_cast<std::size_t>(seq.n_template) * seq.tokens.cols();
        for (std::size_t i = 0; i < dsel.size(); ++i) dseq[offset + i] = dsel[i];
        Tensor dtokens = bb.backward(bc, dseq);
        emb.backward_template(ec, slice_rows(dtokens, 0, seq.n_template));
        emb.backward_search(ec, slice_rows(dtokens, seq.n_template, dtokens.rows()));
    };
    through_branch(*emb_rgb, *bb_rgb, state.emb_rgb, state.bb_rgb, state.r_v, g.d_rvx);
    through_branch(*emb_tir, *bb_tir, state.emb_tir, state.bb_tir, state.r_t, g.d_rtx);
    if (variant_uses_shared(variant_)) {
        through_branch(*emb_shared, *bb_shared, state.emb_shv, state.bb_shv, state.g_v, g.d_gvx);
        through_branch(*emb_shared, *bb_shared, state.emb_sht, state.bb_sht, state.g_t, g.d_gtx);
    }
}

NormBox MacftModel::predict(const Tensor& z_rgb, const Tensor& x_rgb, const Tensor& z_tir,
                            const Tensor& x_tir) const {
    switch (variant_) {
        case VariantId::BRgb: return forward_single(true, z_rgb, x_rgb);
        case VariantId::BT: return forward_single(false, z_tir, x_tir);
        default: return forward_fused(z_rgb, x_rgb, z_tir, x_tir);
    }
}

ParamRefs MacftModel::params_all() {
    ParamRefs out;
    if (emb_rgb) emb_rgb->collect(out);
    if (bb_rgb) bb_rgb->collect(out);
    if (emb_tir) emb_tir->collect(out);
    if (bb_tir) bb_tir->collect(out);
    if (emb_shared) emb_shared->collect(out);
    if (bb_shared) bb_shared->collect(out);
    if (fusion) fusion->collect(out);
    head.collect(out);
    return out;
}

ParamRefs MacftModel::params_backbones() {
    ParamRefs out;
    if (emb_rgb) emb_rgb->collect(out);
    if (bb_rgb) bb_rgb->collect(out);
    if (emb_tir) emb_tir->collect(out);
    if (bb_tir) bb_tir->collect(out);
    if (emb_shared) emb_shared->collect(out);
    if (bb_shared) bb_shared->collect(out);
    return out;
}

ParamRefs MacftModel::params_rest() {
    ParamRefs out;
    if (fusion) fusion->collect(out);
    head.collect(out);
    return out;
}

ParamRefs MacftModel::params_branch_rgb() {
    ParamRefs out;
    if (emb_rgb) emb_rgb->collect(out);
    if (bb_rgb) bb_rgb->collect(out);
    return out;
}

ParamRefs MacftModel::params_branch_tir() {
    ParamRefs out;
    if (emb_tir) emb_tir->collect(out);
    if (bb_tir) bb_tir->collect(out);
    return out;
}

ParamRefs MacftModel::params_branch_shared() {
    ParamRefs out;
    if (emb_shared) emb_shared->collect(out);
    if (bb_shared) bb_shared->collect(out);
    return out;
}

ParamRefs MacftModel::params_head() {
    ParamRefs out;
    head.collect(out);
    return out;
}

ParamRefs MacftModel::params_fusion() {
    ParamRefs out;
    if (fusion) fusion->collect(out);
    return out;
}

void MacftModel::set_all_trainable(bool on) {
    for (Param* p : params_all()) p->set_trainable(on);
}

void MacftModel::set_stage_trainable(int stage, bool rgb_phase) {
    set_all_trainable(false);
    const int f = cfg_.freeze_count;
    switch (stage) {
        case 1: {
            if (rgb_phase) {
                check(bb_rgb != nullptr, "stage 1 RGB phase needs the RGB branch");
                emb_rgb->set_trainable(true);
                bb_rgb->set_trainable(true, f);
            } else {
                check(bb_tir != nullptr, "stage 1 TIR phase needs the TIR branch");
                emb_tir->set_trainable(true);
                bb_tir->set_trainable(true, f);
            }
            head.set_trainable(true);
            break;
        }
        case 2: {
            check(bb_shared != nullptr, "stage 2 needs the shared branch");
            emb_shared->set_trainable(true);
            bb_shared->set_trainable(true, f);
            head.set_trainable(true);
            break;
        }
        case 3: {
            check(fusion != nullptr, "stage 3 needs the fusion network");
            fusion->set_trainable(true);
            head.set_trainable(true);
            break;
        }
        default:
            check(false, "unknown training stage ", stage);
    }
}

}  // namespace macft
