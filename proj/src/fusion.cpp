#include "macft/fusion.hpp"

#include "macft/common.hpp"

namespace macft {

Tensor select_search_part(const TokenSequence& seq) {
    check(seq.n_template > 0 && seq.n_search > 0,
          "select_search_part needs partition metadata (already-selected streams cannot be "
          "re-selected)");
    check(seq.tokens.rows() == seq.n_template + seq.n_search, "partition (", seq.n_template, "+",
          seq.n_search, ") does not match token count ", seq.tokens.rows());
    return slice_rows(seq.tokens, seq.n_template, seq.n_template + seq.n_search);
}

CamBlock::CamBlock(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng)
    : attn(prefix + ".attn", dim, heads, rng),
      ln1(prefix + ".ln1", dim),
      ln2(prefix + ".ln2", dim),
      ffn(prefix + ".ffn", dim, ffn_hidden, rng) {}

void CamBlock::forward(const Tensor& a, const Tensor& b, Tensor& out_a, Tensor& out_b,
                       CamCache& cache) const {
    check(a.same_shape(b), "cross-attention streams must be aligned: ", a.shape_str(), " vs ",
          b.shape_str());
    cache.na = ln1.forward(a, cache.ln1_a);
    cache.nb = ln1.forward(b, cache.ln1_b);
    Tensor att_a = attn.forward(cache.na, cache.nb, cache.attn_ab);
    Tensor att_b = attn.forward(cache.nb, cache.na, cache.attn_ba);
    cache.a1 = a;
    cache.b1 = b;
    for (std::size_t i = 0; i < att_a.size(); ++i) cache.a1[i] += att_a[i];
    for (std::size_t i = 0; i < att_b.size(); ++i) cache.b1[i] += att_b[i];
    Tensor fa = ffn.forward(ln2.forward(cache.a1, cache.ln2_a), cache.ffn_a);
    out_a = cache.a1;
    for (std::size_t i = 0; i < fa.size(); ++i) out_a[i] += fa[i];
    Tensor fb = ffn.forward(ln2.forward(cache.b1, cache.ln2_b), cache.ffn_b);
    out_b = cache.b1;
    for (std::size_t i = 0; i < fb.size(); ++i) out_b[i] += fb[i];
}

void CamBlock::backward(const CamCache& cache, const Tensor& dout_a, const Tensor& dout_b,
                        Tensor& da, Tensor& db) {
    // out = s1 + ffn(ln2(s1)) per stream
    Tensor dn2a = ffn.backward(cache.ffn_a, dout_a);
    Tensor da1 = ln2.backward(cache.ln2_a, dn2a);
    for (std::size_t i = 0; i < da1.size(); ++i) da1[i] += dout_a[i];
    Tensor dn2b = ffn.backward(cache.ffn_b, dout_b);
    Tensor db1 = ln2.backward(cache.ln2_b, dn2b);
    for (std::size_t i = 0; i < db1.size(); ++i) db1[i] += dout_b[i];

    // s1 = s + attn(n_self, n_other); both directions feed both norms
    Tensor dna(cache.na.shape()), dnb(cache.nb.shape());
    attn.backward(cache.na, cache.nb, cache.attn_ab, da1, dna, dnb);
    attn.backward(cache.nb, cache.na, cache.attn_ba, db1, dnb, dna);

    da = ln1.backward(cache.ln1_a, dna);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += da1[i];
    db = ln1.backward(cache.ln1_b, dnb);
    for (std::size_t i = 0; i < db.size(); ++i) db[i] += db1[i];
}

void CamBlock::collect(ParamRefs& out) {
    attn.collect(out);
    ln1.collect(out);
    ln2.collect(out);
    ffn.collect(out);
}

MamBlock::MamBlock(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng)
    : layer(prefix, dim, heads, ffn_hidden, rng) {}

void MamBlock::forward(const Tensor& a, const Tensor& b, Tensor& out_a, Tensor& out_b,
                       MamCache& cache) const {
    check(a.same_shape(b), "mixed-attention streams must be aligned: ", a.shape_str(), " vs ",
          b.shape_str());
    cache.concat_in = concat_rows(a, b);
    Tensor y = layer.forward(cache.concat_in, cache.layer);
    out_a = slice_rows(y, 0, a.rows());
    out_b = slice_rows(y, a.rows(), y.rows());
}

void MamBlock::backward(const MamCache& cache, const Tensor& dout_a, const Tensor& dout_b,
                        Tensor& da, Tensor& db) {
    Tensor dy = concat_rows(dout_a, dout_b);
    Tensor dcat = layer.backward(cache.concat_in, cache.layer, dy);
    da = slice_rows(dcat, 0, dout_a.rows());
    db = slice_rows(dcat, dout_a.rows(), dcat.rows());
}

void MamBlock::collect(ParamRefs& out) { layer.collect(out); }

namespace {

void split_cols(const Tensor& x, Tensor& left, Tensor& right) {
    const int n = x.rows(), c = x.cols() / 2;
    left = Tensor({n, c});
    right = Tensor({n, c});
    for (int r = 0; r < n; ++r)
        for (int j = 0; j < c; ++j) {
            left.at(r, j) = x.at(r, j);
            right.at(r, j) = x.at(r, c + j);
        }
}

}  // namespace

FusionNetwork::FusionNetwork(const std::string& prefix, FusionKind kind, const FusionConfig& cfg,
                             Rng& rng)
    : kind_(kind), cfg_(cfg) {
    check(cfg.k >= 1, "fusion stack depth must be >= 1");
    check(cfg.dim % cfg.heads == 0, "fusion dim ", cfg.dim, " not divisible by heads ", cfg.heads);
    const int hidden = cfg.ffn_mult * cfg.dim;
    const bool shared = kind == FusionKind::Full || kind == FusionKind::FullCamCom;
    if (shared) {
        cam_vt = CamBlock(prefix + ".cam_vt", cfg.dim, cfg.heads, hidden, rng);
        cam_tv = CamBlock(prefix + ".cam_tv", cfg.dim, cfg.heads, hidden, rng);
        dr_vt = Linear(prefix + ".dr_vt", 2 * cfg.dim, cfg.dim, rng);
        dr_tv = Linear(prefix + ".dr_tv", 2 * cfg.dim, cfg.dim, rng);
    }
    if (kind != FusionKind::Dm) {
        const bool cam_stack = kind == FusionKind::DmCam || kind == FusionKind::FullCamCom;
        for (int i = 0; i < cfg.k; ++i) {
            const std::string name = prefix + ".stack." + std::to_string(i);
            if (cam_stack)
                stack_cam.emplace_back(name, cfg.dim, cfg.heads, hidden, rng);
            else
                stack_mam.emplace_back(name, cfg.dim, cfg.heads, hidden, rng);
        }
    }
    dr_out = Linear(prefix + ".dr_out", 2 * cfg.dim, cfg.dim, rng);
}

Tensor FusionNetwork::fuse(const TokenSequence& r_v, const TokenSequence& r_t,
                           const TokenSequence* g_v, const TokenSequence* g_t,
                           FusionCache* cache) const {
    const bool shared = kind_ == FusionKind::Full || kind_ == FusionKind::FullCamCom;
    check(shared == (g_v != nullptr && g_t != nullptr),
          "fusion kind and provided shared features disagree");
    FusionCache local;
    FusionCache& C = cache ? *cache : local;
    C.has_shared = shared;

    C.rvx = select_search_part(r_v);
    C.rtx = select_search_part(r_t);

    Tensor s_first, s_second;  // the pair entering the late stack
    if (shared) {
        C.gvx = select_search_part(*g_v);
        C.gtx = select_search_part(*g_t);
        Tensor a_vt, b_vt, a_tv, b_tv;
        cam_vt.forward(C.rvx, C.gtx, a_vt, b_vt, C.cam_vt);
        cam_tv.forward(C.rtx, C.gvx, a_tv, b_tv, C.cam_tv);
        C.cat_vt = concat_cols(a_vt, b_vt);
        C.cat_tv = concat_cols(a_tv, b_tv);
        // stack consumes (C_tv, C_vt) in that order
        s_first = dr_tv.forward(C.cat_tv);
        s_second = dr_vt.forward(C.cat_vt);
    } else {
        s_first = C.rvx;
        s_second = C.rtx;
    }

    if (kind_ != FusionKind::Dm) {
        const bool cam_stack = !stack_cam.empty();
        if (cam_stack) {
            C.stack_cam.resize(stack_cam.size());
            for (std::size_t i = 0; i < stack_cam.size(); ++i) {
                Tensor oa, ob;
                stack_cam[i].forward(s_first, s_second, oa, ob, C.stack_cam[i]);
                s_first = std::move(oa);
                s_second = std::move(ob);
            }
        } else {
            C.stack_mam.resize(stack_mam.size());
            for (std::size_t i = 0; i < stack_mam.size(); ++i) {
                Tensor oa, ob;
                stack_mam[i].forward(s_first, s_second, oa, ob, C.stack_mam[i]);
                s_first = std::move(oa);
                s_second = std::move(ob);
            }
        }
    }

    C.cat_out = concat_cols(s_first, s_second);
    return dr_out.forward(C.cat_out);
}

FusionNetwork::InputGrads FusionNetwork::backward(const FusionCache& cache, const Tensor& dout) {
    InputGrads g;
    Tensor dcat = dr_out.backward(cache.cat_out, dout);
    Tensor d_first, d_second;
    split_cols(dcat, d_first, d_second);

    if (kind_ != FusionKind::Dm) {
        if (!stack_cam.empty()) {
            for (int i = static_cast<int>(stack_cam.size()) - 1; i >= 0; --i) {
                Tensor da, db;
                stack_cam[i].backward(cache.stack_cam[i], d_first, d_second, da, db);
                d_first = std::move(da);
                d_second = std::move(db);
            }
        } else {
            for (int i = static_cast<int>(stack_mam.size()) - 1; i >= 0; --i) {
                Tensor da, db;
                stack_mam[i].backward(cache.stack_mam[i], d_first, d_second, da, db);
                d_first = std::move(da);
                d_second = std::move(db);
            }
        }
    }

    if (cache.has_shared) {
        // d_first is the grad of dr_tv's output, d_second of dr_vt's
        Tensor dcat_tv = dr_tv.backward(cache.cat_tv, d_first);
        Tensor dcat_vt = dr_vt.backward(cache.cat_vt, d_second);
        Tensor da_tv, db_tv, da_vt, db_vt;
        split_cols(dcat_tv, da_tv, db_tv);
        split_cols(dcat_vt, da_vt, db_vt);
        cam_tv.backward(cache.cam_tv, da_tv, db_tv, g.d_rtx, g.d_gvx);
        cam_vt.backward(cache.cam_vt, da_vt, db_vt, g.d_rvx, g.d_gtx);
    } else {
        g.d_rvx = std::move(d_first);
        g.d_rtx = std::move(d_second);
    }
    return g;
}

void FusionNetwork::collect(ParamRefs& out) {
    const bool shared = kind_ == FusionKind::Full || kind_ == FusionKind::FullCamCom;
    if (shared) {
        cam_vt.collect(out);
        cam_tv.collect(out);
        dr_vt.collect(out);
        dr_tv.collect(out);
    }
    for (auto& b : stack_cam) b.collect(out);
    for (auto& b : stack_mam) b.collect(out);
    dr_out.collect(out);
}

void FusionNetwork::set_trainable(bool on) {
    ParamRefs refs;
    collect(refs);
    for (Param* p : refs) p->set_trainable(on);
}

}  // namespace macft
