#include "macft/verify.hpp"

#include <cmath>
#include <ostream>

#include "macft/common.hpp"
#include "macft/corner_head.hpp"
#include "macft/fusion.hpp"
#include "macft/model.hpp"
#include "macft/objectives.hpp"
#include "macft/ops.hpp"
#include "macft/patch_embed.hpp"
#include "macft/shared_branch.hpp"

namespace macft {

namespace {

Tensor rand_tensor(std::vector<int> shape, Rng& rng, double scale) {
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = rng.normal(0.0, scale);
    return t;
}

Tensor rand_image(int size, Rng& rng) {
    Tensor t({size, size, 3});
    for (auto& v : t.values()) v = rng.uniform();
    return t;
}

Param make_param(const std::string& name, Tensor t) {
    Param p(name, std::move(t));
    p.set_trainable(true);
    return p;
}

double weighted_sum(const Tensor& y, const Tensor& w) {
    check(y.size() == w.size(), "weighted_sum: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
    return s;
}

void zero_all(const ParamRefs& params) {
    for (Param* p : params) p->value.zero_grad();
}

struct SuiteRunner {
    GradSuiteResult& result;
    double epsilon, tolerance;
    std::ostream* log;
    std::uint64_t coord_seed;

    void run(const std::string& name, const ParamRefs& params,
             const std::function<double()>& loss, const std::function<void()>& grad,
             int samples) {
        GradCheckReport rep = gradcheck(params, loss, grad, epsilon, tolerance, samples,
                                        coord_seed);
        if (!rep.all_passed) result.all_passed = false;
        if (rep.worst_rel_err > result.worst_rel_err) {
            result.worst_rel_err = rep.worst_rel_err;
            result.worst_check = strcat_msg(name, "/", rep.worst_name);
        }
        if (log) {
            *log << (rep.all_passed ? "ok   " : "FAIL ") << name << "  worst "
                 << rep.worst_rel_err << " at " << rep.worst_name << "\n";
        }
        result.checks.push_back({name, std::move(rep)});
    }
};

void check_ops(SuiteRunner& r, const std::string& tag, Rng& rng) {
    {  // matmul
        Param a = make_param("a", rand_tensor({3, 4}, rng, 0.7));
        Param b = make_param("b", rand_tensor({4, 5}, rng, 0.7));
        Tensor w = rand_tensor({3, 5}, rng, 1.0);
        r.run(tag + "matmul", {&a, &b},
              [&] { return weighted_sum(matmul(a.value, b.value), w); },
              [&] {
                  zero_all({&a, &b});
                  matmul_backward(a.value, b.value, w, a.value.grad(), b.value.grad());
              },
              16);
    }
    for (int axis = 0; axis < 2; ++axis) {  // softmax along both axes
        Param x = make_param("x", rand_tensor({3, 5}, rng, 1.2));
        Tensor w = rand_tensor({3, 5}, rng, 1.0);
        r.run(tag + "softmax_axis" + std::to_string(axis), {&x},
              [&, axis] { return weighted_sum(softmax(x.value, axis), w); },
              [&, axis] {
                  zero_all({&x});
                  Tensor y = softmax(x.value, axis);
                  Tensor dx = softmax_backward(y, w, axis);
                  for (std::size_t i = 0; i < dx.size(); ++i) x.value.grad()[i] += dx[i];
              },
              16);
    }
    {  // layer_norm (input + affine)
        Param x = make_param("x", rand_tensor({4, 6}, rng, 1.0));
        Param gamma = make_param("gamma", rand_tensor({6}, rng, 0.5));
        Param beta = make_param("beta", rand_tensor({6}, rng, 0.5));
        Tensor w = rand_tensor({4, 6}, rng, 1.0);
        r.run(tag + "layer_norm", {&x, &gamma, &beta},
              [&] {
                  return weighted_sum(layer_norm(x.value, gamma.value, beta.value, 1e-6), w);
              },
              [&] {
                  zero_all({&x, &gamma, &beta});
                  LayerNormCache cache;
                  layer_norm(x.value, gamma.value, beta.value, 1e-6, &cache);
                  Tensor dx = layer_norm_backward(cache, gamma.value, w, gamma.value.grad(),
                                                  beta.value.grad());
                  for (std::size_t i = 0; i < dx.size(); ++i) x.value.grad()[i] += dx[i];
              },
              16);
    }
    {  // gelu
        Param x = make_param("x", rand_tensor({3, 7}, rng, 1.5));
        Tensor w = rand_tensor({3, 7}, rng, 1.0);
        r.run(tag + "gelu", {&x},
              [&] { return weighted_sum(gelu(x.value), w); },
              [&] {
                  zero_all({&x});
                  Tensor dx = gelu_backward(x.value, w);
                  for (std::size_t i = 0; i < dx.size(); ++i) x.value.grad()[i] += dx[i];
              },
              16);
    }
    {  // conv2d + channel bias
        Param x = make_param("x", rand_tensor({5, 5, 3}, rng, 0.8));
        Param k = make_param("k", rand_tensor({3, 3, 3, 2}, rng, 0.4));
        Param b = make_param("b", rand_tensor({2}, rng, 0.4));
        Tensor w = rand_tensor({5, 5, 2}, rng, 1.0);
        r.run(tag + "conv2d_bias", {&x, &k, &b},
              [&] {
                  return weighted_sum(add_channel_bias(conv2d(x.value, k.value, 1, 1), b.value),
                                      w);
              },
              [&] {
                  zero_all({&x, &k, &b});
                  add_channel_bias_backward(w, 2, b.value.grad());
                  conv2d_backward(x.value, k.value, w, 1, 1, x.value.grad(), k.value.grad());
              },
              16);
    }
    {  // KL consistency loss
        Param gv = make_param("gv", rand_tensor({5, 8}, rng, 1.0));
        Param gt = make_param("gt", rand_tensor({5, 8}, rng, 1.0));
        r.run(tag + "kl_divergence", {&gv, &gt},
              [&] { return kl_divergence_loss(gv.value, gt.value).loss; },
              [&] {
                  zero_all({&gv, &gt});
                  KlResult res = kl_divergence_loss(gv.value, gt.value);
                  Tensor dgv(gv.value.shape()), dgt(gt.value.shape());
                  kl_divergence_backward(res, 1.0, dgv, dgt);
                  for (std::size_t i = 0; i < dgv.size(); ++i) gv.value.grad()[i] += dgv[i];
                  for (std::size_t i = 0; i < dgt.size(); ++i) gt.value.grad()[i] += dgt[i];
              },
              16);
    }
}

NormBox box_from(const Param& p) {
    return NormBox{p.value[0], p.value[1], p.value[2], p.value[3]};
}

void add_box_grad(Param& p, const NormBox& db) {
    p.value.grad()[0] += db.cx;
    p.value.grad()[1] += db.cy;
    p.value.grad()[2] += db.w;
    p.value.grad()[3] += db.h;
}

void check_objectives(SuiteRunner& r, const std::string& tag, Rng& rng) {
    const NormBox target{0.45, 0.5, 0.3, 0.25};
    auto jittered_box = [&](double spread) {
        Tensor t({4});
        t[0] = target.cx + rng.uniform(0.05, spread) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        t[1] = target.cy + rng.uniform(0.05, spread) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        t[2] = target.w + rng.uniform(0.05, spread);
        t[3] = target.h + rng.uniform(0.05, spread);
        return t;
    };
    {  // giou loss
        Param b = make_param("box", jittered_box(0.15));
        r.run(tag + "giou_loss", {&b},
              [&] { return giou_loss(box_from(b), target); },
              [&] {
                  zero_all({&b});
                  NormBox db;
                  giou_loss_backward(box_from(b), target, 1.0, db);
                  add_box_grad(b, db);
              },
              16);
    }
    {  // l1 loss (init keeps every coordinate well away from the kink)
        Param b = make_param("box", jittered_box(0.15));
        r.run(tag + "l1_box", {&b},
              [&] { return l1_box_loss(box_from(b), target); },
              [&] {
                  zero_all({&b});
                  NormBox db;
                  l1_box_loss_backward(box_from(b), target, 1.0, db);
                  add_box_grad(b, db);
              },
              16);
    }
    {  // stage-2 min composition incl. the divergence term
        LossWeights w;
        Param bv = make_param("bv", jittered_box(0.07));
        Param bt = make_param("bt", jittered_box(0.3));
        Param gv = make_param("gv", rand_tensor({4, 6}, rng, 1.0));
        Param gt = make_param("gt", rand_tensor({4, 6}, rng, 1.0));
        const double lv = composite_loss_stage13(box_from(bv), target, w);
        const double lt = composite_loss_stage13(box_from(bt), target, w);
        check(std::abs(lv - lt) > 1e-3, "stage2 fixture too close to the selection tie");
        r.run(tag + "stage2_composite", {&bv, &bt, &gv, &gt},
              [&] {
                  KlResult kl = kl_divergence_loss(gv.value, gt.value);
                  return composite_loss_stage2(box_from(bv), box_from(bt), target, kl.loss, w)
                      .loss;
              },
              [&] {
                  zero_all({&bv, &bt, &gv, &gt});
                  KlResult kl = kl_divergence_loss(gv.value, gt.value);
                  Stage2Loss parts =
                      composite_loss_stage2(box_from(bv), box_from(bt), target, kl.loss, w);
                  NormBox dbv, dbt;
                  composite_loss_stage2_backward(parts, box_from(bv), box_from(bt), target, w,
                                                 1.0, dbv, dbt);
                  add_box_grad(bv, dbv);
                  add_box_grad(bt, dbt);
                  Tensor dgv(gv.value.shape()), dgt(gt.value.shape());
                  kl_divergence_backward(kl, w.kl, dgv, dgt);
                  for (std::size_t i = 0; i < dgv.size(); ++i) gv.value.grad()[i] += dgv[i];
                  for (std::size_t i = 0; i < dgt.size(); ++i) gt.value.grad()[i] += dgt[i];
              },
              16);
    }
    {  // score maps -> soft-argmax -> box -> stage-1/3 objective
        LossWeights w;
        Param tl = make_param("tl", rand_tensor({4, 4}, rng, 0.3));
        Param br = make_param("br", rand_tensor({4, 4}, rng, 0.3));
        tl.value.at(0, 0) += 3.0;  // decisive peaks keep the corners ordered
        br.value.at(3, 3) += 3.0;
        r.run(tag + "softargmax_box_chain", {&tl, &br},
              [&] {
                  Corners c;
                  soft_argmax(tl.value, c.x1, c.y1);
                  soft_argmax(br.value, c.x2, c.y2);
                  return composite_loss_stage13(corners_to_box(c), target, w);
              },
              [&] {
                  zero_all({&tl, &br});
                  Corners c;
                  Tensor tl_prob, br_prob;
                  soft_argmax(tl.value, c.x1, c.y1, &tl_prob);
                  soft_argmax(br.value, c.x2, c.y2, &br_prob);
                  NormBox box = corners_to_box(c);
                  NormBox dbox;
                  composite_loss_stage13_backward(box, target, w, 1.0, dbox);
                  Corners dc;
                  corners_to_box_backward(c, dbox, dc);
                  Tensor dtl = soft_argmax_backward(tl_prob, 4, dc.x1, dc.y1);
                  Tensor dbr = soft_argmax_backward(br_prob, 4, dc.x2, dc.y2);
                  for (std::size_t i = 0; i < dtl.size(); ++i) tl.value.grad()[i] += dtl[i];
                  for (std::size_t i = 0; i < dbr.size(); ++i) br.value.grad()[i] += dbr[i];
              },
              16);
    }
}

void check_modules(SuiteRunner& r, const std::string& tag, Rng& rng) {
    const int dim = 8, heads = 2, hidden = 16;
    {  // cross attention, distinct query/key-value streams
        MultiHeadAttention mha("mha", dim, heads, rng);
        ParamRefs mp;
        mha.collect(mp);
        for (Param* p : mp) p->set_trainable(true);
        Param xq = make_param("xq", rand_tensor({4, dim}, rng, 0.8));
        Param xkv = make_param("xkv", rand_tensor({6, dim}, rng, 0.8));
        ParamRefs params = mp;
        params.push_back(&xq);
        params.push_back(&xkv);
        Tensor w = rand_tensor({4, dim}, rng, 1.0);
        r.run(tag + "attention_cross", params,
              [&] {
                  AttentionCache cache;
                  return weighted_sum(mha.forward(xq.value, xkv.value, cache), w);
              },
              [&] {
                  zero_all(params);
                  AttentionCache cache;
                  mha.forward(xq.value, xkv.value, cache);
                  Tensor dxq(xq.value.shape()), dxkv(xkv.value.shape());
                  mha.backward(xq.value, xkv.value, cache, w, dxq, dxkv);
                  for (std::size_t i = 0; i < dxq.size(); ++i) xq.value.grad()[i] += dxq[i];
                  for (std::size_t i = 0; i < dxkv.size(); ++i) xkv.value.grad()[i] += dxkv[i];
              },
              8);
    }
    {  // pre-norm encoder layer (self attention + FFN + residuals)
        EncoderLayer layer("enc", dim, heads, hidden, rng);
        layer.set_trainable(true);
        ParamRefs params;
        layer.collect(params);
        Param x = make_param("x", rand_tensor({5, dim}, rng, 0.8));
        params.push_back(&x);
        Tensor w = rand_tensor({5, dim}, rng, 1.0);
        r.run(tag + "encoder_layer", params,
              [&] {
                  EncoderLayerCache cache;
                  return weighted_sum(layer.forward(x.value, cache), w);
              },
              [&] {
                  zero_all(params);
                  EncoderLayerCache cache;
                  layer.forward(x.value, cache);
                  Tensor dx = layer.backward(x.value, cache, w);
                  for (std::size_t i = 0; i < dx.size(); ++i) x.value.grad()[i] += dx[i];
              },
              8);
    }
    {  // patch embedding (images are leaves; module parameters get gradients)
        PatchEmbed emb("emb", 8, 8, 4, dim, rng);
        emb.set_trainable(true);
        ParamRefs params;
        emb.collect(params);
        Tensor z_img = rand_image(8, rng), x_img = rand_image(8, rng);
        Tensor wz = rand_tensor({emb.n_template(), dim}, rng, 1.0);
        Tensor wx = rand_tensor({emb.n_search(), dim}, rng, 1.0);
        r.run(tag + "patch_embed", params,
              [&] {
                  PatchEmbedCache cache;
                  return weighted_sum(emb.embed_template(z_img, cache), wz) +
                         weighted_sum(emb.embed_search(x_img, cache), wx);
              },
              [&] {
                  zero_all(params);
                  PatchEmbedCache cache;
                  emb.embed_template(z_img, cache);
                  emb.embed_search(x_img, cache);
                  emb.backward_template(cache, wz);
                  emb.backward_search(cache, wx);
              },
              8);
    }
    {  // backbone: mixed attention over the joint sequence + final norm
        BackboneConfig bcfg{2, dim, heads, 2, 0};
        Backbone bb("bb", bcfg, rng);
        bb.set_trainable(true, 0);
        ParamRefs params;
        bb.collect(params);
        Param z = make_param("z", rand_tensor({2, dim}, rng, 0.8));
        Param x = make_param("x", rand_tensor({4, dim}, rng, 0.8));
        params.push_back(&z);
        params.push_back(&x);
        Tensor w = rand_tensor({6, dim}, rng, 1.0);
        r.run(tag + "backbone", params,
              [&] { return weighted_sum(bb.forward(z.value, x.value).tokens, w); },
              [&] {
                  zero_all(params);
                  BackboneCache cache;
                  bb.forward(z.value, x.value, &cache);
                  Tensor dtokens = bb.backward(cache, w);
                  for (int i = 0; i < 2; ++i)
                      for (int j = 0; j < dim; ++j) z.value.grad()[i * dim + j] += dtokens.at(i, j);
                  for (int i = 0; i < 4; ++i)
                      for (int j = 0; j < dim; ++j)
                          x.value.grad()[i * dim + j] += dtokens.at(2 + i, j);
              },
              8);
    }
    {  // corner head on a 4x4 grid; loss reads the raw corners (always smooth)
        const int hdim = 32;
        Rng hrng = Rng::derive(rng.raw(), 0xc0de);
        CornerHead headm("chead", hdim, hrng);
        headm.set_trainable(true);
        ParamRefs params;
        headm.collect(params);
        Param feat = make_param("feat", rand_tensor({16, hdim}, hrng, 0.6));
        params.push_back(&feat);
        const double w1 = 0.7, w2 = -0.4, w3 = 1.1, w4 = 0.5;
        r.run(tag + "corner_head", params,
              [&] {
                  CornerHeadCache cache;
                  Corners c = headm.forward(feat.value, cache);
                  return w1 * c.x1 + w2 * c.y1 + w3 * c.x2 + w4 * c.y2;
              },
              [&] {
                  zero_all(params);
                  CornerHeadCache cache;
                  headm.forward(feat.value, cache);
                  Tensor dfeat = headm.backward(cache, Corners{w1, w2, w3, w4});
                  for (std::size_t i = 0; i < dfeat.size(); ++i)
                      feat.value.grad()[i] += dfeat[i];
              },
              4);
    }
}

TokenSequence make_sequence(const Tensor& search_part, int n_template, int dim) {
    Tensor ztmpl({n_template, dim});
    TokenSequence seq;
    seq.tokens = concat_rows(ztmpl, search_part);
    seq.n_template = n_template;
    seq.n_search = search_part.rows();
    return seq;
}

void check_fusion_kind(SuiteRunner& r, const std::string& name, FusionKind kind, Rng& rng) {
    const int dim = 8, n_tmpl = 2, n_search = 4;
    FusionConfig fcfg{dim, 2, 2, 2};
    FusionNetwork net("fusion", kind, fcfg, rng);
    net.set_trainable(true);
    ParamRefs params;
    net.collect(params);
    const bool shared = kind == FusionKind::Full || kind == FusionKind::FullCamCom;
    Param rv = make_param("rvx", rand_tensor({n_search, dim}, rng, 0.8));
    Param rt = make_param("rtx", rand_tensor({n_search, dim}, rng, 0.8));
    Param gv = make_param("gvx", rand_tensor({n_search, dim}, rng, 0.8));
    Param gt = make_param("gtx", rand_tensor({n_search, dim}, rng, 0.8));
    params.push_back(&rv);
    params.push_back(&rt);
    if (shared) {
        params.push_back(&gv);
        params.push_back(&gt);
    }
    Tensor w = rand_tensor({n_search, dim}, rng, 1.0);
    auto forward = [&](FusionCache* cache) {
        TokenSequence sv = make_sequence(rv.value, n_tmpl, dim);
        TokenSequence st = make_sequence(rt.value, n_tmpl, dim);
        if (!shared) return net.fuse(sv, st, nullptr, nullptr, cache);
        TokenSequence qv = make_sequence(gv.value, n_tmpl, dim);
        TokenSequence qt = make_sequence(gt.value, n_tmpl, dim);
        return net.fuse(sv, st, &qv, &qt, cache);
    };
    r.run(name, params,
          [&] { return weighted_sum(forward(nullptr), w); },
          [&] {
              zero_all(params);
              FusionCache cache;
              forward(&cache);
              FusionNetwork::InputGrads g = net.backward(cache, w);
              for (std::size_t i = 0; i < g.d_rvx.size(); ++i) rv.value.grad()[i] += g.d_rvx[i];
              for (std::size_t i = 0; i < g.d_rtx.size(); ++i) rt.value.grad()[i] += g.d_rtx[i];
              if (shared) {
                  for (std::size_t i = 0; i < g.d_gvx.size(); ++i)
                      gv.value.grad()[i] += g.d_gvx[i];
                  for (std::size_t i = 0; i < g.d_gtx.size(); ++i)
                      gt.value.grad()[i] += g.d_gtx[i];
              }
          },
          8);
}

void check_end_to_end(SuiteRunner& r, const std::string& tag, std::uint64_t seed, Rng& rng) {
    ModelConfig mcfg;  // 32/16, P=4, D=32, L=2, K=2 per the verification recipe
    mcfg.fusion_k = 2;
    MacftModel model(VariantId::Full, mcfg, seed);
    model.set_all_trainable(true);
    const NormBox target{0.5, 0.5, 0.35, 0.3};
    const LossWeights w;
    // Box extents are clamped below 1e-3; both sides of that switch are
    // smooth, only its neighbourhood is not. The extent sign at random init
    // is a fixed property of the weight draw, so smoothness — not sign — is
    // the fixture condition.
    auto smooth_box = [](const Corners& c) {
        auto clear = [](double e) { return std::abs(e - 1e-3) > 5e-4; };
        return clear(c.x2 - c.x1) && clear(c.y2 - c.y1);
    };
    auto draw_pair = [&](Tensor& z, Tensor& x) {
        z = rand_image(mcfg.template_size, rng);
        x = rand_image(mcfg.search_size, rng);
    };

    // At the training init scale (0.02) the five-conv stacks attenuate per
    // layer, so the corner score maps are nearly flat and the two shared
    // branch losses tie at the noise level, leaving nothing for the check to
    // bite on. Rescale the head kernels to unit-gain (He) scale: the maps
    // then span O(1) with every layer's gain O(1), which keeps the finite
    // differences well-conditioned. Amplifying a single layer instead would
    // square its gain into the truncation error and sink the tolerance.
    for (Param* p : model.params_head()) {
        if (p->name.find(".kernel") == std::string::npos) continue;
        const int cin = p->value.dim(2);
        const double factor = std::sqrt(2.0 / (9.0 * cin)) / 0.02;
        for (auto& v : p->value.values()) v *= factor;
    }

    // Each end-to-end check draws its own inputs until the boxes it touches
    // are safely smooth (clear of the repair rule and of the stage-2 tie).
    Tensor z_rgb, x_rgb;
    for (int attempt = 0;; ++attempt) {
        check(attempt < 64, "no smooth single-branch fixture found");
        draw_pair(z_rgb, x_rgb);
        SingleState st;
        model.forward_single(true, z_rgb, x_rgb, &st);
        if (smooth_box(st.corners)) break;
    }

    {  // specific branch + head through the stage-1/3 objective
        ParamRefs params = model.params_branch_rgb();
        for (Param* p : model.params_head()) params.push_back(p);
        r.run(tag + "loss_single_branch", params,
              [&] {
                  return composite_loss_stage13(model.forward_single(true, z_rgb, x_rgb), target,
                                                w);
              },
              [&] {
                  zero_all(model.params_all());
                  SingleState st;
                  NormBox b = model.forward_single(true, z_rgb, x_rgb, &st);
                  NormBox db;
                  composite_loss_stage13_backward(b, target, w, 1.0, db);
                  model.backward_single(true, st, db);
              },
              2);
    }

    Tensor zs_rgb, xs_rgb, zs_tir, xs_tir;
    for (int attempt = 0;; ++attempt) {
        check(attempt < 64, "no smooth shared-pair fixture found");
        draw_pair(zs_rgb, xs_rgb);
        draw_pair(zs_tir, xs_tir);
        SharedState sh;
        model.forward_shared_pair(zs_rgb, xs_rgb, zs_tir, xs_tir, sh);
        const double lv = composite_loss_stage13(sh.b_v, target, w);
        const double lt = composite_loss_stage13(sh.b_t, target, w);
        if (smooth_box(sh.c_v) && smooth_box(sh.c_t) && std::abs(lv - lt) > 1e-3) break;
    }

    Tensor zf_rgb, xf_rgb, zf_tir, xf_tir;
    for (int attempt = 0;; ++attempt) {
        check(attempt < 64, "no smooth fused fixture found");
        draw_pair(zf_rgb, xf_rgb);
        draw_pair(zf_tir, xf_tir);
        FusedState fu;
        model.forward_fused(zf_rgb, xf_rgb, zf_tir, xf_tir, &fu, false);
        if (smooth_box(fu.corners)) break;
    }

    {  // shared branch + head through the stage-2 objective (min + divergence)
        ParamRefs params = model.params_branch_shared();
        for (Param* p : model.params_head()) params.push_back(p);
        r.run(tag + "loss_shared_pair", params,
              [&] {
                  SharedState st;
                  model.forward_shared_pair(zs_rgb, xs_rgb, zs_tir, xs_tir, st);
                  return composite_loss_stage2(st.b_v, st.b_t, target, st.kl.loss, w).loss;
              },
              [&] {
                  zero_all(model.params_all());
                  SharedState st;
                  model.forward_shared_pair(zs_rgb, xs_rgb, zs_tir, xs_tir, st);
                  Stage2Loss parts =
                      composite_loss_stage2(st.b_v, st.b_t, target, st.kl.loss, w);
                  NormBox db_v, db_t;
                  composite_loss_stage2_backward(parts, st.b_v, st.b_t, target, w, 1.0, db_v,
                                                 db_t);
                  model.backward_shared_pair(st, db_v, db_t, w.kl);
              },
              2);
    }
    {  // the whole fused pipeline down to the stage-1/3 objective
        r.run(tag + "loss_fused_pipeline", model.params_all(),
              [&] {
                  return composite_loss_stage13(
                      model.forward_fused(zf_rgb, xf_rgb, zf_tir, xf_tir), target, w);
              },
              [&] {
                  zero_all(model.params_all());
                  FusedState st;
                  NormBox b = model.forward_fused(zf_rgb, xf_rgb, zf_tir, xf_tir, &st, true);
                  NormBox db;
                  composite_loss_stage13_backward(b, target, w, 1.0, db);
                  model.backward_fused(st, db);
              },
              1);
    }
}

}  // namespace

GradSuiteResult run_gradient_suite(std::uint64_t master_seed, int n_seeds, double epsilon,
                                   double tolerance, std::ostream* log) {
    check(n_seeds > 0, "run_gradient_suite: need at least one seed");
    GradSuiteResult result;
    for (int s = 0; s < n_seeds; ++s) {
        Rng rng = Rng::derive(master_seed, 0x6772ad, static_cast<std::uint64_t>(s));
        SuiteRunner runner{result, epsilon, tolerance, log,
                           17u + static_cast<std::uint64_t>(s)};
        const std::string tag = strcat_msg("s", s, ".");
        check_ops(runner, tag, rng);
        check_objectives(runner, tag, rng);
        check_modules(runner, tag, rng);
        check_fusion_kind(runner, tag + "fusion_dm", FusionKind::Dm, rng);
        check_fusion_kind(runner, tag + "fusion_cam_stack", FusionKind::DmCam, rng);
        check_fusion_kind(runner, tag + "fusion_mam_stack", FusionKind::DmMam, rng);
        check_fusion_kind(runner, tag + "fusion_full", FusionKind::Full, rng);
        check_fusion_kind(runner, tag + "fusion_full_cam", FusionKind::FullCamCom, rng);
        check_end_to_end(runner, tag, master_seed + static_cast<std::uint64_t>(s) * 1000u, rng);
    }
    return result;
}

}  // namespace macft
