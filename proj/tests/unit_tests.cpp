#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "macft/backbone.hpp"
#include "macft/checkpoint.hpp"
#include "macft/cli.hpp"
#include "macft/config.hpp"
#include "macft/corner_head.hpp"
#include "macft/dataset.hpp"
#include "macft/fusion.hpp"
#include "macft/image.hpp"
#include "macft/metrics.hpp"
#include "macft/model.hpp"
#include "macft/objectives.hpp"
#include "macft/ops.hpp"
#include "macft/patch_embed.hpp"
#include "macft/sampling.hpp"
#include "macft/shared_branch.hpp"
#include "macft/track.hpp"
#include "macft/train.hpp"

using namespace macft;
namespace fs = std::filesystem;

namespace {

// Fresh scratch directory under the test working directory, removed on exit.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& stem) {
        path = fs::path("unit_tmp_" + stem);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string str() const { return path.string(); }
    std::string sub(const std::string& name) const { return (path / name).string(); }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor rand2d(int r, int c, Rng& rng, double scale = 1.0) {
    Tensor t({r, c});
    for (auto& v : t.values()) v = rng.normal(0.0, scale);
    return t;
}

Tensor rand_image(int side, Rng& rng) {
    Tensor t({side, side, 3});
    for (auto& v : t.values()) v = rng.uniform(0.0, 1.0);
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// core ops
// ---------------------------------------------------------------------------

TEST_CASE("matmul matches a hand fixture") {
    Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
    Tensor c = matmul(a, b);
    CHECK(c.at(0, 0) == 19.0);
    CHECK(c.at(0, 1) == 22.0);
    CHECK(c.at(1, 0) == 43.0);
    CHECK(c.at(1, 1) == 50.0);
}

TEST_CASE("softmax fixture and row-stochastic property") {
    Tensor x = Tensor::from({1, 2}, {0.0, std::log(3.0)});
    Tensor y = softmax(x, 1);
    CHECK(y[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(0.75).epsilon(1e-14));

    Rng rng(41);
    Tensor r = rand2d(5, 7, rng, 3.0);
    Tensor s = softmax(r, 1);
    for (int i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 7; ++j) {
            CHECK(s.at(i, j) > 0.0);
            sum += s.at(i, j);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    // axis 0 normalizes columns instead
    Tensor s0 = softmax(r, 0);
    for (int j = 0; j < 7; ++j) {
        double sum = 0.0;
        for (int i = 0; i < 5; ++i) sum += s0.at(i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("layer_norm standardizes a two-point row") {
    Tensor x = Tensor::from({1, 2}, {1.0, 3.0});
    Tensor gamma({2}, 1.0), beta({2}, 0.0);
    Tensor y = layer_norm(x, gamma, beta, 1e-6);
    CHECK(y[0] == doctest::Approx(-1.0).epsilon(1e-5));
    CHECK(y[1] == doctest::Approx(1.0).epsilon(1e-5));

    // gamma/beta apply per feature after standardization
    Tensor g2 = Tensor::from({2}, {2.0, 0.5});
    Tensor b2 = Tensor::from({2}, {10.0, -1.0});
    Tensor y2 = layer_norm(x, g2, b2, 1e-6);
    CHECK(y2[0] == doctest::Approx(10.0 - 2.0).epsilon(1e-5));
    CHECK(y2[1] == doctest::Approx(-1.0 + 0.5).epsilon(1e-5));
}

TEST_CASE("gelu matches frozen values") {
    CHECK(gelu_scalar(1.0) == doctest::Approx(0.8411919906082768).epsilon(1e-15));
    CHECK(gelu_scalar(0.5) == doctest::Approx(0.34571400982514394).epsilon(1e-15));
    CHECK(gelu_scalar(-1.0) == doctest::Approx(-0.15880800939172324).epsilon(1e-15));
    CHECK(gelu_scalar(0.0) == 0.0);
    CHECK(gelu_scalar(10.0) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("conv2d identity kernel, zero kernel, and padding geometry") {
    Rng rng(7);
    Tensor img({5, 5, 2});
    for (auto& v : img.values()) v = rng.uniform(0.0, 1.0);

    // 1x1 identity kernel copies channels through
    Tensor ident({1, 1, 2, 2});
    ident.values() = {1, 0, 0, 1};
    Tensor same = conv2d(img, ident, 1, 0);
    REQUIRE(same.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(same[i] == img[i]);

    // zero 3x3 kernel gives zeros at preserved resolution with padding 1
    Tensor zk({3, 3, 2, 4});
    Tensor z = conv2d(img, zk, 1, 1);
    CHECK(z.dim(0) == 5);
    CHECK(z.dim(1) == 5);
    CHECK(z.dim(2) == 4);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);

    // stride-2 output geometry: (5 + 2*1 - 3)/2 + 1 = 3
    Tensor st = conv2d(img, zk, 2, 1);
    CHECK(st.dim(0) == 3);
    CHECK(st.dim(1) == 3);
}

TEST_CASE("row/column concat and row slicing round trip") {
    Rng rng(11);
    Tensor a = rand2d(2, 3, rng), b = rand2d(4, 3, rng);
    Tensor cat = concat_rows(a, b);
    REQUIRE(cat.rows() == 6);
    Tensor a2 = slice_rows(cat, 0, 2);
    Tensor b2 = slice_rows(cat, 2, 6);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a2[i] == a[i]);
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(b2[i] == b[i]);

    Tensor c = rand2d(2, 5, rng);
    Tensor wide = concat_cols(a, c);
    REQUIRE(wide.cols() == 8);
    CHECK(wide.at(1, 2) == a.at(1, 2));
    CHECK(wide.at(1, 5) == c.at(1, 2));
}

// ---------------------------------------------------------------------------
// patch embedding
// ---------------------------------------------------------------------------

TEST_CASE("patchify is inverted by unpatchify and orders patches row-major") {
    Rng rng(3);
    Tensor img = rand_image(8, rng);
    Tensor patches = patchify(img, 4);
    REQUIRE(patches.rows() == 4);
    REQUIRE(patches.cols() == 4 * 4 * 3);
    Tensor back = unpatchify(patches, 8, 8, 3, 4);
    REQUIRE(back.shape() == img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(back[i] == img[i]);

    // first row of the patch matrix is the flattened top-left block
    CHECK(patches.at(0, 0) == img[0]);
    // second patch (row-major grid order) starts at pixel (row 0, col 4)
    CHECK(patches.at(1, 0) == img[(0 * 8 + 4) * 3 + 0]);
}

TEST_CASE("sinusoidal table matches hand-computed spots") {
    Tensor t = sinusoid_pos_table(4, 4, 8);  // quarter = 2
    REQUIRE(t.rows() == 16);
    REQUIRE(t.cols() == 8);
    // row for (gx=1, gy=0): [sin x*w0, sin x*w1, cos x*w0, cos x*w1, y...]
    CHECK(t.at(1, 0) == doctest::Approx(0.8414709848078965).epsilon(1e-15));
    CHECK(t.at(1, 1) == doctest::Approx(0.009999833334166664).epsilon(1e-15));
    CHECK(t.at(1, 2) == doctest::Approx(0.5403023058681398).epsilon(1e-15));
    CHECK(t.at(1, 3) == doctest::Approx(0.9999500004166653).epsilon(1e-15));
    CHECK(t.at(1, 4) == 0.0);  // gy = 0
    CHECK(t.at(1, 6) == 1.0);
    // row for (gx=0, gy=1) mirrors into the y quarters
    CHECK(t.at(4, 4) == doctest::Approx(0.8414709848078965).epsilon(1e-15));
    CHECK(t.at(4, 0) == 0.0);
}

TEST_CASE("patch embedding produces the configured token grids deterministically") {
    Rng r1(99), r2(99);
    PatchEmbed e1("emb", 32, 16, 4, 32, r1);
    PatchEmbed e2("emb", 32, 16, 4, 32, r2);
    CHECK(e1.n_search() == 64);
    CHECK(e1.n_template() == 16);

    Rng img_rng(5);
    Tensor xs = rand_image(32, img_rng);
    Tensor zs = rand_image(16, img_rng);
    PatchEmbedCache c1, c2;
    Tensor t1 = e1.embed_search(xs, c1);
    Tensor t2 = e2.embed_search(xs, c2);
    REQUIRE(t1.rows() == 64);
    REQUIRE(t1.cols() == 32);
    for (std::size_t i = 0; i < t1.size(); ++i) CHECK(t1[i] == t2[i]);

    Tensor z1 = e1.embed_template(zs, c1);
    CHECK(z1.rows() == 16);
    CHECK(z1.cols() == 32);
}

// ---------------------------------------------------------------------------
// backbone
// ---------------------------------------------------------------------------

TEST_CASE("encoder stack with zeroed attention and FFN weights is the identity") {
    Rng rng(21);
    BackboneConfig cfg;  // depth 2, dim 32
    Backbone bb("bb", cfg, rng);
    for (auto& layer : bb.layers) {
        ParamRefs ps;
        layer.attn.collect(ps);
        layer.ffn.collect(ps);
        for (Param* p : ps)
            for (auto& v : p->value.values()) v = 0.0;
    }
    Tensor tokens = rand2d(10, 32, rng);
    Tensor out = bb.forward_stack(tokens);
    REQUIRE(out.same_shape(tokens));
    for (std::size_t i = 0; i < tokens.size(); ++i) CHECK(out[i] == tokens[i]);
}

TEST_CASE("backbone freeze policy splits layers at the freeze count") {
    Rng rng(23);
    BackboneConfig cfg;
    cfg.depth = 4;
    Backbone bb("bb", cfg, rng);
    bb.set_trainable(true, 2);
    int trainable_layers = 0;
    for (auto& layer : bb.layers) {
        ParamRefs ps;
        layer.collect(ps);
        bool any = false;
        for (Param* p : ps) any = any || p->trainable;
        trainable_layers += any ? 1 : 0;
    }
    CHECK(trainable_layers == 2);
    CHECK(bb.frozen_params(2).size() > 0);
}

TEST_CASE("attention export splits the four template/search blocks") {
    Rng rng(31);
    BackboneConfig cfg;
    Backbone bb("bb", cfg, rng);
    Tensor z = rand2d(4, 32, rng), x = rand2d(9, 32, rng);
    BackboneCache cache;
    bb.forward(z, x, &cache);
    AttentionBlocks blocks = export_attention(cache, 1, 2);
    REQUIRE(blocks.zz.rows() == 4);
    REQUIRE(blocks.zz.cols() == 4);
    REQUIRE(blocks.zx.cols() == 9);
    REQUIRE(blocks.xz.rows() == 9);
    REQUIRE(blocks.xx.cols() == 9);
    // each query row's mass across its z and x blocks sums to 1
    for (int i = 0; i < 4; ++i) {
        double s = 0.0;
        for (int j = 0; j < 4; ++j) s += blocks.zz.at(i, j);
        for (int j = 0; j < 9; ++j) s += blocks.zx.at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }

    TempDir tmp("attn");
    write_attention_export(tmp.str(), cache, 0, 1);
    CHECK(fs::exists(tmp.path / "L0_H1_zz.csv"));
    CHECK(fs::exists(tmp.path / "L0_H1_xx.pgm"));
}

// ---------------------------------------------------------------------------
// shared branch divergence
// ---------------------------------------------------------------------------

TEST_CASE("divergence loss matches the hand fixture and basic identities") {
    Tensor gv = Tensor::from({1, 2}, {0.0, 0.0});
    Tensor gt = Tensor::from({1, 2}, {0.0, std::log(3.0)});
    KlResult r = kl_divergence_loss(gv, gt);
    CHECK(r.loss == doctest::Approx(0.14384103622589042).epsilon(1e-12));

    KlResult self = kl_divergence_loss(gt, gt);
    CHECK(std::abs(self.loss) <= 1e-10);

    Rng rng(55);
    for (int i = 0; i < 1000; ++i) {
        Tensor a = rand2d(3, 8, rng, 2.0);
        Tensor b = rand2d(3, 8, rng, 2.0);
        CHECK(kl_divergence_loss(a, b).loss >= -1e-12);
    }
}

// ---------------------------------------------------------------------------
// objectives
// ---------------------------------------------------------------------------

TEST_CASE("l1 box loss fixtures") {
    NormBox a{0.5, 0.5, 0.2, 0.2};
    CHECK(l1_box_loss(a, a) == 0.0);
    NormBox b{0.5, 0.5, 0.2, 0.4};
    CHECK(l1_box_loss(a, b) == doctest::Approx(0.05).epsilon(1e-15));
    CHECK(l1_box_loss(a, b) == l1_box_loss(b, a));
}

TEST_CASE("giou loss fixtures and range") {
    // corner-form (0,0,2,2) vs (1,1,2,2) -> center form
    NormBox a{1.0, 1.0, 2.0, 2.0};
    NormBox b{2.0, 2.0, 2.0, 2.0};
    CHECK(giou_loss(a, b) == doctest::Approx(68.0 / 63.0).epsilon(1e-14));
    CHECK(giou_loss(a, b) == doctest::Approx(1.0793650793650793).epsilon(1e-14));

    NormBox c{0.5, 0.5, 1.0, 1.0};
    NormBox d{9.5, 9.5, 1.0, 1.0};
    CHECK(giou_loss(c, d) == doctest::Approx(1.98).epsilon(1e-14));

    CHECK(giou_loss(a, a) == 0.0);

    Rng rng(77);
    for (int i = 0; i < 200; ++i) {
        NormBox p{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.05, 0.8),
                  rng.uniform(0.05, 0.8)};
        NormBox q{rng.uniform(0.0, 1.0), rng.uniform(0.0, 1.0), rng.uniform(0.05, 0.8),
                  rng.uniform(0.05, 0.8)};
        const double l = giou_loss(p, q);
        CHECK(l >= 0.0);
        CHECK(l <= 2.0);
    }

    // monotone as one box translates away along x
    double prev = giou_loss(a, a);
    for (int s = 1; s <= 12; ++s) {
        NormBox moved{1.0 + 0.5 * s, 1.0, 2.0, 2.0};
        const double l = giou_loss(moved, a);
        CHECK(l >= prev);
        prev = l;
    }

    CHECK_THROWS(giou_loss(NormBox{0.5, 0.5, 0.0, 0.2}, a));
}

TEST_CASE("stage 1/3 composite applies the documented weights") {
    LossWeights w;
    NormBox a{1.0, 1.0, 2.0, 2.0};
    NormBox b{2.0, 2.0, 2.0, 2.0};
    CHECK(composite_loss_stage13(a, b, w) ==
          doctest::Approx(2.0 * giou_loss(a, b) + 5.0 * l1_box_loss(a, b)).epsilon(1e-15));
    // the documented arithmetic fixture
    CHECK(2.0 * 1.0793650793650793 + 5.0 * 0.05 ==
          doctest::Approx(2.4087301587301586).epsilon(1e-15));
    CHECK(composite_loss_stage13(a, a, w) == 0.0);
    LossWeights only_giou{2.0, 0.0, 800.0};
    CHECK(composite_loss_stage13(a, b, only_giou) ==
          doctest::Approx(2.0 * giou_loss(a, b)).epsilon(1e-15));
}

TEST_CASE("degenerate predictions keep a restoring gradient through the composite") {
    LossWeights w;
    NormBox target{0.5, 0.5, 0.3, 0.3};
    NormBox degen{0.5, 0.5, -0.02, 1e-4};  // crossed corners / collapsed height
    const double loss = composite_loss_stage13(degen, target, w);
    CHECK(std::isfinite(loss));
    NormBox db;
    composite_loss_stage13_backward(degen, target, w, 1.0, db);
    // l1 pushes both extents up toward the target's
    CHECK(db.w < 0.0);
    CHECK(db.h < 0.0);
}

TEST_CASE("stage 2 composite selects the smaller branch and adds the weighted divergence") {
    LossWeights w;
    NormBox target{0.5, 0.5, 0.3, 0.3};
    NormBox good{0.5, 0.5, 0.32, 0.3};
    NormBox bad{0.7, 0.7, 0.4, 0.5};

    Stage2Loss s = composite_loss_stage2(good, bad, target, 1e-4, w);
    CHECK(s.rgb_selected);
    CHECK(s.kl_term == doctest::Approx(0.08).epsilon(1e-15));
    CHECK(s.loss == s.box_loss_v + s.kl_term);
    CHECK(s.box_loss_v == doctest::Approx(composite_loss_stage13(good, target, w)).epsilon(1e-15));

    Stage2Loss flipped = composite_loss_stage2(bad, good, target, 0.0, w);
    CHECK_FALSE(flipped.rgb_selected);
    CHECK(flipped.loss == flipped.box_loss_t);

    // tie selects the RGB branch deterministically
    Stage2Loss tie = composite_loss_stage2(good, good, target, 0.0, w);
    CHECK(tie.rgb_selected);

    // composite >= kl term always
    CHECK(s.loss >= s.kl_term);

    // backward routes box gradients only into the selected branch
    NormBox dv, dt;
    composite_loss_stage2_backward(s, good, bad, target, w, 1.0, dv, dt);
    CHECK((std::abs(dv.cx) + std::abs(dv.cy) + std::abs(dv.w) + std::abs(dv.h)) > 0.0);
    CHECK(dt.cx == 0.0);
    CHECK(dt.w == 0.0);
}

// ---------------------------------------------------------------------------
// corner head
// ---------------------------------------------------------------------------

TEST_CASE("soft-argmax limits: uniform, saturated, and two-peak maps") {
    Tensor uni({4, 4}, 0.0);
    double x = 0, y = 0;
    soft_argmax(uni, x, y);
    CHECK(x == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(y == doctest::Approx(0.5).epsilon(1e-12));

    Tensor peak({4, 4}, 0.0);
    peak.at(1, 2) = 1000.0;
    soft_argmax(peak, x, y);
    CHECK(x == doctest::Approx((2 + 0.5) / 4.0).epsilon(1e-6));
    CHECK(y == doctest::Approx((1 + 0.5) / 4.0).epsilon(1e-6));

    Tensor two({4, 4}, -1000.0);
    two.at(1, 1) = 0.0;
    two.at(2, 2) = 0.0;
    soft_argmax(two, x, y);
    CHECK(x == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(y == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("corner box conversion and repair") {
    Corners c{0.2, 0.3, 0.6, 0.9};
    NormBox b = corners_to_box(c);
    CHECK(b.cx == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(b.cy == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(b.w == doctest::Approx(0.4).epsilon(1e-15));
    CHECK(b.h == doctest::Approx(0.6).epsilon(1e-15));

    // crossed corners keep the raw extent; repair clamps to the minimum size
    Corners crossed{0.6, 0.3, 0.2, 0.9};
    NormBox raw = corners_to_box(crossed);
    CHECK(raw.w == doctest::Approx(-0.4).epsilon(1e-15));
    NormBox rep = repair_box(raw);
    CHECK(rep.w == 1e-3);
    CHECK(rep.h == raw.h);
    CHECK(rep.cx == raw.cx);

    // identical corners repair to the minimal box at the midpoint
    NormBox tiny = repair_box(corners_to_box(Corners{0.5, 0.5, 0.5, 0.5}));
    CHECK(tiny.w == 1e-3);
    CHECK(tiny.h == 1e-3);
    CHECK(tiny.cx == 0.5);
}

TEST_CASE("box back-projection through the crop transform") {
    CropInfo crop{64.0, 64.0, 128.0, 32};
    NormBox full{0.5, 0.5, 1.0, 1.0};
    Box img = box_to_image(full, crop);
    CHECK(img.x == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(img.y == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(img.w == doctest::Approx(128.0).epsilon(1e-12));
    CHECK(img.h == doctest::Approx(128.0).epsilon(1e-12));

    // box_to_crop inverts box_to_image for boxes expressed in crop space
    NormBox nb{0.37, 0.62, 0.21, 0.18};
    Box px = box_to_image(nb, crop);
    NormBox back = box_to_crop(px, crop);
    CHECK(back.cx == doctest::Approx(nb.cx).epsilon(1e-9));
    CHECK(back.cy == doctest::Approx(nb.cy).epsilon(1e-9));
    CHECK(back.w == doctest::Approx(nb.w).epsilon(1e-9));
    CHECK(back.h == doctest::Approx(nb.h).epsilon(1e-9));
}

TEST_CASE("corner head maps have grid resolution; zero output conv flattens them") {
    Rng rng(61);
    CornerHead head("head", 32, rng);
    Tensor feat = rand2d(64, 32, rng);
    CornerHeadCache cache;
    head.forward(feat, cache);
    CHECK(cache.tl_map.dim(0) == 8);
    CHECK(cache.tl_map.dim(1) == 8);
    CHECK(cache.br_map.dim(0) == 8);

    for (auto& v : head.tl_kernel.back().value.values()) v = 0.0;
    for (auto& v : head.tl_bias.back().value.values()) v = 0.0;
    Tensor tl, br;
    head.heatmaps(feat, tl, br);
    for (std::size_t i = 0; i < tl.size(); ++i) CHECK(tl[i] == 0.0);
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

TEST_CASE("centered unjittered sample normalizes the target to a quarter of the crop") {
    Rng rng(17);
    Tensor frame = rand_image(64, rng);
    Box gt{26.0, 22.0, 12.0, 12.0};
    SampleConfig cfg;
    Rng srng(5);
    RGBTSample s = make_sample(frame, frame, gt, frame, frame, gt, cfg, srng, false);
    CHECK(s.gt.cx == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.gt.cy == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(s.gt.w == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.gt.h == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(s.x_rgb.dim(0) == 32);
    CHECK(s.z_rgb.dim(0) == 16);

    // identical rng seeds give bit-identical samples
    Rng ra(9), rb(9);
    RGBTSample s1 = make_sample(frame, frame, gt, frame, frame, gt, cfg, ra, true);
    RGBTSample s2 = make_sample(frame, frame, gt, frame, frame, gt, cfg, rb, true);
    CHECK(s1.gt.cx == s2.gt.cx);
    for (std::size_t i = 0; i < s1.x_rgb.size(); ++i) CHECK(s1.x_rgb[i] == s2.x_rgb[i]);
}

// ---------------------------------------------------------------------------
// checkpoints
// ---------------------------------------------------------------------------

TEST_CASE("checkpoint container round-trips bit-exactly and loads strictly") {
    TempDir tmp("ckpt");
    Rng rng(13);
    Param a("alpha", rand2d(3, 4, rng));
    Param b("beta", Tensor::from({2}, {1.5, -2.25}));
    ParamRefs params{&a, &b};
    const std::string path = tmp.sub("weights.ckpt");
    save_checkpoint(path, params);

    auto loaded = read_checkpoint(path);
    REQUIRE(loaded.size() == 2);
    REQUIRE(loaded.count("alpha") == 1);
    for (std::size_t i = 0; i < a.value.size(); ++i) CHECK(loaded["alpha"][i] == a.value[i]);

    Param a2("alpha", Tensor({3, 4}));
    Param b2("beta", Tensor({2}));
    ParamRefs dst{&a2, &b2};
    load_checkpoint(path, dst);
    for (std::size_t i = 0; i < a.value.size(); ++i) CHECK(a2.value[i] == a.value[i]);

    // saving again from the loaded values is byte-identical
    const std::string path2 = tmp.sub("weights2.ckpt");
    save_checkpoint(path2, dst);
    CHECK(slurp(path) == slurp(path2));

    // missing parameter in the file is an error
    Param extra("gamma", Tensor({1}));
    ParamRefs more{&a2, &b2, &extra};
    CHECK_THROWS(load_checkpoint(path, more));
    // unclaimed tensor in the file is an error under strict loading
    ParamRefs fewer{&a2};
    CHECK_THROWS(load_checkpoint(path, fewer));
    load_checkpoint(path, fewer, false);  // non-strict tolerates extras

    // shape mismatch is an error
    Param wrong("alpha", Tensor({4, 3}));
    ParamRefs ws{&wrong};
    CHECK_THROWS(load_checkpoint(path, ws, false));

    // corrupt magic rejected
    std::string bytes = slurp(path);
    bytes[0] = 'X';
    std::ofstream(tmp.sub("bad.ckpt"), std::ios::binary) << bytes;
    CHECK_THROWS(read_checkpoint(tmp.sub("bad.ckpt")));
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

namespace {
// ten-frame fixture with precomputed center errors and overlaps
const std::vector<std::pair<Box, Box>> kMetricFixture = {
    {{0, 0, 10, 10}, {0, 0, 10, 10}},    {{0, 0, 10, 10}, {3, 4, 10, 10}},
    {{0, 0, 10, 10}, {6, 8, 10, 10}},    {{0, 0, 10, 10}, {12, 16, 10, 10}},
    {{0, 0, 10, 10}, {15, 20, 10, 10}},  {{10, 10, 20, 20}, {20, 20, 20, 20}},
    {{10, 10, 20, 20}, {15, 15, 10, 10}},{{0, 0, 8, 8}, {1, 1, 8, 8}},
    {{5, 5, 10, 10}, {5, 5, 30, 10}},    {{0, 0, 4, 4}, {40, 0, 4, 4}},
};
}  // namespace

TEST_CASE("center error and overlap match the spreadsheet fixture exactly") {
    const std::vector<double> want_cle = {0.0, 5.0, 10.0, 20.0, 25.0,
                                          14.142135623730951, 0.0,
                                          1.4142135623730951, 10.0, 40.0};
    const std::vector<double> want_iou = {1.0, 0.26582278481012656, 0.041666666666666664,
                                          0.0, 0.0, 0.14285714285714285, 0.25,
                                          0.620253164556962, 0.3333333333333333, 0.0};
    for (std::size_t i = 0; i < kMetricFixture.size(); ++i) {
        CHECK(cle(kMetricFixture[i].second, kMetricFixture[i].first) == want_cle[i]);
        CHECK(iou(kMetricFixture[i].second, kMetricFixture[i].first) == want_iou[i]);
    }
}

TEST_CASE("precision and success curves match the spreadsheet oracle") {
    std::vector<Box> gts, preds;
    for (const auto& [g, p] : kMetricFixture) {
        gts.push_back(g);
        preds.push_back(p);
    }
    PrecisionResult pr = precision_curve(preds, gts);
    SuccessResult sr = success_curve(preds, gts);

    REQUIRE(pr.values.size() == 51);
    REQUIRE(sr.values.size() == 21);
    CHECK(pr.pr20 == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(sr.sr50 == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(sr.auc == doctest::Approx(0.26000000000000006).epsilon(1e-15));

    const std::vector<double> want_pr = {
        0.2, 0.2, 0.3, 0.3, 0.3, 0.4, 0.4, 0.4, 0.4, 0.4, 0.6, 0.6, 0.6,
        0.6, 0.6, 0.7, 0.7, 0.7, 0.7, 0.7, 0.8, 0.8, 0.8, 0.8, 0.8, 0.9,
        0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9, 0.9,
        0.9, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0};
    const std::vector<double> want_sr = {0.7, 0.6, 0.6, 0.5, 0.5, 0.4, 0.3,
                                         0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.1,
                                         0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1};
    for (std::size_t i = 0; i < want_pr.size(); ++i) CHECK(pr.values[i] == want_pr[i]);
    for (std::size_t i = 0; i < want_sr.size(); ++i) CHECK(sr.values[i] == want_sr[i]);

    // monotonicity: precision non-decreasing, success non-increasing
    for (std::size_t i = 1; i < pr.values.size(); ++i) CHECK(pr.values[i] >= pr.values[i - 1]);
    for (std::size_t i = 1; i < sr.values.size(); ++i) CHECK(sr.values[i] <= sr.values[i - 1]);

    // perfect predictions saturate both curves; the trapezoid area is 1 up to
    // accumulation rounding (one ulp)
    PrecisionResult ppr = precision_curve(gts, gts);
    SuccessResult psr = success_curve(gts, gts);
    for (double v : ppr.values) CHECK(v == 1.0);
    for (double v : psr.values) CHECK(v == 1.0);
    CHECK(psr.auc == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(mean_iou(gts, gts) == 1.0);
}

TEST_CASE("attribute table aggregates ALL plus tagged subsets") {
    SequenceResult s1{"a", {{0, 0, 10, 10}}, {{0, 0, 10, 10}}, {"SV"}};
    SequenceResult s2{"b", {{5, 5, 10, 10}}, {{0, 0, 10, 10}}, {"SV", "FM"}};
    auto rows = attribute_report({s1, s2});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].tag == "ALL");
    CHECK(rows[0].frames == 2);
    CHECK(rows[1].tag == "FM");
    CHECK(rows[1].frames == 1);
    CHECK(rows[2].tag == "SV");
    CHECK(rows[2].frames == 2);
}

TEST_CASE("results CSV round-trips exactly and reports render") {
    TempDir tmp("metrics");
    std::vector<Box> preds = {{0.5, 1.25, 10.125, 20.0625}, {3.1, 4.2, 5.3, 6.4}};
    const std::string path = tmp.sub("results.csv");
    write_results_csv(path, preds);
    std::vector<Box> back = read_results_csv(path);
    REQUIRE(back.size() == preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        CHECK(back[i].x == preds[i].x);
        CHECK(back[i].y == preds[i].y);
        CHECK(back[i].w == preds[i].w);
        CHECK(back[i].h == preds[i].h);
    }

    SequenceResult sr{"s", {{0, 0, 10, 10}}, {{1, 1, 10, 10}}, {"NO"}};
    write_report(tmp.sub("report"), {sr});
    for (const char* f : {"pr_curve.csv", "sr_curve.csv", "attributes.csv", "pr_curve.svg",
                          "sr_curve.svg"})
        CHECK(fs::exists(tmp.path / "report" / f));
}

// ---------------------------------------------------------------------------
// dataset
// ---------------------------------------------------------------------------

TEST_CASE("synthetic sequences are deterministic and annotated in-bounds") {
    SynthConfig cfg;
    cfg.frames = 6;
    cfg.seed = 42;
    SequencePair a = synth_sequence(cfg);
    SequencePair b = synth_sequence(cfg);
    REQUIRE(a.size() == 6);
    REQUIRE(a.gt.size() == 6);
    for (int i = 0; i < a.size(); ++i) {
        Tensor fa = a.rgb_frame(i), fb = b.rgb_frame(i);
        for (std::size_t j = 0; j < fa.size(); ++j) CHECK(fa[j] == fb[j]);
        CHECK(a.gt[i].x >= 0.0);
        CHECK(a.gt[i].x2() <= cfg.canvas);
        CHECK(a.gt[i].y2() <= cfg.canvas);
    }
}

TEST_CASE("sequence directories round-trip through disk") {
    TempDir tmp("seq");
    SynthConfig cfg;
    cfg.frames = 4;
    cfg.seed = 9;
    cfg.attributes = {"SV", "FM"};
    SequencePair seq = synth_sequence(cfg);
    write_sequence(tmp.sub("seq0"), seq);
    CHECK(fs::exists(tmp.path / "seq0" / "gt.txt"));
    CHECK(fs::exists(tmp.path / "seq0" / "rgb"));
    SequencePair back = load_sequence(tmp.sub("seq0"));
    REQUIRE(back.size() == 4);
    CHECK(back.attributes == seq.attributes);
    for (int i = 0; i < 4; ++i) {
        CHECK(back.gt[i].x == seq.gt[i].x);
        CHECK(back.gt[i].w == seq.gt[i].w);
        Tensor fa = seq.rgb_frame(i), fb = back.rgb_frame(i);
        REQUIRE(fa.shape() == fb.shape());
        // 8-bit image containers quantize pixel values
        for (std::size_t j = 0; j < fa.size(); ++j)
            CHECK(std::abs(fa[j] - fb[j]) <= 0.5 / 255.0 + 1e-12);
        Tensor ta = seq.tir_frame(i), tb = back.tir_frame(i);
        for (std::size_t j = 0; j < ta.size(); ++j)
            CHECK(std::abs(ta[j] - tb[j]) <= 0.5 / 255.0 + 1e-12);
    }

    std::vector<SequencePair> ds = load_dataset(tmp.str());
    REQUIRE(ds.size() == 1);
    CHECK(ds[0].name == "seq0");
}

TEST_CASE("benchmark family corrupts the requested modality over half of each sequence") {
    auto clean = benchmark_specs(4, 12, 5, "none");
    REQUIRE(clean.size() == 4);
    for (const auto& s : clean) {
        CHECK(s.rgb_corruption.empty());
        CHECK(s.tir_corruption.empty());
    }

    auto rgbc = benchmark_specs(4, 12, 5, "rgb");
    for (const auto& s : rgbc) {
        REQUIRE(s.rgb_corruption.size() == 1);
        CHECK(s.tir_corruption.empty());
        CHECK(s.rgb_corruption[0].end - s.rgb_corruption[0].begin == 6);
    }

    auto mixed = benchmark_specs(4, 12, 5, "mixed");
    CHECK(!mixed[0].rgb_corruption.empty());
    CHECK(!mixed[1].tir_corruption.empty());

    // corruption changes the affected frames relative to the clean twin
    SequencePair c0 = synth_sequence(clean[0]);
    SequencePair r0 = synth_sequence(rgbc[0]);
    const int mid = 12 / 4 + 1;
    bool differs = false;
    Tensor fa = c0.rgb_frame(mid), fb = r0.rgb_frame(mid);
    for (std::size_t j = 0; j < fa.size(); ++j) differs = differs || fa[j] != fb[j];
    CHECK(differs);
    // the untouched modality is identical
    Tensor ta = c0.tir_frame(mid), tb = r0.tir_frame(mid);
    for (std::size_t j = 0; j < ta.size(); ++j) CHECK(ta[j] == tb[j]);
}

// ---------------------------------------------------------------------------
// model assembly
// ---------------------------------------------------------------------------

TEST_CASE("variant names round-trip and gate the expected branches") {
    const std::vector<std::string> names = {"b-rgb", "b-t",       "dm",  "dm-cam",
                                            "dm-mam", "dm-cam-com", "full"};
    for (const auto& n : names) CHECK(variant_name(parse_variant(n)) == n);
    CHECK_THROWS(parse_variant("nope"));

    CHECK_FALSE(variant_uses_tir(VariantId::BRgb));
    CHECK_FALSE(variant_uses_rgb(VariantId::BT));
    CHECK(variant_uses_fusion(VariantId::Dm));
    CHECK_FALSE(variant_uses_shared(VariantId::Dm));
    CHECK(variant_uses_shared(VariantId::Full));
    CHECK(variant_uses_shared(VariantId::DmCamCom));

    CHECK(stages_for_variant(VariantId::BRgb) == std::vector<int>{1});
    CHECK(stages_for_variant(VariantId::Dm) == std::vector<int>{1, 3});
    CHECK(stages_for_variant(VariantId::Full) == std::vector<int>{1, 2, 3});
}

TEST_CASE("single-modality variant touches zero computation of the other branch") {
    ModelConfig cfg;
    cfg.fusion_k = 2;
    MacftModel model(VariantId::BRgb, cfg, 77);
    Rng rng(3);
    Tensor z = rand_image(16, rng), x = rand_image(32, rng);
    Tensor none;
    model.predict(z, x, none, none);
    CHECK(model.rgb_forward_count() == 1);
    CHECK(model.tir_forward_count() == 0);
    CHECK(model.shared_forward_count() == 0);
}

TEST_CASE("model forwards are deterministic in the seed") {
    ModelConfig cfg;
    cfg.fusion_k = 2;
    Rng rng(29);
    Tensor z = rand_image(16, rng), x = rand_image(32, rng);
    MacftModel m1(VariantId::Full, cfg, 123);
    MacftModel m2(VariantId::Full, cfg, 123);
    MacftModel m3(VariantId::Full, cfg, 124);
    NormBox b1 = m1.predict(z, x, z, x);
    NormBox b2 = m2.predict(z, x, z, x);
    NormBox b3 = m3.predict(z, x, z, x);
    CHECK(b1.cx == b2.cx);
    CHECK(b1.w == b2.w);
    CHECK(b1.cx != b3.cx);

    // the fused feature grid matches the search token count
    FusedState st;
    m1.forward_fused(z, x, z, x, &st, false);
    CHECK(st.fused.rows() == cfg.n_search());
    CHECK(st.fused.cols() == cfg.dim);
}

TEST_CASE("fusion variants produce head-compatible features from the same inputs") {
    Rng irng(31);
    Tensor z = rand_image(16, irng), x = rand_image(32, irng);
    for (VariantId v : {VariantId::Dm, VariantId::DmCam, VariantId::DmMam, VariantId::DmCamCom,
                        VariantId::Full}) {
        ModelConfig cfg;
        cfg.fusion_k = 2;
        MacftModel m(v, cfg, 500);
        NormBox b = m.predict(z, x, z, x);
        CHECK(std::isfinite(b.cx));
        CHECK(b.cx >= 0.0);
        CHECK(b.cx <= 1.0);
    }
}

// ---------------------------------------------------------------------------
// training plumbing
// ---------------------------------------------------------------------------

TEST_CASE("training rejects stages a variant does not have") {
    ModelConfig mcfg;
    mcfg.fusion_k = 2;
    MacftModel model(VariantId::BRgb, mcfg, 7);
    StageConfig scfg;
    scfg.stage = 2;
    scfg.epochs = 1;
    scfg.samples_per_epoch = 4;
    scfg.batch = 2;
    SynthConfig dcfg;
    dcfg.frames = 3;
    std::vector<SequencePair> data = {synth_sequence(dcfg)};
    SampleConfig samp;
    CHECK_THROWS(train_stage(model, scfg, samp, data, 1));
}

TEST_CASE("a training step leaves frozen parameters bit-identical") {
    ModelConfig mcfg;
    mcfg.fusion_k = 2;
    MacftModel model(VariantId::Full, mcfg, 7);
    SynthConfig dcfg;
    dcfg.frames = 4;
    dcfg.seed = 3;
    std::vector<SequencePair> data = {synth_sequence(dcfg)};
    SampleConfig samp;
    StageConfig scfg;
    scfg.stage = 3;
    scfg.epochs = 1;
    scfg.samples_per_epoch = 4;
    scfg.batch = 2;

    // all backbones are frozen in stage 3
    model.set_stage_trainable(3);
    const std::uint64_t before = params_checksum(model.params_backbones());
    TrainResult res = train_stage(model, scfg, samp, data, 99);
    CHECK(res.trace.size() == 2);
    CHECK(params_checksum(model.params_backbones()) == before);
    // but fusion + head moved
    CHECK(std::isfinite(res.trace.back().loss));
}

TEST_CASE("loss traces append with continued step numbering") {
    TempDir tmp("loss");
    const std::string path = tmp.sub("losses.csv");
    std::vector<TrainResult::Row> rows = {{0, 1.0, 0.5, 0.1, 0.0}, {1, 0.9, 0.4, 0.1, 0.0}};
    append_loss_csv(path, rows);
    append_loss_csv(path, rows);
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "step,loss,giou,l1,kl");
    std::vector<std::string> steps;
    while (std::getline(in, line)) steps.push_back(line.substr(0, line.find(',')));
    REQUIRE(steps.size() == 4);
    CHECK(steps[2] == "2");
    CHECK(steps[3] == "3");
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

TEST_CASE("config text round-trips byte-exactly") {
    RunConfig cfg;
    cfg.variant = "dm-cam";
    cfg.seed = 987654321;
    cfg.model.dim = 64;
    cfg.train.lr_rest = 0.00125;
    cfg.loss.kl = 12.5;
    const std::string text = emit_config(cfg);
    RunConfig parsed = parse_config_text(text);
    CHECK(emit_config(parsed) == text);
    CHECK(parsed.variant == "dm-cam");
    CHECK(parsed.model.dim == 64);
    CHECK(parsed.train.lr_rest == 0.00125);
}

TEST_CASE("config parsing rejects unknown keys and bad values") {
    CHECK_THROWS(parse_config_text("model.bogus=3\n"));
    CHECK_THROWS(parse_config_text("model.dim=abc\n"));
    CHECK_THROWS(parse_config_text("model.dim=32trailing\n"));
    RunConfig ok = parse_config_text("# comment line\nmodel.dim=48\n\nrun.variant=b-t\n");
    CHECK(ok.model.dim == 48);
    CHECK(ok.variant == "b-t");

    RunConfig cfg;
    apply_override(cfg, "train.batch=8");
    CHECK(cfg.train.batch == 8);
    CHECK_THROWS(apply_override(cfg, "no-equals-sign"));

    RunConfig bad;
    bad.variant = "nonsense";
    CHECK_THROWS(finalize_config(bad));
    RunConfig bad2;
    bad2.model.dim = 30;  // not divisible by head count / 16
    CHECK_THROWS(finalize_config(bad2));
}

TEST_CASE("finalize syncs crop geometry from the model") {
    RunConfig cfg;
    cfg.model.search_size = 64;
    cfg.model.template_size = 32;
    cfg.model.patch = 8;
    finalize_config(cfg);
    CHECK(cfg.sample.search_size == 64);
    CHECK(cfg.sample.template_size == 32);
}

// ---------------------------------------------------------------------------
// tracking
// ---------------------------------------------------------------------------

TEST_CASE("tracker emits one in-bounds box per frame deterministically") {
    SynthConfig dcfg;
    dcfg.frames = 5;
    dcfg.seed = 21;
    SequencePair seq = synth_sequence(dcfg);
    ModelConfig mcfg;
    mcfg.fusion_k = 2;
    MacftModel model(VariantId::Full, mcfg, 42);
    SampleConfig samp;
    std::vector<Box> t1 = track_sequence(model, seq, samp);
    std::vector<Box> t2 = track_sequence(model, seq, samp);
    REQUIRE(t1.size() == 5);
    for (std::size_t i = 0; i < t1.size(); ++i) {
        CHECK(t1[i].w > 0.0);
        CHECK(t1[i].h > 0.0);
        CHECK(t1[i].x == t2[i].x);
        CHECK(t1[i].y == t2[i].y);
    }
}

// ---------------------------------------------------------------------------
// command line
// ---------------------------------------------------------------------------

namespace {
int run_args(std::vector<std::string> args) {
    std::vector<char*> argv;
    args.insert(args.begin(), "macft");
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::map<std::string, std::string> dir_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file())
            out[fs::relative(e.path(), root).string()] = slurp(e.path().string());
    return out;
}
}  // namespace

TEST_CASE("cli exit codes: usage errors are 2, runtime failures are 1") {
    CHECK(run_args({"--definitely-not-a-flag"}) == 2);
    CHECK(run_args({"train"}) == 2);  // missing required --stage
    TempDir tmp("cliq");
    CHECK(run_args({"eval", "--results", tmp.sub("missing.csv"), "--seq", tmp.sub("nowhere"),
                    "--out", tmp.sub("o")}) == 1);
}

TEST_CASE("synth subcommand is deterministic across runs") {
    TempDir tmp("synthcli");
    CHECK(run_args({"synth", "--out", tmp.sub("a"), "--seed", "7", "--sequences", "2",
                    "--frames", "3"}) == 0);
    CHECK(run_args({"synth", "--out", tmp.sub("b"), "--seed", "7", "--sequences", "2",
                    "--frames", "3"}) == 0);
    auto a = dir_contents(tmp.path / "a");
    auto b = dir_contents(tmp.path / "b");
    REQUIRE(!a.empty());
    CHECK(a == b);
}

TEST_CASE("thread cap reads the environment variable strictly") {
    unsetenv("MACFT_THREADS");
    CHECK(thread_cap() == 1);
    setenv("MACFT_THREADS", "4", 1);
    CHECK(thread_cap() == 4);
    setenv("MACFT_THREADS", "0", 1);
    CHECK_THROWS(thread_cap());
    setenv("MACFT_THREADS", "abc", 1);
    CHECK_THROWS(thread_cap());
    unsetenv("MACFT_THREADS");
}

TEST_CASE("eval on ground-truth results saturates both headline metrics") {
    TempDir tmp("clieval");
    SynthConfig dcfg;
    dcfg.frames = 5;
    dcfg.seed = 33;
    SequencePair seq = synth_sequence(dcfg);
    write_sequence(tmp.sub("seq"), seq);
    write_results_csv(tmp.sub("results.csv"), seq.gt);
    CHECK(run_args({"eval", "--results", tmp.sub("results.csv"), "--seq", tmp.sub("seq"),
                    "--out", tmp.sub("out")}) == 0);
    const std::string sr_csv = slurp(tmp.sub("out") + "/report/sr_curve.csv");
    std::istringstream ss(sr_csv);
    std::string line;
    std::getline(ss, line);  // header
    while (std::getline(ss, line)) {
        const std::string value = line.substr(line.find(',') + 1);
        CHECK(std::stod(value) == 1.0);
    }
}
