#include "macft/corner_head.hpp"

#include <cmath>

#include "macft/common.hpp"

namespace macft {

void soft_argmax(const Tensor& map, double& x, double& y, Tensor* prob) {
    check(map.rank() == 2 && map.rows() == map.cols(), "soft_argmax expects a square map, got ",
          map.shape_str());
    map.ensure_finite("soft_argmax input");
    const int s = map.rows();
    Tensor flat = Tensor::from({s * s}, map.values());
    Tensor p = softmax(flat, 0);
    x = 0.0;
    y = 0.0;
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            const double pr = p[static_cast<std::size_t>(r) * s + c];
            x += pr * ((c + 0.5) / s);
            y += pr * ((r + 0.5) / s);
        }
    if (prob) *prob = std::move(p);
}

Tensor soft_argmax_backward(const Tensor& prob, int side, double dx, double dy) {
    Tensor dp(prob.shape());
    for (int r = 0; r < side; ++r)
        for (int c = 0; c < side; ++c)
            dp[static_cast<std::size_t>(r) * side + c] =
                dx * ((c + 0.5) / side) + dy * ((r + 0.5) / side);
    Tensor dflat = softmax_backward(prob, dp, 0);
    return Tensor::from({side, side}, dflat.values());
}

namespace {
constexpr double kMinExtent = 1e-3;
}

NormBox corners_to_box(const Corners& c) {
    NormBox b;
    b.cx = 0.5 * (c.x1 + c.x2);
    b.cy = 0.5 * (c.y1 + c.y2);
    b.w = c.x2 - c.x1;
    b.h = c.y2 - c.y1;
    return b;
}

void corners_to_box_backward(const Corners& c, const NormBox& dbox, Corners& dcorners) {
    (void)c;
    dcorners.x1 = 0.5 * dbox.cx - dbox.w;
    dcorners.x2 = 0.5 * dbox.cx + dbox.w;
    dcorners.y1 = 0.5 * dbox.cy - dbox.h;
    dcorners.y2 = 0.5 * dbox.cy + dbox.h;
}

NormBox repair_box(const NormBox& b) {
    NormBox out = b;
    if (out.w < kMinExtent) out.w = kMinExtent;
    if (out.h < kMinExtent) out.h = kMinExtent;
    return out;
}

void repair_box_backward(const NormBox& b, const NormBox& dout, NormBox& din) {
    din.cx += dout.cx;
    din.cy += dout.cy;
    if (b.w >= kMinExtent) din.w += dout.w;
    if (b.h >= kMinExtent) din.h += dout.h;
}

Box box_to_image(const NormBox& b, const CropInfo& crop) {
    Box out;
    out.w = b.w * crop.side;
    out.h = b.h * crop.side;
    out.x = crop.to_image_x(b.cx) - 0.5 * out.w;
    out.y = crop.to_image_y(b.cy) - 0.5 * out.h;
    return out;
}

CornerHead::CornerHead(const std::string& prefix, int dim, Rng& rng) : dim_(dim) {
    check(dim % 16 == 0 && dim >= 16, "corner head needs dim divisible by 16, got ", dim);
    auto make_stack = [&](const char* stem, std::vector<Param>& kernels,
                          std::vector<Param>& biases) {
        int cin = dim;
        for (int i = 0; i < 5; ++i) {
            const int cout = i < 4 ? cin / 2 : 1;
            Tensor k({3, 3, cin, cout});
            for (std::size_t j = 0; j < k.size(); ++j) k[j] = rng.normal(0.0, 0.02);
            const std::string name =
                prefix + "." + stem + ".conv" + std::to_string(i);
            kernels.emplace_back(name + ".kernel", std::move(k));
            biases.emplace_back(name + ".bias", Tensor({cout}));
            cin = cout;
        }
    };
    make_stack("tl", tl_kernel, tl_bias);
    make_stack("br", br_kernel, br_bias);
}

Tensor CornerHead::run_stack(const Tensor& grid, const std::vector<Param>& kernels,
                             const std::vector<Param>& biases, std::vector<Tensor>* inputs,
                             std::vector<Tensor>* pres) const {
    Tensor x = grid;
    for (int i = 0; i < 5; ++i) {
        if (inputs) inputs->push_back(x);
        Tensor z = add_channel_bias(conv2d(x, kernels[i].value, 1, 1), biases[i].value);
        if (pres) pres->push_back(z);
        x = i < 4 ? gelu(z) : std::move(z);
    }
    // squeeze [S x S x 1] -> [S x S]
    return Tensor::from({x.dim(0), x.dim(1)}, x.values());
}

Tensor CornerHead::stack_backward(std::vector<Param>& kernels, std::vector<Param>& biases,
                                  const std::vector<Tensor>& inputs,
                                  const std::vector<Tensor>& pres, const Tensor& dmap) {
    Tensor dx = Tensor::from({dmap.rows(), dmap.cols(), 1}, dmap.values());
    for (int i = 4; i >= 0; --i) {
        Tensor dz = i < 4 ? gelu_backward(pres[i], dx) : std::move(dx);
        if (biases[i].value.requires_grad())
            add_channel_bias_backward(dz, biases[i].value.dim(0), biases[i].value.grad());
        Tensor dprev(inputs[i].shape());
        conv2d_backward(inputs[i], kernels[i].value, dz, 1, 1, dprev.data(),
                        kernels[i].value.requires_grad() ? kernels[i].value.grad() : nullptr);
        dx = std::move(dprev);
    }
    return dx;
}

Corners CornerHead::forward(const Tensor& feat, CornerHeadCache& cache) const {
    check(feat.rank() == 2 && feat.cols() == dim_, "corner head expects [N x ", dim_, "], got ",
          feat.shape_str());
    const int n = feat.rows();
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    check(s * s == n, "corner head needs a perfect-square token count, got ", n);
    cache.grid = Tensor::from({s, s, dim_}, feat.values());
    cache.tl_in.clear();
    cache.br_in.clear();
    cache.tl_pre.clear();
    cache.br_pre.clear();
    cache.tl_map = run_stack(cache.grid, tl_kernel, tl_bias, &cache.tl_in, &cache.tl_pre);
    cache.br_map = run_stack(cache.grid, br_kernel, br_bias, &cache.br_in, &cache.br_pre);
    Corners c;
    soft_argmax(cache.tl_map, c.x1, c.y1, &cache.tl_prob);
    soft_argmax(cache.br_map, c.x2, c.y2, &cache.br_prob);
    return c;
}

void CornerHead::heatmaps(const Tensor& feat, Tensor& tl, Tensor& br) const {
    const int n = feat.rows();
    const int s = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
    check(s * s == n, "corner head needs a perfect-square token count, got ", n);
    Tensor grid = Tensor::from({s, s, dim_}, feat.values());
    tl = run_stack(grid, tl_kernel, tl_bias, nullptr, nullptr);
    br = run_stack(grid, br_kernel, br_bias, nullptr, nullptr);
}

Tensor CornerHead::backward(const CornerHeadCache& cache, const Corners& dcorners) {
    const int s = cache.tl_map.rows();
    Tensor dtl = soft_argmax_backward(cache.tl_prob, s, dcorners.x1, dcorners.y1);
    Tensor dbr = soft_argmax_backward(cache.br_prob, s, dcorners.x2, dcorners.y2);
    Tensor dgrid_tl = stack_backward(tl_kernel, tl_bias, cache.tl_in, cache.tl_pre, dtl);
    Tensor dgrid_br = stack_backward(br_kernel, br_bias, cache.br_in, cache.br_pre, dbr);
    Tensor dfeat({s * s, dim_});
    for (std::size_t i = 0; i < dfeat.size(); ++i) dfeat[i] = dgrid_tl[i] + dgrid_br[i];
    return dfeat;
}

void CornerHead::collect(ParamRefs& out) {
    for (auto& p : tl_kernel) out.push_back(&p);
    for (auto& p : tl_bias) out.push_back(&p);
    for (auto& p : br_kernel) out.push_back(&p);
    for (auto& p : br_bias) out.push_back(&p);
}

void CornerHead::set_trainable(bool on) {
    ParamRefs refs;
    collect(refs);
    for (Param* p : refs) p->set_trainable(on);
}

}  // namespace macft
