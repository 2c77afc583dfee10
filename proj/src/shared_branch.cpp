#include "macft/shared_branch.hpp"

#include <cmath>

#include "macft/common.hpp"

namespace macft {

namespace {
constexpr double kProbFloor = 1e-12;
}

SharedForward forward_shared(const Backbone& shared, const Tensor& z_rgb, const Tensor& x_rgb,
                             const Tensor& z_tir, const Tensor& x_tir, BackboneCache* cache_rgb,
                             BackboneCache* cache_tir) {
    check(z_rgb.same_shape(z_tir) && x_rgb.same_shape(x_tir),
          "shared branch needs matching geometry across modalities");
    SharedForward out;
    out.rgb = shared.forward(z_rgb, x_rgb, cache_rgb);
    out.tir = shared.forward(z_tir, x_tir, cache_tir);
    return out;
}

KlResult kl_divergence_loss(const Tensor& g_v, const Tensor& g_t) {
    check(g_v.same_shape(g_t), "KL inputs must share shape: ", g_v.shape_str(), " vs ",
          g_t.shape_str());
    check(g_v.rank() == 2, "KL inputs must be [N x D]");
    g_v.ensure_finite("KL input G_v");
    g_t.ensure_finite("KL input G_t");
    KlResult r;
    r.p_v = softmax(g_v, 1);
    r.p_t = softmax(g_t, 1);
    const int n = g_v.rows(), d = g_v.cols();
    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double pv = r.p_v.at(i, j);
            const double pt = std::max(r.p_t.at(i, j), kProbFloor);
            if (pv > 0.0) total += pv * std::log(pv / pt);
        }
    r.loss = total / n;
    check(std::isfinite(r.loss), "KL loss is not finite");
    return r;
}

void kl_divergence_backward(const KlResult& r, double dloss, Tensor& dg_v, Tensor& dg_t) {
    const int n = r.p_v.rows(), d = r.p_v.cols();
    const double scale = dloss / n;
    Tensor dp_v(r.p_v.shape()), dp_t(r.p_t.shape());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
            const double pv = r.p_v.at(i, j);
            const double pt_raw = r.p_t.at(i, j);
            const double pt = std::max(pt_raw, kProbFloor);
            dp_v.at(i, j) = scale * (std::log(std::max(pv, kProbFloor) / pt) + 1.0);
            // clamped entries are flat in p_t
            dp_t.at(i, j) = pt_raw > kProbFloor ? -scale * pv / pt : 0.0;
        }
    Tensor dv = softmax_backward(r.p_v, dp_v, 1);
    Tensor dt = softmax_backward(r.p_t, dp_t, 1);
    for (std::size_t i = 0; i < dv.size(); ++i) dg_v[i] += dv[i];
    for (std::size_t i = 0; i < dt.size(); ++i) dg_t[i] += dt[i];
}

}  // namespace macft
