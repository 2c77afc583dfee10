#include "macft/sampling.hpp"

#include <algorithm>
#include <cmath>

#include "macft/common.hpp"

namespace macft {

CropInfo template_crop_info(const Box& gt, const SampleConfig& cfg) {
    check(gt.w >= 1.0 && gt.h >= 1.0, "degenerate gt box: w=", gt.w, " h=", gt.h);
    CropInfo crop;
    crop.cx = gt.cx();
    crop.cy = gt.cy();
    crop.side = std::max(cfg.template_factor * std::sqrt(gt.w * gt.h), cfg.min_crop_side);
    crop.out_size = cfg.template_size;
    return crop;
}

CropInfo search_crop_info(double cx, double cy, double ref_w, double ref_h,
                          const SampleConfig& cfg) {
    CropInfo crop;
    crop.cx = cx;
    crop.cy = cy;
    crop.side = std::max(cfg.search_factor * std::sqrt(std::max(ref_w, 1.0) * std::max(ref_h, 1.0)),
                         cfg.min_crop_side);
    crop.out_size = cfg.search_size;
    return crop;
}

NormBox box_to_crop(const Box& b, const CropInfo& crop) {
    NormBox nb;
    nb.cx = (b.cx() - (crop.cx - 0.5 * crop.side)) / crop.side;
    nb.cy = (b.cy() - (crop.cy - 0.5 * crop.side)) / crop.side;
    nb.w = b.w / crop.side;
    nb.h = b.h / crop.side;
    return nb;
}

RGBTSample make_sample(const Tensor& rgb_template_frame, const Tensor& tir_template_frame,
                       const Box& template_gt, const Tensor& rgb_frame, const Tensor& tir_frame,
                       const Box& gt, const SampleConfig& cfg, Rng& rng, bool jitter) {
    check(gt.w >= 1.0 && gt.h >= 1.0, "degenerate gt box: w=", gt.w, " h=", gt.h);
    RGBTSample s;
    s.template_crop = template_crop_info(template_gt, cfg);
    s.z_rgb = crop_resize(rgb_template_frame, s.template_crop);
    s.z_tir = crop_resize(tir_template_frame, s.template_crop);

    double scale = 1.0, jx = 0.0, jy = 0.0;
    if (jitter) {
        scale = rng.uniform(cfg.scale_jitter_lo, cfg.scale_jitter_hi);
        const double base_side =
            std::max(cfg.search_factor * std::sqrt(gt.w * gt.h) * scale, cfg.min_crop_side);
        jx = rng.uniform(-cfg.center_jitter, cfg.center_jitter) * base_side;
        jy = rng.uniform(-cfg.center_jitter, cfg.center_jitter) * base_side;
    }
    s.search_crop = search_crop_info(gt.cx() + jx, gt.cy() + jy, gt.w * scale, gt.h * scale, cfg);
    s.x_rgb = crop_resize(rgb_frame, s.search_crop);
    s.x_tir = crop_resize(tir_frame, s.search_crop);
    s.gt = box_to_crop(gt, s.search_crop);
    return s;
}

}  // namespace macft
