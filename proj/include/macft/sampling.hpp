#pragma once

#include "macft/box.hpp"
#include "macft/image.hpp"
#include "macft/rng.hpp"

namespace macft {

struct SampleConfig {
    int search_size = 32;
    int template_size = 16;
    double template_factor = 2.0;  // template crop side = factor * sqrt(w*h)
    double search_factor = 4.0;    // search crop side = factor * sqrt(w*h)
    double center_jitter = 0.25;   // uniform, fraction of the search side
    double scale_jitter_lo = 0.8;
    double scale_jitter_hi = 1.25;
    double min_crop_side = 8.0;  // pixels; tiny boxes still get a usable crop
};

// One aligned RGB+TIR training/inference sample: both modalities share the
// same crop geometry.
struct RGBTSample {
    Tensor z_rgb, x_rgb, z_tir, x_tir;
    NormBox gt;  // ground truth in normalized search-crop coordinates
    CropInfo template_crop, search_crop;
};

CropInfo template_crop_info(const Box& gt, const SampleConfig& cfg);
CropInfo search_crop_info(double cx, double cy, double ref_w, double ref_h,
                          const SampleConfig& cfg);

// Express an image-pixel box in normalized crop coordinates.
NormBox box_to_crop(const Box& b, const CropInfo& crop);

// Training sample: template centered on the reference gt, search jittered
// around the current gt (jitter drawn from rng; pass jitter=false for a
// centered sample). template_src/search frames may differ (template comes
// from the annotated reference frame).
RGBTSample make_sample(const Tensor& rgb_template_frame, const Tensor& tir_template_frame,
                       const Box& template_gt, const Tensor& rgb_frame, const Tensor& tir_frame,
                       const Box& gt, const SampleConfig& cfg, Rng& rng, bool jitter = true);

}  // namespace macft
