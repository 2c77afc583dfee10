#pragma once

#include <string>

#include "macft/tensor.hpp"

namespace macft {

// Images are Tensors shaped [H x W x 3] with values in [0,1]. Thermal frames
// are stored single-band on disk (PGM) and replicated to 3 channels on load so
// both modalities share one embedding shape.

// Square crop of the source image described in source-pixel units, plus the
// model input resolution it was resized to. Predictions in normalized crop
// coordinates are mapped back to image pixels through this.
struct CropInfo {
    double cx = 0.0;    // crop center x, source pixels
    double cy = 0.0;    // crop center y, source pixels
    double side = 1.0;  // crop side length, source pixels
    int out_size = 0;   // model input side, pixels

    double resize_factor() const { return static_cast<double>(out_size) / side; }

    // Normalized crop coordinate (u,v) in [0,1]^2 -> source pixel coordinate.
    double to_image_x(double u) const { return cx - 0.5 * side + u * side; }
    double to_image_y(double v) const { return cy - 0.5 * side + v * side; }
};

Tensor load_image(const std::string& path);  // dispatches on extension (.png/.pgm)
Tensor load_png(const std::string& path);
Tensor load_pgm(const std::string& path);

void save_png(const std::string& path, const Tensor& img);
void save_pgm(const std::string& path, const Tensor& img);  // saves channel mean

// Writes a [H x W] matrix as an 8-bit PGM heatmap, min-max normalized.
void save_heatmap_pgm(const std::string& path, const Tensor& map);

// Bilinear square crop-resize. Regions outside the source are zero.
Tensor crop_resize(const Tensor& img, const CropInfo& crop);

}  // namespace macft
