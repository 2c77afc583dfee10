#pragma once

namespace macft {

// Axis-aligned box, top-left + size. Units are whatever the context uses
// (image pixels for tracking results, crop-normalized for model outputs).
struct Box {
    double x = 0.0, y = 0.0, w = 0.0, h = 0.0;

    double cx() const { return x + 0.5 * w; }
    double cy() const { return y + 0.5 * h; }
    double x2() const { return x + w; }
    double y2() const { return y + h; }
};

// Center-form box normalized to the crop, the form the losses consume.
struct NormBox {
    double cx = 0.0, cy = 0.0, w = 0.0, h = 0.0;
};

inline Box to_corner_form(const NormBox& b) {
    return Box{b.cx - 0.5 * b.w, b.cy - 0.5 * b.h, b.w, b.h};
}

inline NormBox to_center_form(const Box& b) { return NormBox{b.cx(), b.cy(), b.w, b.h}; }

}  // namespace macft
