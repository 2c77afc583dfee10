#pragma once

#include <vector>

#include "macft/box.hpp"
#include "macft/image.hpp"
#include "macft/nn.hpp"

namespace macft {

// Probability-weighted mean of cell centers after a softmax over all cells.
// Returns (x, y) in [0,1]^2; `prob` (optional) receives the cell softmax for
// backward.
void soft_argmax(const Tensor& map, double& x, double& y, Tensor* prob = nullptr);
// dmap given the cached softmax and gradients w.r.t. the (x, y) output.
Tensor soft_argmax_backward(const Tensor& prob, int side, double dx, double dy);

struct Corners {
    double x1 = 0.0, y1 = 0.0, x2 = 0.0, y2 = 0.0;  // normalized TL and BR
};

// Corner pair -> center-form box with raw midpoint and raw (possibly
// degenerate) extents. Raw extents keep the regression losses' restoring
// gradient alive when the corners cross; consumers that need a proper box
// apply repair_box.
NormBox corners_to_box(const Corners& c);
void corners_to_box_backward(const Corners& c, const NormBox& dbox, Corners& dcorners);

// Degenerate-extent repair: any extent below the minimum size 1e-3 collapses
// to exactly 1e-3 around the same center (subgradient zero through the
// collapsed extent). Applied before back-projection and before area-based
// losses, which require proper boxes.
NormBox repair_box(const NormBox& b);
void repair_box_backward(const NormBox& b, const NormBox& dout, NormBox& din);

// Normalized crop-space box -> image-pixel box through the crop transform.
Box box_to_image(const NormBox& b, const CropInfo& crop);

struct CornerHeadCache {
    Tensor grid;  // [S x S x C]
    std::vector<Tensor> tl_in, br_in;    // per-conv inputs
    std::vector<Tensor> tl_pre, br_pre;  // per-conv pre-activation outputs
    Tensor tl_map, br_map;               // [S x S]
    Tensor tl_prob, br_prob;             // cell softmax of each map
};

// Two independent 5-layer conv stacks (3x3, stride 1, padding 1, channels
// C -> C/2 -> C/4 -> C/8 -> C/16 -> 1, GELU between) score the top-left and
// bottom-right corners on the search grid; soft-argmax reads out coordinates.
class CornerHead {
  public:
    CornerHead() = default;
    CornerHead(const std::string& prefix, int dim, Rng& rng);

    // feat is [N_x x C] with N_x a perfect square (row-major grid order).
    Corners forward(const Tensor& feat, CornerHeadCache& cache) const;
    // Score maps only (export/diagnostics); same path as forward.
    void heatmaps(const Tensor& feat, Tensor& tl, Tensor& br) const;
    // Returns d(feat); accumulates parameter gradients.
    Tensor backward(const CornerHeadCache& cache, const Corners& dcorners);

    void collect(ParamRefs& out);
    void set_trainable(bool on);

    std::vector<Param> tl_kernel, tl_bias, br_kernel, br_bias;

  private:
    Tensor run_stack(const Tensor& grid, const std::vector<Param>& kernels,
                     const std::vector<Param>& biases, std::vector<Tensor>* inputs,
                     std::vector<Tensor>* pres) const;
    Tensor stack_backward(std::vector<Param>& kernels, std::vector<Param>& biases,
                          const std::vector<Tensor>& inputs, const std::vector<Tensor>& pres,
                          const Tensor& dmap);

    int dim_ = 0;
};

}  // namespace macft
