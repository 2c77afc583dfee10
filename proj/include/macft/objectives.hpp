#pragma once

#include "macft/box.hpp"

namespace macft {

struct LossWeights {
    double giou = 2.0;
    double l1 = 5.0;
    double kl = 800.0;
};

// Mean absolute difference over the 4 center-form coordinates.
double l1_box_loss(const NormBox& b, const NormBox& target);
void l1_box_loss_backward(const NormBox& b, const NormBox& target, double dloss, NormBox& db);

// 1 - GIoU, in [0, 2]. Both boxes need positive extents.
double giou_loss(const NormBox& b, const NormBox& target);
void giou_loss_backward(const NormBox& b, const NormBox& target, double dloss, NormBox& db);

// Box-regression objective used by stages 1 and 3.
double composite_loss_stage13(const NormBox& b, const NormBox& target, const LossWeights& w);
void composite_loss_stage13_backward(const NormBox& b, const NormBox& target,
                                     const LossWeights& w, double dloss, NormBox& db);

// Stage 2: the smaller of the two per-modality box losses (ties select the
// RGB branch) plus the weighted divergence term.
struct Stage2Loss {
    double loss = 0.0;
    double box_loss_v = 0.0;
    double box_loss_t = 0.0;
    double kl_term = 0.0;   // lambda_kl * l_div
    bool rgb_selected = true;
};

Stage2Loss composite_loss_stage2(const NormBox& b_v, const NormBox& b_t, const NormBox& target,
                                 double l_div, const LossWeights& w);
// Box-path gradients: the selected branch receives the composite backward,
// the other receives zero. The KL path is handled by the caller (its
// gradient coefficient is w.kl).
void composite_loss_stage2_backward(const Stage2Loss& parts, const NormBox& b_v,
                                    const NormBox& b_t, const NormBox& target,
                                    const LossWeights& w, double dloss, NormBox& db_v,
                                    NormBox& db_t);

}  // namespace macft
