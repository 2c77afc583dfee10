#include "macft/objectives.hpp"

#include <algorithm>
#include <cmath>

#include "macft/common.hpp"
#include "macft/corner_head.hpp"

namespace macft {

double l1_box_loss(const NormBox& b, const NormBox& target) {
    return (std::fabs(b.cx - target.cx) + std::fabs(b.cy - target.cy) +
            std::fabs(b.w - target.w) + std::fabs(b.h - target.h)) /
           4.0;
}

namespace {
double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }
}  // namespace

void l1_box_loss_backward(const NormBox& b, const NormBox& target, double dloss, NormBox& db) {
    const double s = dloss / 4.0;
    db.cx += s * sign_of(b.cx - target.cx);
    db.cy += s * sign_of(b.cy - target.cy);
    db.w += s * sign_of(b.w - target.w);
    db.h += s * sign_of(b.h - target.h);
}

namespace {

struct GiouParts {
    double ax1, ay1, ax2, ay2;  // prediction corners
    double iw, ih, inter, area_a, area_b, uni, iou, cw, ch, area_c;
};

GiouParts giou_forward_parts(const NormBox& b, const NormBox& target) {
    check(b.w > 0.0 && b.h > 0.0, "giou_loss: prediction has non-positive extent (w=", b.w,
          ", h=", b.h, ")");
    check(target.w > 0.0 && target.h > 0.0, "giou_loss: target has non-positive extent (w=",
          target.w, ", h=", target.h, ")");
    GiouParts p;
    p.ax1 = b.cx - 0.5 * b.w;
    p.ay1 = b.cy - 0.5 * b.h;
    p.ax2 = b.cx + 0.5 * b.w;
    p.ay2 = b.cy + 0.5 * b.h;
    const double bx1 = target.cx - 0.5 * target.w;
    const double by1 = target.cy - 0.5 * target.h;
    const double bx2 = target.cx + 0.5 * target.w;
    const double by2 = target.cy + 0.5 * target.h;
    p.iw = std::max(0.0, std::min(p.ax2, bx2) - std::max(p.ax1, bx1));
    p.ih = std::max(0.0, std::min(p.ay2, by2) - std::max(p.ay1, by1));
    p.inter = p.iw * p.ih;
    p.area_a = b.w * b.h;
    p.area_b = target.w * target.h;
    p.uni = p.area_a + p.area_b - p.inter;
    p.iou = p.inter / p.uni;
    p.cw = std::max(p.ax2, bx2) - std::min(p.ax1, bx1);
    p.ch = std::max(p.ay2, by2) - std::min(p.ay1, by1);
    p.area_c = p.cw * p.ch;
    return p;
}

}  // namespace

double giou_loss(const NormBox& b, const NormBox& target) {
    const GiouParts p = giou_forward_parts(b, target);
    const double giou = p.iou - (p.area_c - p.uni) / p.area_c;
    return 1.0 - giou;
}

void giou_loss_backward(const NormBox& b, const NormBox& target, double dloss, NormBox& db) {
    const GiouParts p = giou_forward_parts(b, target);
    const double bx1 = target.cx - 0.5 * target.w;
    const double by1 = target.cy - 0.5 * target.h;
    const double bx2 = target.cx + 0.5 * target.w;
    const double by2 = target.cy + 0.5 * target.h;

    // Corner derivatives of the intersection (subgradient gates at the
    // min/max selections; inactive when the overlap is empty).
    double di_dax1 = 0.0, di_day1 = 0.0, di_dax2 = 0.0, di_day2 = 0.0;
    if (p.iw > 0.0 && p.ih > 0.0) {
        di_dax1 = (p.ax1 >= bx1 ? -1.0 : 0.0) * p.ih;
        di_dax2 = (p.ax2 <= bx2 ? 1.0 : 0.0) * p.ih;
        di_day1 = (p.ay1 >= by1 ? -1.0 : 0.0) * p.iw;
        di_day2 = (p.ay2 <= by2 ? 1.0 : 0.0) * p.iw;
    }
    // Prediction area in corner form: (ax2-ax1)(ay2-ay1).
    const double daa_dax1 = -(p.ay2 - p.ay1);
    const double daa_dax2 = (p.ay2 - p.ay1);
    const double daa_day1 = -(p.ax2 - p.ax1);
    const double daa_day2 = (p.ax2 - p.ax1);
    // Enclosing box sides.
    const double dcw_dax1 = p.ax1 <= bx1 ? -1.0 : 0.0;
    const double dcw_dax2 = p.ax2 >= bx2 ? 1.0 : 0.0;
    const double dch_day1 = p.ay1 <= by1 ? -1.0 : 0.0;
    const double dch_day2 = p.ay2 >= by2 ? 1.0 : 0.0;

    auto corner_grad = [&](double di, double daa, double dac) {
        const double du = daa - di;
        const double diou = (di * p.uni - p.inter * du) / (p.uni * p.uni);
        // penalty = (area_c - uni)/area_c = 1 - uni/area_c
        const double dpen = -(du * p.area_c - p.uni * dac) / (p.area_c * p.area_c);
        // loss = 1 - iou + penalty
        return dloss * (-diou + dpen);
    };

    const double dax1 = corner_grad(di_dax1, daa_dax1, dcw_dax1 * p.ch);
    const double dax2 = corner_grad(di_dax2, daa_dax2, dcw_dax2 * p.ch);
    const double day1 = corner_grad(di_day1, daa_day1, dch_day1 * p.cw);
    const double day2 = corner_grad(di_day2, daa_day2, dch_day2 * p.cw);

    db.cx += dax1 + dax2;
    db.cy += day1 + day2;
    db.w += 0.5 * (dax2 - dax1);
    db.h += 0.5 * (day2 - day1);
}

double composite_loss_stage13(const NormBox& b, const NormBox& target, const LossWeights& w) {
    // The overlap term requires a proper box, so it reads the repaired
    // extents; the l1 term reads the raw parameters so a degenerate
    // prediction keeps a restoring gradient instead of sitting in the
    // repair's zero-gradient zone. For proper boxes the two views coincide.
    return w.giou * giou_loss(repair_box(b), target) + w.l1 * l1_box_loss(b, target);
}

void composite_loss_stage13_backward(const NormBox& b, const NormBox& target,
                                     const LossWeights& w, double dloss, NormBox& db) {
    NormBox drep;
    giou_loss_backward(repair_box(b), target, dloss * w.giou, drep);
    repair_box_backward(b, drep, db);
    l1_box_loss_backward(b, target, dloss * w.l1, db);
}

Stage2Loss composite_loss_stage2(const NormBox& b_v, const NormBox& b_t, const NormBox& target,
                                 double l_div, const LossWeights& w) {
    Stage2Loss parts;
    parts.box_loss_v = composite_loss_stage13(b_v, target, w);
    parts.box_loss_t = composite_loss_stage13(b_t, target, w);
    parts.rgb_selected = parts.box_loss_v <= parts.box_loss_t;
    parts.kl_term = w.kl * l_div;
    parts.loss = std::min(parts.box_loss_v, parts.box_loss_t) + parts.kl_term;
    return parts;
}

void composite_loss_stage2_backward(const Stage2Loss& parts, const NormBox& b_v,
                                    const NormBox& b_t, const NormBox& target,
                                    const LossWeights& w, double dloss, NormBox& db_v,
                                    NormBox& db_t) {
    if (parts.rgb_selected)
        composite_loss_stage13_backward(b_v, target, w, dloss, db_v);
    else
        composite_loss_stage13_backward(b_t, target, w, dloss, db_t);
}

}  // namespace macft
