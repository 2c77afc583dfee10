#pragma once

#include "macft/backbone.hpp"

namespace macft {

// The modal-shared branch reuses the Backbone module: one parameter set, two
// forward passes (RGB pair and TIR pair). Its distinguishing piece is the
// consistency loss below, which pulls the two modality features together.

struct SharedForward {
    TokenSequence rgb, tir;
};

SharedForward forward_shared(const Backbone& shared, const Tensor& z_rgb, const Tensor& x_rgb,
                             const Tensor& z_tir, const Tensor& x_tir,
                             BackboneCache* cache_rgb = nullptr,
                             BackboneCache* cache_tir = nullptr);

struct KlResult {
    double loss = 0.0;
    Tensor p_v, p_t;  // row-softmax (over features) of the two inputs
};

// Mean over token rows of KL(p_v || p_t), feature-axis softmax, natural log;
// p_t is floor-clamped at 1e-12 before the log.
KlResult kl_divergence_loss(const Tensor& g_v, const Tensor& g_t);

// Accumulates d(loss)/dG into dg_v / dg_t, scaled by upstream dloss.
void kl_divergence_backward(const KlResult& r, double dloss, Tensor& dg_v, Tensor& dg_t);

}  // namespace macft
