#pragma once

#include "macft/tensor.hpp"

namespace macft {

// Low-level GEMM kernels over raw row-major buffers.
// c[MxN] = a[MxK] * b[KxN]            (overwrite)
void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c);
// c[MxN] += a[MxK] * b[NxK]^T
void gemm_nt_acc(int m, int n, int k, const double* a, const double* b, double* c);
// c[KxN] += a[MxK]^T * b[MxN]
void gemm_tn_acc(int m, int n, int k, const double* a, const double* b, double* c);

// Matrix product of 2-d tensors; inner dimensions must agree.
Tensor matmul(const Tensor& a, const Tensor& b);
// da += dc * b^T, db += a^T * dc; either destination may be null.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, double* da, double* db);

// Numerically stable softmax along `axis`.
Tensor softmax(const Tensor& x, int axis);
// dx given the softmax output y and upstream dy.
Tensor softmax_backward(const Tensor& y, const Tensor& dy, int axis);

struct LayerNormCache {
    Tensor xhat;
    std::vector<double> inv_std;
};

// Per-row normalization over the last axis (population variance) followed by
// the affine gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  LayerNormCache* cache = nullptr);
Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                           double* dgamma, double* dbeta);

// tanh-approximation GELU.
double gelu_scalar(double x);
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

// Cross-correlation with zero padding. x is [H x W x Cin], kernel is
// [Kh x Kw x Cin x Cout], output [Ho x Wo x Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding);
void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout, int stride,
                     int padding, double* dx, double* dkernel);

// out[..., c] = x[..., c] + bias[c] over the last axis.
Tensor add_channel_bias(const Tensor& x, const Tensor& bias);
void add_channel_bias_backward(const Tensor& dy, int channels, double* dbias);

// Row-wise concatenation of two matrices with equal column counts.
Tensor concat_rows(const Tensor& a, const Tensor& b);
// Column-wise (per-row channel) concatenation of two matrices with equal row counts.
Tensor concat_cols(const Tensor& a, const Tensor& b);
// Slice of rows [begin, end).
Tensor slice_rows(const Tensor& x, int begin, int end);

}  // namespace macft
