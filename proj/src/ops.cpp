#include "macft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "macft/common.hpp"

namespace macft {

void gemm_nn(int m, int n, int k, const double* a, const double* b, double* c) {
    std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt_acc(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void gemm_tn_acc(int m, int n, int k, const double* a, const double* b, double* c) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2, "matmul expects 2-d tensors, got ", a.shape_str(), " and ",
          b.shape_str());
    check(a.cols() == b.rows(), "matmul inner dimensions disagree: ", a.shape_str(), " vs ",
          b.shape_str());
    Tensor c({a.rows(), b.cols()});
    gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), b.data(), c.data());
    return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dc, double* da, double* db) {
    check(dc.rank() == 2 && dc.rows() == a.rows() && dc.cols() == b.cols(),
          "matmul_backward shape mismatch: dc ", dc.shape_str(), " for a ", a.shape_str(), " b ",
          b.shape_str());
    if (da) gemm_nt_acc(a.rows(), a.cols(), b.cols(), dc.data(), b.data(), da);
    if (db) gemm_tn_acc(a.rows(), b.cols(), a.cols(), a.data(), dc.data(), db);
}

namespace {

// Iterate the tensor as outer x axis x inner.
struct AxisView {
    std::size_t outer, axis, inner;
};

AxisView axis_view(const Tensor& x, int axis) {
    check(axis >= 0 && axis < x.rank(), "axis ", axis, " out of range for ", x.shape_str());
    AxisView v{1, static_cast<std::size_t>(x.dim(axis)), 1};
    for (int i = 0; i < axis; ++i) v.outer *= static_cast<std::size_t>(x.dim(i));
    for (int i = axis + 1; i < x.rank(); ++i) v.inner *= static_cast<std::size_t>(x.dim(i));
    return v;
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
    const AxisView v = axis_view(x, axis);
    check(v.axis > 0, "softmax axis is empty");
    x.ensure_finite("softmax input");
    Tensor y(x.shape());
    const double* in = x.data();
    double* out = y.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.axis * v.inner + i;
            double mx = in[base];
            for (std::size_t a = 1; a < v.axis; ++a) mx = std::max(mx, in[base + a * v.inner]);
            double sum = 0.0;
            for (std::size_t a = 0; a < v.axis; ++a) {
                const double e = std::exp(in[base + a * v.inner] - mx);
                out[base + a * v.inner] = e;
                sum += e;
            }
            for (std::size_t a = 0; a < v.axis; ++a) out[base + a * v.inner] /= sum;
        }
    }
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& dy, int axis) {
    check(y.same_shape(dy), "softmax_backward shape mismatch");
    const AxisView v = axis_view(y, axis);
    Tensor dx(y.shape());
    const double* yv = y.data();
    const double* dv = dy.data();
    double* out = dx.data();
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.axis * v.inner + i;
            double dot = 0.0;
            for (std::size_t a = 0; a < v.axis; ++a) {
                const std::size_t idx = base + a * v.inner;
                dot += yv[idx] * dv[idx];
            }
            for (std::size_t a = 0; a < v.axis; ++a) {
                const std::size_t idx = base + a * v.inner;
                out[idx] = yv[idx] * (dv[idx] - dot);
            }
        }
    }
    return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  LayerNormCache* cache) {
    const int d = x.dim(x.rank() - 1);
    check(gamma.rank() == 1 && gamma.dim(0) == d, "layer_norm gamma length ", gamma.shape_str(),
          " does not match feature dim ", d);
    check(beta.rank() == 1 && beta.dim(0) == d, "layer_norm beta length ", beta.shape_str(),
          " does not match feature dim ", d);
    const std::size_t rows = x.size() / static_cast<std::size_t>(d);
    Tensor y(x.shape());
    Tensor xhat(x.shape());
    std::vector<double> inv_std(rows);
    const double* in = x.data();
    double* out = y.data();
    double* xh = xhat.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = in + r * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += row[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = row[j] - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int j = 0; j < d; ++j) {
            const double h = (row[j] - mean) * is;
            xh[r * d + j] = h;
            out[r * d + j] = gamma[j] * h + beta[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

Tensor layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& dy,
                           double* dgamma, double* dbeta) {
    const int d = dy.dim(dy.rank() - 1);
    const std::size_t rows = dy.size() / static_cast<std::size_t>(d);
    Tensor dx(dy.shape());
    const double* xh = cache.xhat.data();
    const double* g = gamma.data();
    const double* dv = dy.data();
    double* out = dx.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const double is = cache.inv_std[r];
        double mean_dxhat = 0.0;
        double mean_dxhat_xhat = 0.0;
        for (int j = 0; j < d; ++j) {
            const std::size_t idx = r * d + j;
            const double dxhat = dv[idx] * g[j];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * xh[idx];
            if (dgamma) dgamma[j] += dv[idx] * xh[idx];
            if (dbeta) dbeta[j] += dv[idx];
        }
        mean_dxhat /= d;
        mean_dxhat_xhat /= d;
        for (int j = 0; j < d; ++j) {
            const std::size_t idx = r * d + j;
            const double dxhat = dv[idx] * g[j];
            out[idx] = is * (dxhat - mean_dxhat - xh[idx] * mean_dxhat_xhat);
        }
    }
    return dx;
}

namespace {
constexpr double kGeluCoef = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / 3.14159265358979323846);
}  // namespace

double gelu_scalar(double x) {
    const double u = kSqrt2OverPi * (x + kGeluCoef * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

Tensor gelu(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
    return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
    check(x.same_shape(dy), "gelu_backward shape mismatch");
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x[i];
        const double u = kSqrt2OverPi * (v + kGeluCoef * v * v * v);
        const double t = std::tanh(u);
        const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCoef * v * v);
        dx[i] = dy[i] * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du);
    }
    return dx;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, int stride, int padding) {
    check(x.rank() == 3, "conv2d input must be HxWxC, got ", x.shape_str());
    check(kernel.rank() == 4, "conv2d kernel must be KhxKwxCinxCout, got ", kernel.shape_str());
    const int h = x.dim(0), w = x.dim(1), cin = x.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1), kcin = kernel.dim(2), cout = kernel.dim(3);
    check(cin == kcin, "conv2d channel mismatch: input ", x.shape_str(), " kernel ",
          kernel.shape_str());
    check(stride >= 1, "conv2d stride must be >= 1");
    check(kh <= h + 2 * padding && kw <= w + 2 * padding, "conv2d kernel ", kernel.shape_str(),
          " larger than padded input ", x.shape_str());
    const int ho = (h + 2 * padding - kh) / stride + 1;
    const int wo = (w + 2 * padding - kw) / stride + 1;
    check(ho > 0 && wo > 0, "conv2d output dims must be positive");
    Tensor y({ho, wo, cout});
    const double* in = x.data();
    const double* kv = kernel.data();
    double* out = y.data();
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            double* opix = out + (static_cast<std::size_t>(oy) * wo + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= w) continue;
                    const double* ipix = in + (static_cast<std::size_t>(iy) * w + ix) * cin;
                    const double* kpos = kv + ((static_cast<std::size_t>(ky) * kw + kx) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double iv = ipix[ci];
                        const double* kc = kpos + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) opix[co] += iv * kc[co];
                    }
                }
            }
        }
    }
    return y;
}

void conv2d_backward(const Tensor& x, const Tensor& kernel, const Tensor& dout, int stride,
                     int padding, double* dx, double* dkernel) {
    const int h = x.dim(0), w = x.dim(1), cin = x.dim(2);
    const int kh = kernel.dim(0), kw = kernel.dim(1), cout = kernel.dim(3);
    const int ho = dout.dim(0), wo = dout.dim(1);
    check(dout.dim(2) == cout, "conv2d_backward channel mismatch");
    const double* in = x.data();
    const double* kv = kernel.data();
    const double* dv = dout.data();
    for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox) {
            const double* dpix = dv + (static_cast<std::size_t>(oy) * wo + ox) * cout;
            for (int ky = 0; ky < kh; ++ky) {
                const int iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= h) continue;
                for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - padding + kx;
                    if (ix < 0 || ix >= w) continue;
                    const std::size_t ipos = (static_cast<std::size_t>(iy) * w + ix) * cin;
                    const std::size_t kpos = ((static_cast<std::size_t>(ky) * kw + kx) * cin) * cout;
                    for (int ci = 0; ci < cin; ++ci) {
                        double acc_dx = 0.0;
                        const double* kc = kv + kpos + static_cast<std::size_t>(ci) * cout;
                        for (int co = 0; co < cout; ++co) acc_dx += dpix[co] * kc[co];
                        if (dx) dx[ipos + ci] += acc_dx;
                        if (dkernel) {
                            const double iv = in[ipos + ci];
                            double* dkc = dkernel + kpos + static_cast<std::size_t>(ci) * cout;
                            for (int co = 0; co < cout; ++co) dkc[co] += iv * dpix[co];
                        }
                    }
                }
            }
        }
    }
}

Tensor add_channel_bias(const Tensor& x, const Tensor& bias) {
    const int c = x.dim(x.rank() - 1);
    check(bias.rank() == 1 && bias.dim(0) == c, "bias length does not match channel count ", c);
    Tensor y = x;
    double* out = y.data();
    const std::size_t pixels = x.size() / static_cast<std::size_t>(c);
    for (std::size_t p = 0; p < pixels; ++p)
        for (int j = 0; j < c; ++j) out[p * c + j] += bias[j];
    return y;
}

void add_channel_bias_backward(const Tensor& dy, int channels, double* dbias) {
    const std::size_t pixels = dy.size() / static_cast<std::size_t>(channels);
    for (std::size_t p = 0; p < pixels; ++p)
        for (int j = 0; j < channels; ++j) dbias[j] += dy[p * channels + j];
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(),
          "concat_rows needs matching column counts: ", a.shape_str(), " vs ", b.shape_str());
    Tensor y({a.rows() + b.rows(), a.cols()});
    std::memcpy(y.data(), a.data(), a.size() * sizeof(double));
    std::memcpy(y.data() + a.size(), b.data(), b.size() * sizeof(double));
    return y;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    check(a.rank() == 2 && b.rank() == 2 && a.rows() == b.rows(),
          "concat_cols needs matching row counts: ", a.shape_str(), " vs ", b.shape_str());
    const int n = a.rows(), ca = a.cols(), cb = b.cols();
    Tensor y({n, ca + cb});
    for (int i = 0; i < n; ++i) {
        std::memcpy(y.data() + static_cast<std::size_t>(i) * (ca + cb),
                    a.data() + static_cast<std::size_t>(i) * ca, ca * sizeof(double));
        std::memcpy(y.data() + static_cast<std::size_t>(i) * (ca + cb) + ca,
                    b.data() + static_cast<std::size_t>(i) * cb, cb * sizeof(double));
    }
    return y;
}

Tensor slice_rows(const Tensor& x, int begin, int end) {
    check(x.rank() == 2 && begin >= 0 && end <= x.rows() && begin < end, "slice_rows range [",
          begin, ",", end, ") invalid for ", x.shape_str());
    Tensor y({end - begin, x.cols()});
    std::memcpy(y.data(), x.data() + static_cast<std::size_t>(begin) * x.cols(),
                y.size() * sizeof(double));
    return y;
}

}  // namespace macft
