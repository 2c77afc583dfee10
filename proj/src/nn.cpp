#include "macft/nn.hpp"

#include <cmath>
#include <cstring>

#include "macft/common.hpp"

namespace macft {

namespace {
constexpr double kInitStd = 0.02;

Tensor normal_init(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, kInitStd);
    return t;
}
}  // namespace

Linear::Linear(const std::string& prefix, int in_dim, int out_dim, Rng& rng)
    : weight(prefix + ".weight", normal_init({in_dim, out_dim}, rng)),
      bias(prefix + ".bias", Tensor({out_dim})) {}

Tensor Linear::forward(const Tensor& x) const {
    check(x.rank() == 2 && x.cols() == weight.value.rows(), "linear input ", x.shape_str(),
          " does not match weight ", weight.value.shape_str(), " (", weight.name, ")");
    Tensor y = matmul(x, weight.value);
    const int out = y.cols();
    for (int r = 0; r < y.rows(); ++r)
        for (int c = 0; c < out; ++c) y.at(r, c) += bias.value[c];
    return y;
}

Tensor Linear::backward(const Tensor& x, const Tensor& dy) {
    Tensor dx(x.shape());
    matmul_backward(x, weight.value, dy, dx.data(),
                    weight.value.requires_grad() ? weight.value.grad() : nullptr);
    if (bias.value.requires_grad()) {
        double* db = bias.value.grad();
        for (int r = 0; r < dy.rows(); ++r)
            for (int c = 0; c < dy.cols(); ++c) db[c] += dy.at(r, c);
    }
    return dx;
}

void Linear::collect(ParamRefs& out) {
    out.push_back(&weight);
    out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& prefix, int dim, double eps_)
    : gamma(prefix + ".gamma", Tensor({dim}, 1.0)), beta(prefix + ".beta", Tensor({dim})), eps(eps_) {}

Tensor LayerNorm::forward(const Tensor& x, LayerNormCache& cache) const {
    return layer_norm(x, gamma.value, beta.value, eps, &cache);
}

Tensor LayerNorm::backward(const LayerNormCache& cache, const Tensor& dy) {
    return layer_norm_backward(cache, gamma.value, dy,
                               gamma.value.requires_grad() ? gamma.value.grad() : nullptr,
                               beta.value.requires_grad() ? beta.value.grad() : nullptr);
}

void LayerNorm::collect(ParamRefs& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
}

Ffn::Ffn(const std::string& prefix, int dim, int hidden, Rng& rng)
    : fc1(prefix + ".fc1", dim, hidden, rng), fc2(prefix + ".fc2", hidden, dim, rng) {}

Tensor Ffn::forward(const Tensor& x, FfnCache& cache) const {
    cache.x = x;
    cache.h = fc1.forward(x);
    return fc2.forward(gelu(cache.h));
}

Tensor Ffn::backward(const FfnCache& cache, const Tensor& dy) {
    Tensor dact = fc2.backward(gelu(cache.h), dy);
    Tensor dh = gelu_backward(cache.h, dact);
    return fc1.backward(cache.x, dh);
}

void Ffn::collect(ParamRefs& out) {
    fc1.collect(out);
    fc2.collect(out);
}

MultiHeadAttention::MultiHeadAttention(const std::string& prefix, int dim, int heads, Rng& rng)
    : proj_q(prefix + ".q", dim, dim, rng),
      proj_k(prefix + ".k", dim, dim, rng),
      proj_v(prefix + ".v", dim, dim, rng),
      proj_out(prefix + ".out", dim, dim, rng),
      dim_(dim),
      heads_(heads) {
    check(heads >= 1 && dim % heads == 0, "attention dim ", dim, " not divisible by heads ", heads);
}

namespace {

// Gather one head's columns into a contiguous [N x d] buffer.
void gather_head(const Tensor& x, int head, int d, Tensor& out) {
    const int n = x.rows();
    for (int r = 0; r < n; ++r)
        std::memcpy(out.data() + static_cast<std::size_t>(r) * d,
                    x.data() + static_cast<std::size_t>(r) * x.cols() + static_cast<std::size_t>(head) * d,
                    static_cast<std::size_t>(d) * sizeof(double));
}

void scatter_head_add(Tensor& x, int head, int d, const Tensor& in) {
    const int n = x.rows();
    for (int r = 0; r < n; ++r) {
        double* dst = x.data() + static_cast<std::size_t>(r) * x.cols() + static_cast<std::size_t>(head) * d;
        const double* src = in.data() + static_cast<std::size_t>(r) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
}

}  // namespace

Tensor MultiHeadAttention::forward(const Tensor& xq, const Tensor& xkv, AttentionCache& cache) const {
    check(xq.rank() == 2 && xkv.rank() == 2 && xq.cols() == dim_ && xkv.cols() == dim_,
          "attention inputs must be [N x ", dim_, "], got ", xq.shape_str(), " and ",
          xkv.shape_str());
    const int nq = xq.rows(), nk = xkv.rows();
    const int d = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    cache.q = proj_q.forward(xq);
    cache.k = proj_k.forward(xkv);
    cache.v = proj_v.forward(xkv);
    cache.attn = Tensor({heads_ * nq, nk});
    cache.concat = Tensor({nq, dim_});

    Tensor qh({nq, d}), kh({nk, d}), vh({nk, d});
    for (int h = 0; h < heads_; ++h) {
        gather_head(cache.q, h, d, qh);
        gather_head(cache.k, h, d, kh);
        gather_head(cache.v, h, d, vh);

        Tensor scores({nq, nk});
        gemm_nt_acc(nq, nk, d, qh.data(), kh.data(), scores.data());
        for (std::size_t i = 0; i < scores.size(); ++i) scores[i] *= scale;
        Tensor attn = softmax(scores, 1);
        std::memcpy(cache.attn.data() + static_cast<std::size_t>(h) * nq * nk, attn.data(),
                    attn.size() * sizeof(double));

        Tensor out({nq, d});
        gemm_nn(nq, d, nk, attn.data(), vh.data(), out.data());
        for (int r = 0; r < nq; ++r)
            std::memcpy(cache.concat.data() + static_cast<std::size_t>(r) * dim_ + static_cast<std::size_t>(h) * d,
                        out.data() + static_cast<std::size_t>(r) * d,
                        static_cast<std::size_t>(d) * sizeof(double));
    }
    return proj_out.forward(cache.concat);
}

void MultiHeadAttention::backward(const Tensor& xq, const Tensor& xkv, const AttentionCache& cache,
                                  const Tensor& dy, Tensor& dxq, Tensor& dxkv) {
    const int nq = xq.rows(), nk = xkv.rows();
    const int d = dim_ / heads_;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));

    Tensor dconcat = proj_out.backward(cache.concat, dy);

    Tensor dq({nq, dim_}), dk({nk, dim_}), dv({nk, dim_});
    Tensor qh({nq, d}), kh({nk, d}), vh({nk, d}), dout({nq, d});
    for (int h = 0; h < heads_; ++h) {
        gather_head(cache.q, h, d, qh);
        gather_head(cache.k, h, d, kh);
        gather_head(cache.v, h, d, vh);
        gather_head(dconcat, h, d, dout);

        Tensor attn({nq, nk});
        std::memcpy(attn.data(), cache.attn.data() + static_cast<std::size_t>(h) * nq * nk,
                    attn.size() * sizeof(double));

        // out = attn * vh
        Tensor dattn({nq, nk});
        gemm_nt_acc(nq, nk, d, dout.data(), vh.data(), dattn.data());
        Tensor dvh({nk, d});
        gemm_tn_acc(nq, d, nk, attn.data(), dout.data(), dvh.data());

        Tensor dscores = softmax_backward(attn, dattn, 1);
        for (std::size_t i = 0; i < dscores.size(); ++i) dscores[i] *= scale;

        // scores = qh * kh^T
        Tensor dqh({nq, d}), dkh({nk, d});
        gemm_nn(nq, d, nk, dscores.data(), kh.data(), dqh.data());
        gemm_tn_acc(nq, d, nk, dscores.data(), qh.data(), dkh.data());

        scatter_head_add(dq, h, d, dqh);
        scatter_head_add(dk, h, d, dkh);
        scatter_head_add(dv, h, d, dvh);
    }

    Tensor t = proj_q.backward(xq, dq);
    for (std::size_t i = 0; i < t.size(); ++i) dxq[i] += t[i];
    t = proj_k.backward(xkv, dk);
    for (std::size_t i = 0; i < t.size(); ++i) dxkv[i] += t[i];
    t = proj_v.backward(xkv, dv);
    for (std::size_t i = 0; i < t.size(); ++i) dxkv[i] += t[i];
}

void MultiHeadAttention::collect(ParamRefs& out) {
    proj_q.collect(out);
    proj_k.collect(out);
    proj_v.collect(out);
    proj_out.collect(out);
}

EncoderLayer::EncoderLayer(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng)
    : attn(prefix + ".attn", dim, heads, rng),
      ln1(prefix + ".ln1", dim),
      ln2(prefix + ".ln2", dim),
      ffn(prefix + ".ffn", dim, ffn_hidden, rng) {}

Tensor EncoderLayer::forward(const Tensor& x, EncoderLayerCache& cache) const {
    cache.n1 = ln1.forward(x, cache.ln1);
    Tensor att = attn.forward(cache.n1, cache.n1, cache.attn);
    cache.a = x;
    for (std::size_t i = 0; i < att.size(); ++i) cache.a[i] += att[i];
    Tensor n2 = ln2.forward(cache.a, cache.ln2);
    Tensor f = ffn.forward(n2, cache.ffn);
    Tensor y = cache.a;
    for (std::size_t i = 0; i < f.size(); ++i) y[i] += f[i];
    return y;
}

Tensor EncoderLayer::backward(const Tensor& x, const EncoderLayerCache& cache, const Tensor& dy) {
    // y = a + ffn(ln2(a))
    Tensor dn2 = ffn.backward(cache.ffn, dy);
    Tensor da = ln2.backward(cache.ln2, dn2);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i];

    // a = x + attn(n1), n1 = ln1(x)
    Tensor dn1({x.rows(), x.cols()});
    attn.backward(cache.n1, cache.n1, cache.attn, da, dn1, dn1);
    Tensor dx = ln1.backward(cache.ln1, dn1);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += da[i];
    return dx;
}

void EncoderLayer::collect(ParamRefs& out) {
    attn.collect(out);
    ln1.collect(out);
    ln2.collect(out);
    ffn.collect(out);
}

void EncoderLayer::set_trainable(bool on) {
    ParamRefs refs;
    collect(refs);
    for (Param* p : refs) p->set_trainable(on);
}

}  // namespace macft
