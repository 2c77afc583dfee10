#pragma once

#include <string>

#include "macft/ops.hpp"
#include "macft/param.hpp"
#include "macft/rng.hpp"

namespace macft {

// Layer modules own their parameters; per-call activation state lives in
// external cache structs so forward passes are const and thread-safe. Every
// backward computes the input gradient and accumulates parameter gradients
// only where the parameter is marked trainable.

class Linear {
  public:
    Linear() = default;
    Linear(const std::string& prefix, int in_dim, int out_dim, Rng& rng);

    Tensor forward(const Tensor& x) const;  // [N x in] -> [N x out]
    Tensor backward(const Tensor& x, const Tensor& dy);

    void collect(ParamRefs& out);

    Param weight;  // [in x out]
    Param bias;    // [out]
};

class LayerNorm {
  public:
    LayerNorm() = default;
    LayerNorm(const std::string& prefix, int dim, double eps = 1e-6);

    Tensor forward(const Tensor& x, LayerNormCache& cache) const;
    Tensor backward(const LayerNormCache& cache, const Tensor& dy);

    void collect(ParamRefs& out);

    Param gamma, beta;
    double eps = 1e-6;
};

struct FfnCache {
    Tensor x;  // input
    Tensor h;  // pre-activation hidden
};

class Ffn {
  public:
    Ffn() = default;
    Ffn(const std::string& prefix, int dim, int hidden, Rng& rng);

    Tensor forward(const Tensor& x, FfnCache& cache) const;
    Tensor backward(const FfnCache& cache, const Tensor& dy);

    void collect(ParamRefs& out);

    Linear fc1, fc2;
};

struct AttentionCache {
    Tensor q, k, v;  // projected [Nq x D], [Nk x D], [Nk x D]
    Tensor attn;     // row-stochastic weights, stacked per head: [(h*Nq) x Nk]
    Tensor concat;   // heads concatenated before the output projection [Nq x D]
};

class MultiHeadAttention {
  public:
    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& prefix, int dim, int heads, Rng& rng);

    // Queries from xq, keys/values from xkv (pass the same tensor for
    // self-attention).
    Tensor forward(const Tensor& xq, const Tensor& xkv, AttentionCache& cache) const;
    // Accumulates into dxq/dxkv (pass the same accumulator twice for
    // self-attention).
    void backward(const Tensor& xq, const Tensor& xkv, const AttentionCache& cache,
                  const Tensor& dy, Tensor& dxq, Tensor& dxkv);

    void collect(ParamRefs& out);

    int heads() const { return heads_; }
    int dim() const { return dim_; }

    Linear proj_q, proj_k, proj_v, proj_out;

  private:
    int dim_ = 0, heads_ = 0;
};

struct EncoderLayerCache {
    LayerNormCache ln1, ln2;
    Tensor n1;  // normalized input fed to attention
    AttentionCache attn;
    Tensor a;  // post-attention residual sum (input to the FFN half)
    FfnCache ffn;
};

// Pre-norm transformer block: a = x + MHA(LN(x)); y = a + FFN(LN(a)).
class EncoderLayer {
  public:
    EncoderLayer() = default;
    EncoderLayer(const std::string& prefix, int dim, int heads, int ffn_hidden, Rng& rng);

    Tensor forward(const Tensor& x, EncoderLayerCache& cache) const;
    Tensor backward(const Tensor& x, const EncoderLayerCache& cache, const Tensor& dy);

    void collect(ParamRefs& out);
    void set_trainable(bool on);

    MultiHeadAttention attn;
    LayerNorm ln1, ln2;
    Ffn ffn;
};

}  // namespace macft
