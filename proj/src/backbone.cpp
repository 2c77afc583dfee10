#include "macft/backbone.hpp"

#include <filesystem>
#include <fstream>

#include "macft/common.hpp"
#include "macft/image.hpp"

namespace macft {

Backbone::Backbone(const std::string& prefix, const BackboneConfig& cfg, Rng& rng)
    : final_ln(prefix + ".final_ln", cfg.dim), cfg_(cfg) {
    check(cfg.depth >= 1, "backbone depth must be >= 1");
    check(cfg.dim % cfg.heads == 0, "dim ", cfg.dim, " not divisible by heads ", cfg.heads);
    check(cfg.freeze_count >= 0 && cfg.freeze_count <= cfg.depth, "freeze_count ",
          cfg.freeze_count, " outside [0, ", cfg.depth, "]");
    layers.reserve(cfg.depth);
    for (int l = 0; l < cfg.depth; ++l)
        layers.emplace_back(prefix + ".layers." + std::to_string(l), cfg.dim, cfg.heads,
                            cfg.ffn_mult * cfg.dim, rng);
}

Tensor Backbone::forward_stack(const Tensor& tokens, BackboneCache* cache) const {
    Tensor t = tokens;
    if (cache) {
        cache->layer_inputs.resize(layers.size());
        cache->layers.resize(layers.size());
        for (std::size_t l = 0; l < layers.size(); ++l) {
            cache->layer_inputs[l] = t;
            t = layers[l].forward(t, cache->layers[l]);
        }
    } else {
        EncoderLayerCache scratch;
        for (const auto& layer : layers) t = layer.forward(t, scratch);
    }
    return t;
}

TokenSequence Backbone::forward(const Tensor& z_tokens, const Tensor& x_tokens,
                                BackboneCache* cache) const {
    check(z_tokens.rank() == 2 && x_tokens.rank() == 2 && z_tokens.cols() == x_tokens.cols(),
          "template/search token dims disagree: ", z_tokens.shape_str(), " vs ",
          x_tokens.shape_str());
    check(z_tokens.cols() == cfg_.dim, "token dim ", z_tokens.cols(), " != backbone dim ",
          cfg_.dim);
    TokenSequence seq;
    seq.n_template = z_tokens.rows();
    seq.n_search = x_tokens.rows();
    if (cache) {
        cache->n_template = seq.n_template;
        cache->n_search = seq.n_search;
    }
    Tensor t = forward_stack(concat_rows(z_tokens, x_tokens), cache);
    if (cache) {
        seq.tokens = final_ln.forward(t, cache->final_ln);
    } else {
        LayerNormCache scratch;
        seq.tokens = final_ln.forward(t, scratch);
    }
    return seq;
}

Tensor Backbone::backward(const BackboneCache& cache, const Tensor& dy) {
    check(cache.layers.size() == layers.size(), "backbone backward without a cached forward");
    Tensor d = final_ln.backward(cache.final_ln, dy);
    for (int l = static_cast<int>(layers.size()) - 1; l >= 0; --l)
        d = layers[l].backward(cache.layer_inputs[l], cache.layers[l], d);
    return d;
}

void Backbone::collect(ParamRefs& out) {
    for (auto& layer : layers) layer.collect(out);
    final_ln.collect(out);
}

void Backbone::set_trainable(bool on, int freeze_count) {
    check(freeze_count >= 0 && freeze_count <= static_cast<int>(layers.size()),
          "freeze_count ", freeze_count, " outside [0, ", layers.size(), "]");
    for (int l = 0; l < static_cast<int>(layers.size()); ++l)
        layers[l].set_trainable(on && l >= freeze_count);
    ParamRefs ln;
    final_ln.collect(ln);
    for (Param* p : ln) p->set_trainable(on);
}

ParamRefs Backbone::frozen_params(int freeze_count) {
    ParamRefs out;
    for (int l = 0; l < freeze_count && l < static_cast<int>(layers.size()); ++l)
        layers[l].collect(out);
    return out;
}

AttentionBlocks split_attention_blocks(const Tensor& attn_rows, int head, int n_q_template,
                                       int n_k_template) {
    const int nk = attn_rows.cols();
    check(attn_rows.rows() % nk == 0, "attention rows ", attn_rows.rows(),
          " not a multiple of token count ", nk);
    const int nq = nk;  // self-attention: queries == keys
    Tensor full = slice_rows(attn_rows, head * nq, (head + 1) * nq);
    AttentionBlocks blocks;
    auto block = [&](int r0, int r1, int c0, int c1) {
        Tensor b({r1 - r0, c1 - c0});
        for (int r = r0; r < r1; ++r)
            for (int c = c0; c < c1; ++c) b.at(r - r0, c - c0) = full.at(r, c);
        return b;
    };
    blocks.zz = block(0, n_q_template, 0, n_k_template);
    blocks.zx = block(0, n_q_template, n_k_template, nk);
    blocks.xz = block(n_q_template, nq, 0, n_k_template);
    blocks.xx = block(n_q_template, nq, n_k_template, nk);
    return blocks;
}

AttentionBlocks export_attention(const BackboneCache& cache, int layer, int head) {
    check(!cache.layers.empty(), "attention export requires a cached forward pass");
    check(layer >= 0 && layer < static_cast<int>(cache.layers.size()), "layer ", layer,
          " out of range");
    const Tensor& attn = cache.layers[layer].attn.attn;
    check(!attn.empty(), "no attention recorded for layer ", layer);
    const int nk = attn.cols();
    const int heads = static_cast<int>(attn.rows()) / nk;
    check(head >= 0 && head < heads, "head ", head, " out of range (", heads, " heads)");
    return split_attention_blocks(attn, head, cache.n_template, cache.n_template);
}

namespace {
void write_csv_matrix(const std::string& path, const Tensor& m) {
    std::ofstream os(path);
    check(os.good(), "cannot open for writing: ", path);
    os.precision(17);
    for (int r = 0; r < m.rows(); ++r) {
        for (int c = 0; c < m.cols(); ++c) {
            if (c) os << ",";
            os << m.at(r, c);
        }
        os << "\n";
    }
}
}  // namespace

void write_attention_export(const std::string& dir, const BackboneCache& cache, int layer,
                            int head) {
    AttentionBlocks blocks = export_attention(cache, layer, head);
    std::filesystem::create_directories(dir);
    const std::string stem =
        dir + "/L" + std::to_string(layer) + "_H" + std::to_string(head) + "_";
    const std::pair<const char*, const Tensor*> items[] = {
        {"zz", &blocks.zz}, {"zx", &blocks.zx}, {"xz", &blocks.xz}, {"xx", &blocks.xx}};
    for (const auto& [name, tensor] : items) {
        write_csv_matrix(stem + name + ".csv", *tensor);
        save_heatmap_pgm(stem + name + ".pgm", *tensor);
    }
}

}  // namespace macft
