#include "macft/patch_embed.hpp"

#include <cmath>
#include <cstring>

#include "macft/common.hpp"

namespace macft {

Tensor patchify(const Tensor& img, int patch) {
    check(img.rank() == 3, "patchify expects HxWxC, got ", img.shape_str());
    const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
    check(patch > 0 && h % patch == 0 && w % patch == 0,
          "patch size ", patch, " does not divide image ", h, "x", w);
    const int gy = h / patch, gx = w / patch;
    Tensor out({gy * gx, patch * patch * c});
    for (int py = 0; py < gy; ++py)
        for (int px = 0; px < gx; ++px) {
            double* row = out.data() + static_cast<std::size_t>(py * gx + px) * out.cols();
            for (int y = 0; y < patch; ++y) {
                const double* src =
                    img.data() +
                    ((static_cast<std::size_t>(py * patch + y) * w) + static_cast<std::size_t>(px) * patch) * c;
                std::memcpy(row + static_cast<std::size_t>(y) * patch * c, src,
                            static_cast<std::size_t>(patch) * c * sizeof(double));
            }
        }
    return out;
}

Tensor unpatchify(const Tensor& patches, int height, int width, int channels, int patch) {
    const int gy = height / patch, gx = width / patch;
    check(patches.rank() == 2 && patches.rows() == gy * gx &&
              patches.cols() == patch * patch * channels,
          "unpatchify shape mismatch: ", patches.shape_str());
    Tensor img({height, width, channels});
    for (int py = 0; py < gy; ++py)
        for (int px = 0; px < gx; ++px) {
            const double* row = patches.data() + static_cast<std::size_t>(py * gx + px) * patches.cols();
            for (int y = 0; y < patch; ++y) {
                double* dst =
                    img.data() +
                    ((static_cast<std::size_t>(py * patch + y) * width) + static_cast<std::size_t>(px) * patch) * channels;
                std::memcpy(dst, row + static_cast<std::size_t>(y) * patch * channels,
                            static_cast<std::size_t>(patch) * channels * sizeof(double));
            }
        }
    return img;
}

Tensor sinusoid_pos_table(int grid_w, int grid_h, int dim) {
    check(dim % 4 == 0, "positional table needs dim divisible by 4, got ", dim);
    const int quarter = dim / 4;
    Tensor table({grid_w * grid_h, dim});
    for (int gy = 0; gy < grid_h; ++gy)
        for (int gx = 0; gx < grid_w; ++gx) {
            double* row = table.data() + static_cast<std::size_t>(gy * grid_w + gx) * dim;
            for (int i = 0; i < quarter; ++i) {
                const double omega = std::pow(10000.0, -static_cast<double>(i) / quarter);
                row[i] = std::sin(gx * omega);
                row[quarter + i] = std::cos(gx * omega);
                row[2 * quarter + i] = std::sin(gy * omega);
                row[3 * quarter + i] = std::cos(gy * omega);
            }
        }
    return table;
}

PatchEmbed::PatchEmbed(const std::string& prefix, int search_size, int template_size, int patch,
                       int dim, Rng& rng)
    : proj(prefix + ".proj", patch * patch * 3, dim, rng),
      pos_fc1(prefix + ".pos_fc1", 2, dim, rng),
      pos_fc2(prefix + ".pos_fc2", dim, dim, rng),
      patch_(patch) {
    check(search_size % patch == 0 && template_size % patch == 0,
          "patch size ", patch, " must divide search ", search_size, " and template ",
          template_size);
    const int gs = search_size / patch;
    const int gt = template_size / patch;
    n_search_ = gs * gs;
    n_template_ = gt * gt;
    search_pos = sinusoid_pos_table(gs, gs, dim);
    template_centers = Tensor({n_template_, 2});
    for (int gy = 0; gy < gt; ++gy)
        for (int gx = 0; gx < gt; ++gx) {
            template_centers.at(gy * gt + gx, 0) = (gx + 0.5) / gt;
            template_centers.at(gy * gt + gx, 1) = (gy + 0.5) / gt;
        }
}

Tensor PatchEmbed::embed_search(const Tensor& img, PatchEmbedCache& cache) const {
    cache.search_patches = patchify(img, patch_);
    check(cache.search_patches.rows() == n_search_, "search image produced ",
          cache.search_patches.rows(), " patches, expected ", n_search_);
    Tensor tokens = proj.forward(cache.search_patches);
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] += search_pos[i];
    return tokens;
}

Tensor PatchEmbed::embed_template(const Tensor& img, PatchEmbedCache& cache) const {
    cache.template_patches = patchify(img, patch_);
    check(cache.template_patches.rows() == n_template_, "template image produced ",
          cache.template_patches.rows(), " patches, expected ", n_template_);
    Tensor tokens = proj.forward(cache.template_patches);
    cache.pos_hidden = pos_fc1.forward(template_centers);
    Tensor pos = pos_fc2.forward(gelu(cache.pos_hidden));
    for (std::size_t i = 0; i < tokens.size(); ++i) tokens[i] += pos[i];
    return tokens;
}

void PatchEmbed::backward_search(const PatchEmbedCache& cache, const Tensor& dtokens) {
    // input image gradient is never needed; only the projection params
    matmul_backward(cache.search_patches, proj.weight.value, dtokens, nullptr,
                    proj.weight.value.requires_grad() ? proj.weight.value.grad() : nullptr);
    if (proj.bias.value.requires_grad()) {
        double* db = proj.bias.value.grad();
        for (int r = 0; r < dtokens.rows(); ++r)
            for (int c = 0; c < dtokens.cols(); ++c) db[c] += dtokens.at(r, c);
    }
}

void PatchEmbed::backward_template(const PatchEmbedCache& cache, const Tensor& dtokens) {
    matmul_backward(cache.template_patches, proj.weight.value, dtokens, nullptr,
                    proj.weight.value.requires_grad() ? proj.weight.value.grad() : nullptr);
    if (proj.bias.value.requires_grad()) {
        double* db = proj.bias.value.grad();
        for (int r = 0; r < dtokens.rows(); ++r)
            for (int c = 0; c < dtokens.cols(); ++c) db[c] += dtokens.at(r, c);
    }
    // positional MLP path (the added pos rows receive dtokens directly)
    Tensor dact = pos_fc2.backward(gelu(cache.pos_hidden), dtokens);
    Tensor dh = gelu_backward(cache.pos_hidden, dact);
    matmul_backward(template_centers, pos_fc1.weight.value, dh, nullptr,
                    pos_fc1.weight.value.requires_grad() ? pos_fc1.weight.value.grad() : nullptr);
    if (pos_fc1.bias.value.requires_grad()) {
        double* db = pos_fc1.bias.value.grad();
        for (int r = 0; r < dh.rows(); ++r)
            for (int c = 0; c < dh.cols(); ++c) db[c] += dh.at(r, c);
    }
}

void PatchEmbed::collect(ParamRefs& out) {
    proj.collect(out);
    pos_fc1.collect(out);
    pos_fc2.collect(out);
}

void PatchEmbed::set_trainable(bool on) {
    ParamRefs refs;
    collect(refs);
    for (Param* p : refs) p->set_trainable(on);
}

}  // namespace macft
