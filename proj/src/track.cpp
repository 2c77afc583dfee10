#include "macft/track.hpp"

#include "macft/common.hpp"

namespace macft {

std::vector<Box> track_sequence(const MacftModel& model, const SequencePair& seq,
                                const SampleConfig& cfg) {
    check(seq.size() > 0, "track_sequence: empty sequence");
    check(!seq.gt.empty(), "track_sequence: sequence has no annotation for frame 0");

    const Box init = seq.gt[0];
    const CropInfo tcrop = template_crop_info(init, cfg);
    const bool use_rgb = variant_uses_rgb(model.variant());
    const bool use_tir = variant_uses_tir(model.variant());

    Tensor z_rgb, z_tir;
    if (use_rgb) z_rgb = crop_resize(seq.rgb_frame(0), tcrop);
    if (use_tir) z_tir = crop_resize(seq.tir_frame(0), tcrop);

    std::vector<Box> out;
    out.reserve(static_cast<std::size_t>(seq.size()));
    Box prev = init;
    for (int t = 0; t < seq.size(); ++t) {
        const CropInfo scrop = search_crop_info(prev.cx(), prev.cy(), prev.w, prev.h, cfg);
        Tensor x_rgb, x_tir;
        if (use_rgb) x_rgb = crop_resize(seq.rgb_frame(t), scrop);
        if (use_tir) x_tir = crop_resize(seq.tir_frame(t), scrop);
        const NormBox nb = repair_box(model.predict(z_rgb, x_rgb, z_tir, x_tir));
        const Box b = box_to_image(nb, scrop);
        out.push_back(b);
        prev = b;
    }
    return out;
}

}  // namespace macft
