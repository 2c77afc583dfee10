#include "macft/train.hpp"

#include <cstdio>
#include <fstream>

#include "macft/common.hpp"

namespace macft {

std::vector<int> stages_for_variant(VariantId v) {
    if (!variant_uses_fusion(v)) return {1};
    if (!variant_uses_shared(v)) return {1, 3};
    return {1, 2, 3};
}

namespace {

ParamRefs trainable_only(ParamRefs refs) {
    ParamRefs out;
    for (Param* p : refs)
        if (p->trainable) out.push_back(p);
    return out;
}

ParamRefs frozen_only(ParamRefs refs) {
    ParamRefs out;
    for (Param* p : refs)
        if (!p->trainable) out.push_back(p);
    return out;
}

RGBTSample draw_sample(const std::vector<SequencePair>& data, const SampleConfig& scfg, Rng& rng) {
    const SequencePair& seq = data[rng.uniform_index(data.size())];
    const int frame = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(seq.size())));
    return make_sample(seq.rgb_frame(0), seq.tir_frame(0), seq.gt[0], seq.rgb_frame(frame),
                       seq.tir_frame(frame), seq.gt[frame], scfg, rng, /*jitter=*/true);
}

}  // namespace

TrainResult train_stage(MacftModel& model, const StageConfig& cfg, const SampleConfig& scfg,
                        const std::vector<SequencePair>& data, std::uint64_t master_seed) {
    check(!data.empty(), "train_stage: empty dataset");
    check(cfg.batch > 0 && cfg.samples_per_epoch > 0 && cfg.epochs > 0,
          "train_stage: non-positive schedule");
    check(cfg.samples_per_epoch % cfg.batch == 0,
          "train_stage: samples_per_epoch must be a multiple of batch");

    const std::vector<int> stages = stages_for_variant(model.variant());
    bool applicable = false;
    for (int s : stages) applicable = applicable || s == cfg.stage;
    check(applicable, strcat_msg("stage ", cfg.stage, " does not apply to variant ",
                                 variant_name(model.variant())));

    // Stage 1 runs the RGB branch first, then the TIR branch, each on its own
    // optimizer; single-branch variants only get their phase.
    std::vector<bool> phases;
    if (cfg.stage == 1) {
        if (variant_uses_rgb(model.variant())) phases.push_back(true);
        if (variant_uses_tir(model.variant())) phases.push_back(false);
    } else {
        phases.push_back(true);
    }

    TrainResult result;
    const int steps_per_epoch = cfg.samples_per_epoch / cfg.batch;
    const double inv_batch = 1.0 / static_cast<double>(cfg.batch);
    int step = 0;

    for (std::size_t phase = 0; phase < phases.size(); ++phase) {
        model.set_stage_trainable(cfg.stage, phases[phase]);

        const ParamRefs frozen = frozen_only(model.params_all());
        const std::uint64_t frozen_before = params_checksum(frozen);

        AdamW opt;
        ParamRefs bb = trainable_only(model.params_backbones());
        ParamRefs rest = trainable_only(model.params_rest());
        if (!bb.empty()) opt.add_group(bb, cfg.lr_backbone);
        if (!rest.empty()) opt.add_group(rest, cfg.lr_rest);
        check(!bb.empty() || !rest.empty(), "train_stage: nothing is trainable");

        Rng rng = Rng::derive(master_seed, 0x7472u * 8 + static_cast<std::uint64_t>(cfg.stage),
                              phase);

        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            for (int s = 0; s < steps_per_epoch; ++s) {
                opt.zero_grad();
                TrainResult::Row row;
                row.step = step;
                for (int b = 0; b < cfg.batch; ++b) {
                    RGBTSample sample = draw_sample(data, scfg, rng);
                    if (cfg.stage == 1) {
                        const bool rgb = phases[phase];
                        SingleState st;
                        const Tensor& z = rgb ? sample.z_rgb : sample.z_tir;
                        const Tensor& x = rgb ? sample.x_rgb : sample.x_tir;
                        NormBox box = model.forward_single(rgb, z, x, &st);
                        const double g = giou_loss(repair_box(box), sample.gt);
                        const double l = l1_box_loss(box, sample.gt);
                        row.giou += g * inv_batch;
                        row.l1 += l * inv_batch;
                        row.loss += (cfg.weights.giou * g + cfg.weights.l1 * l) * inv_batch;
                        NormBox dbox;
                        composite_loss_stage13_backward(box, sample.gt, cfg.weights, inv_batch,
                                                        dbox);
                        model.backward_single(rgb, st, dbox);
                    } else if (cfg.stage == 2) {
                        SharedState st;
                        model.forward_shared_pair(sample.z_rgb, sample.x_rgb, sample.z_tir,
                                                  sample.x_tir, st);
                        Stage2Loss parts = composite_loss_stage2(st.b_v, st.b_t, sample.gt,
                                                                 st.kl.loss, cfg.weights);
                        const NormBox& sel = parts.rgb_selected ? st.b_v : st.b_t;
                        row.giou += giou_loss(repair_box(sel), sample.gt) * inv_batch;
                        row.l1 += l1_box_loss(sel, sample.gt) * inv_batch;
                        row.kl += parts.kl_term * inv_batch;
                        row.loss += parts.loss * inv_batch;
                        NormBox db_v, db_t;
                        composite_loss_stage2_backward(parts, st.b_v, st.b_t, sample.gt,
                                                       cfg.weights, inv_batch, db_v, db_t);
                        model.backward_shared_pair(st, db_v, db_t, cfg.weights.kl * inv_batch);
                    } else {
                        FusedState st;
                        NormBox box = model.forward_fused(sample.z_rgb, sample.x_rgb,
                                                          sample.z_tir, sample.x_tir, &st,
                                                          /*cache_backbones=*/false);
                        const double g = giou_loss(repair_box(box), sample.gt);
                        const double l = l1_box_loss(box, sample.gt);
                        row.giou += g * inv_batch;
                        row.l1 += l * inv_batch;
                        row.loss += (cfg.weights.giou * g + cfg.weights.l1 * l) * inv_batch;
                        NormBox dbox;
                        composite_loss_stage13_backward(box, sample.gt, cfg.weights, inv_batch,
                                                        dbox);
                        model.backward_fused(st, dbox);
                    }
                }
                opt.step();
                result.trace.push_back(row);
                ++step;
            }
        }

        check(params_checksum(frozen) == frozen_before,
              strcat_msg("frozen parameters changed during stage ", cfg.stage));
    }
    return result;
}

namespace {

void write_rows(std::ofstream& out, const std::vector<TrainResult::Row>& rows) {
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", r.step, r.loss, r.giou,
                      r.l1, r.kl);
        out << buf;
    }
}

}  // namespace

void write_loss_csv(const std::string& path, const std::vector<TrainResult::Row>& rows) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), strcat_msg("cannot write loss csv: ", path));
    out << "step,loss,giou,l1,kl\n";
    write_rows(out, rows);
    check(out.good(), strcat_msg("write failed: ", path));
}

void append_loss_csv(const std::string& path, std::vector<TrainResult::Row> rows) {
    std::ifstream probe(path);
    if (!probe.good()) {
        write_loss_csv(path, rows);
        return;
    }
    long existing = -1;  // header doesn't count
    std::string line;
    while (std::getline(probe, line))
        if (!line.empty()) ++existing;
    probe.close();
    if (existing < 0) existing = 0;
    for (auto& r : rows) r.step += static_cast<int>(existing);
    std::ofstream out(path, std::ios::binary | std::ios::app);
    check(out.good(), strcat_msg("cannot append loss csv: ", path));
    write_rows(out, rows);
    check(out.good(), strcat_msg("write failed: ", path));
}

}  // namespace macft
