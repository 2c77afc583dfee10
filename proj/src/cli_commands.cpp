#include "macft/cli.hpp"

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "macft/checkpoint.hpp"
#include "macft/common.hpp"
#include "macft/config.hpp"
#include "macft/dataset.hpp"
#include "macft/metrics.hpp"
#include "macft/model.hpp"
#include "macft/track.hpp"
#include "macft/train.hpp"
#include "macft/verify.hpp"

namespace fs = std::filesystem;

namespace macft {

int thread_cap() {
    const char* s = std::getenv("MACFT_THREADS");
    if (!s || !*s) return 1;
    char* end = nullptr;
    const long v = std::strtol(s, &end, 10);
    check(end && *end == '\0' && v >= 1,
          "MACFT_THREADS must be a positive integer, got '", s, "'");
    return static_cast<int>(v);
}

namespace {

struct CommonOpts {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path, "config file (flat key=value lines)");
    cmd->add_option("--set", o.sets, "override one config entry, key=value (repeatable)");
    cmd->add_option("--out", o.out_dir, "output directory (default run/<timestamp>)");
}

RunConfig build_config(const CommonOpts& o) {
    RunConfig cfg = o.config_path.empty() ? RunConfig{} : load_config(o.config_path);
    for (const auto& kv : o.sets) apply_override(cfg, kv);
    finalize_config(cfg);
    return cfg;
}

std::string resolve_out_dir(const CommonOpts& o) {
    if (!o.out_dir.empty()) return o.out_dir;
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    const std::string base = std::string("run/") + buf;
    std::string dir = base;
    int suffix = 1;
    while (fs::exists(dir)) dir = base + "-" + std::to_string(suffix++);
    return dir;
}

std::string prepare_out_dir(const CommonOpts& o, const RunConfig& cfg) {
    const std::string dir = resolve_out_dir(o);
    fs::create_directories(dir);
    std::ofstream os(dir + "/config.txt", std::ios::binary);
    check(os.good(), "cannot write ", dir, "/config.txt");
    os << emit_config(cfg);
    return dir;
}

std::vector<SequencePair> make_or_load(const std::string& dir, int sequences, int frames,
                                       std::uint64_t seed, const std::string& corrupt) {
    if (!dir.empty()) return load_dataset(dir);
    return synth_dataset(benchmark_specs(sequences, frames, seed, corrupt));
}

StageConfig stage_config(const RunConfig& cfg, int stage) {
    StageConfig sc;
    sc.stage = stage;
    sc.epochs = cfg.train.epochs;
    sc.samples_per_epoch = cfg.train.samples_per_epoch;
    sc.batch = cfg.train.batch;
    sc.lr_backbone = cfg.train.lr_backbone;
    sc.lr_rest = cfg.train.lr_rest;
    sc.weights = cfg.loss;
    return sc;
}

struct EvalSummary {
    double mean_iou = 0.0, pr20 = 0.0, sr_auc = 0.0, sr50 = 0.0;
};

EvalSummary evaluate_model(const MacftModel& model, const std::vector<SequencePair>& eval_set,
                           const SampleConfig& scfg) {
    std::vector<SequenceResult> results;
    double iou_sum = 0.0;
    std::size_t frames = 0;
    for (const auto& seq : eval_set) {
        std::vector<Box> preds = track_sequence(model, seq, scfg);
        for (std::size_t i = 0; i < preds.size(); ++i) iou_sum += iou(preds[i], seq.gt[i]);
        frames += preds.size();
        results.push_back({seq.name, std::move(preds), seq.gt, seq.attributes});
    }
    std::vector<AttributeRow> table = attribute_report(results);
    EvalSummary s;
    s.mean_iou = iou_sum / static_cast<double>(frames);
    s.pr20 = table[0].pr20;  // the ALL row is always first
    s.sr_auc = table[0].sr_auc;
    s.sr50 = table[0].sr50;
    return s;
}

// Runs every stage that applies to the model's variant, appending losses.
void train_all_stages(MacftModel& model, const RunConfig& cfg,
                      const std::vector<SequencePair>& data) {
    for (int stage : stages_for_variant(model.variant())) {
        train_stage(model, stage_config(cfg, stage), cfg.sample, data, cfg.seed);
    }
}

int cmd_synth(const std::string& out, std::uint64_t seed, int sequences, int frames,
              const std::string& corrupt) {
    const auto specs = benchmark_specs(sequences, frames, seed, corrupt);
    fs::create_directories(out);
    for (const auto& spec : specs) {
        write_sequence(out + "/" + spec.name, synth_sequence(spec));
    }
    std::cout << "wrote " << specs.size() << " sequences (" << frames << " frames each) to "
              << out << "\n";
    return 0;
}

int cmd_train(const CommonOpts& common, int stage, const std::string& data_dir,
              const std::string& ckpt, int sequences, int frames,
              const std::string& corrupt) {
    RunConfig cfg = build_config(common);
    MacftModel model(parse_variant(cfg.variant), cfg.model, cfg.seed);

    const std::vector<int> stages = stages_for_variant(model.variant());
    int pos = -1;
    for (std::size_t i = 0; i < stages.size(); ++i)
        if (stages[i] == stage) pos = static_cast<int>(i);
    check(pos >= 0, "stage ", stage, " does not apply to variant ", cfg.variant);

    const std::string out = prepare_out_dir(common, cfg);
    if (pos > 0) {
        std::string prereq = ckpt;
        if (prereq.empty()) prereq = out + "/stage" + std::to_string(stages[pos - 1]) + ".ckpt";
        check(fs::exists(prereq), "stage ", stage, " needs the stage ", stages[pos - 1],
              " checkpoint; pass --ckpt or train stage ", stages[pos - 1],
              " into this output directory first (looked for ", prereq, ")");
        load_checkpoint(prereq, model.params_all());
    }

    const std::string dir = !data_dir.empty() ? data_dir : cfg.train_data;
    const auto data =
        make_or_load(dir, sequences, frames, Rng::derive(cfg.seed, 0xda7au).raw(), corrupt);

    TrainResult res = train_stage(model, stage_config(cfg, stage), cfg.sample, data, cfg.seed);
    append_loss_csv(out + "/losses.csv", res.trace);
    const std::string ckpt_path = out + "/stage" + std::to_string(stage) + ".ckpt";
    save_checkpoint(ckpt_path, model.params_all());
    std::cout << "stage " << stage << ": " << res.trace.size() << " steps, final loss "
              << res.trace.back().loss << "\nsaved " << ckpt_path << "\n";
    return 0;
}

int cmd_track(const CommonOpts& common, const std::string& seq_dir, const std::string& ckpt,
              const std::vector<int>& export_attn) {
    RunConfig cfg = build_config(common);
    MacftModel model(parse_variant(cfg.variant), cfg.model, cfg.seed);
    load_checkpoint(ckpt, model.params_all());
    SequencePair seq = load_sequence(seq_dir);
    const std::string out = prepare_out_dir(common, cfg);
    std::vector<Box> boxes = track_sequence(model, seq, cfg.sample);
    write_results_csv(out + "/results.csv", boxes);
    std::cout << "tracked " << boxes.size() << " frames of " << seq.name << " -> " << out
              << "/results.csv\n";

    if (!export_attn.empty()) {
        check(export_attn.size() == 2, "--export-attn expects LAYER HEAD");
        const bool rgb = variant_uses_rgb(model.variant());
        const CropInfo tcrop = template_crop_info(seq.gt[0], cfg.sample);
        const CropInfo scrop =
            search_crop_info(seq.gt[0].cx(), seq.gt[0].cy(), seq.gt[0].w, seq.gt[0].h,
                             cfg.sample);
        const Tensor z = crop_resize(rgb ? seq.rgb_frame(0) : seq.tir_frame(0), tcrop);
        const Tensor x = crop_resize(rgb ? seq.rgb_frame(0) : seq.tir_frame(0), scrop);
        SingleState st;
        model.forward_single(rgb, z, x, &st);
        write_attention_export(out + "/attn", st.bb, export_attn[0], export_attn[1]);
        std::cout << "attention maps for layer " << export_attn[0] << ", head "
                  << export_attn[1] << " -> " << out << "/attn\n";
    }
    return 0;
}

int cmd_eval(const CommonOpts& common, const std::string& results_path,
             const std::string& seq_dir) {
    RunConfig cfg = build_config(common);
    SequencePair seq = load_sequence(seq_dir);
    std::vector<Box> preds = read_results_csv(results_path);
    check(preds.size() == seq.gt.size(), "results have ", preds.size(), " frames but ",
          seq.name, " has ", seq.gt.size());
    const std::string out = prepare_out_dir(common, cfg);
    SequenceResult res{seq.name, preds, seq.gt, seq.attributes};
    write_report(out + "/report", {res});
    PrecisionResult pr = precision_curve(preds, seq.gt);
    SuccessResult sr = success_curve(preds, seq.gt);
    std::cout << "PR@20 " << pr.pr20 << "  SR(AUC) " << sr.auc << "  SR@0.5 " << sr.sr50
              << "  mean IoU " << mean_iou(preds, seq.gt) << "\nreport -> " << out
              << "/report\n";
    return 0;
}

int cmd_ablate(const CommonOpts& common, const std::string& variants, int sequences,
               int eval_sequences, int frames, const std::string& corrupt) {
    RunConfig cfg = build_config(common);
    const std::string out = prepare_out_dir(common, cfg);
    const auto train_set = make_or_load(cfg.train_data, sequences, frames,
                                        Rng::derive(cfg.seed, 0xda7au).raw(), corrupt);
    const auto eval_set = make_or_load(cfg.eval_data, eval_sequences, frames,
                                       Rng::derive(cfg.seed, 0xe7a1u).raw(), corrupt);

    std::vector<std::string> names;
    std::string cur;
    for (char c : variants + ",") {
        if (c == ',') {
            if (!cur.empty()) names.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    check(!names.empty(), "--variants is empty");

    fs::create_directories(out + "/report");
    std::ofstream csv(out + "/report/ablation.csv", std::ios::binary);
    csv << "variant,mean_iou,pr20,sr_auc,sr50\n";
    for (const auto& name : names) {
        MacftModel model(parse_variant(name), cfg.model, cfg.seed);
        RunConfig vcfg = cfg;
        vcfg.variant = name;
        train_all_stages(model, vcfg, train_set);
        EvalSummary s = evaluate_model(model, eval_set, cfg.sample);
        char line[256];
        std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,%.17g,%.17g\n", name.c_str(),
                      s.mean_iou, s.pr20, s.sr_auc, s.sr50);
        csv << line;
        csv.flush();
        std::cout << name << ": mean IoU " << s.mean_iou << ", PR@20 " << s.pr20 << ", SR(AUC) "
                  << s.sr_auc << "\n";
    }
    std::cout << "table -> " << out << "/report/ablation.csv\n";
    return 0;
}

int cmd_gradcheck(const CommonOpts& common, int seeds, double epsilon, double tolerance) {
    RunConfig cfg = build_config(common);
    GradSuiteResult res = run_gradient_suite(cfg.seed, seeds, epsilon, tolerance, &std::cout);
    std::cout << res.checks.size() << " checks, worst relative error " << res.worst_rel_err
              << " (" << res.worst_check << ")\n";
    check(res.all_passed, "gradient suite failed; worst ", res.worst_check, " at ",
          res.worst_rel_err);
    std::cout << "all gradient checks passed\n";
    return 0;
}

std::vector<int> parse_k_list(const std::string& spec) {
    std::vector<int> ks;
    const std::size_t dots = spec.find("..");
    if (dots != std::string::npos) {
        const int lo = static_cast<int>(std::stol(spec.substr(0, dots)));
        const int hi = static_cast<int>(std::stol(spec.substr(dots + 2)));
        check(lo >= 1 && hi >= lo, "--k range must be 1 <= lo <= hi, got '", spec, "'");
        for (int k = lo; k <= hi; ++k) ks.push_back(k);
        return ks;
    }
    std::string cur;
    for (char c : spec + ",") {
        if (c == ',') {
            if (!cur.empty()) ks.push_back(static_cast<int>(std::stol(cur)));
            cur.clear();
        } else {
            cur += c;
        }
    }
    check(!ks.empty(), "--k list is empty");
    for (int k : ks) check(k >= 1, "--k entries must be >= 1");
    return ks;
}

int cmd_sweep_mam(const CommonOpts& common, const std::string& k_spec, int sequences,
                  int eval_sequences, int frames, const std::string& corrupt) {
    RunConfig cfg = build_config(common);
    const std::string out = prepare_out_dir(common, cfg);
    const auto train_set = make_or_load(cfg.train_data, sequences, frames,
                                        Rng::derive(cfg.seed, 0xda7au).raw(), corrupt);
    const auto eval_set = make_or_load(cfg.eval_data, eval_sequences, frames,
                                       Rng::derive(cfg.seed, 0xe7a1u).raw(), corrupt);
    const std::vector<int> ks = parse_k_list(k_spec);

    fs::create_directories(out + "/report");
    std::ofstream csv(out + "/report/mam_sweep.csv", std::ios::binary);
    csv << "k,mean_iou,pr20,sr_auc,sr50\n";
    for (int k : ks) {
        RunConfig kcfg = cfg;
        kcfg.model.fusion_k = k;
        MacftModel model(parse_variant(kcfg.variant), kcfg.model, kcfg.seed);
        train_all_stages(model, kcfg, train_set);
        EvalSummary s = evaluate_model(model, eval_set, kcfg.sample);
        char line[256];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n", k, s.mean_iou, s.pr20,
                      s.sr_auc, s.sr50);
        csv << line;
        csv.flush();
        std::cout << "k=" << k << ": mean IoU " << s.mean_iou << ", PR@20 " << s.pr20
                  << ", SR(AUC) " << s.sr_auc << "\n";
    }
    std::cout << "table -> " << out << "/report/mam_sweep.csv\n";
    return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"RGB-T tracker: training, tracking, evaluation and verification"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-T dataset");
    std::string synth_out;
    std::uint64_t synth_seed = 7;
    int synth_sequences = 8, synth_frames = 30;
    std::string synth_corrupt = "none";
    synth->add_option("--out", synth_out, "dataset directory")->required();
    synth->add_option("--seed", synth_seed, "master seed");
    synth->add_option("--sequences", synth_sequences, "number of sequences");
    synth->add_option("--frames", synth_frames, "frames per sequence");
    synth->add_option("--corrupt", synth_corrupt, "none|rgb|tir|mixed");

    // train
    auto* train = app.add_subcommand("train", "run one training stage");
    CommonOpts train_common;
    add_common(train, train_common);
    int train_stage_n = 0;
    std::string train_data, train_ckpt, train_corrupt = "none";
    int train_sequences = 32, train_frames = 30;
    train->add_option("--stage", train_stage_n, "training stage")->required()
        ->check(CLI::Range(1, 3));
    train->add_option("--data", train_data, "dataset directory (default: synthetic in-memory)");
    train->add_option("--ckpt", train_ckpt, "prerequisite checkpoint (earlier stage)");
    train->add_option("--sequences", train_sequences, "synthetic fallback: sequence count");
    train->add_option("--frames", train_frames, "synthetic fallback: frames per sequence");
    train->add_option("--corrupt", train_corrupt, "synthetic fallback: none|rgb|tir|mixed");

    // track
    auto* track = app.add_subcommand("track", "run the tracker over one sequence");
    CommonOpts track_common;
    add_common(track, track_common);
    std::string track_seq, track_ckpt;
    std::vector<int> track_attn;
    track->add_option("--seq", track_seq, "sequence directory")->required();
    track->add_option("--ckpt", track_ckpt, "model checkpoint")->required();
    track->add_option("--export-attn", track_attn,
                      "export attention maps: LAYER HEAD (two integers)")
        ->expected(2);

    // eval
    auto* eval = app.add_subcommand("eval", "score a results file against ground truth");
    CommonOpts eval_common;
    add_common(eval, eval_common);
    std::string eval_results, eval_seq;
    eval->add_option("--results", eval_results, "results CSV (frame,x,y,w,h)")->required();
    eval->add_option("--seq", eval_seq, "sequence directory with gt.txt")->required();

    // ablate
    auto* ablate = app.add_subcommand("ablate", "train and score several model variants");
    CommonOpts ablate_common;
    add_common(ablate, ablate_common);
    std::string ablate_variants = "b-rgb,b-t,dm,dm-cam,dm-mam,dm-cam-com,full";
    int ablate_sequences = 16, ablate_eval_sequences = 8, ablate_frames = 30;
    std::string ablate_corrupt = "none";
    ablate->add_option("--variants", ablate_variants, "comma-separated variant names");
    ablate->add_option("--sequences", ablate_sequences, "synthetic train set size");
    ablate->add_option("--eval-sequences", ablate_eval_sequences, "synthetic eval set size");
    ablate->add_option("--frames", ablate_frames, "frames per sequence");
    ablate->add_option("--corrupt", ablate_corrupt, "corruption mode for both sets");

    // gradcheck
    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "run the gradient verification suite");
    CommonOpts grad_common;
    add_common(gradcheck_cmd, grad_common);
    int grad_seeds = 5;
    double grad_eps = 1e-5, grad_tol = 1e-4;
    gradcheck_cmd->add_option("--seeds", grad_seeds, "number of fixture seeds");
    gradcheck_cmd->add_option("--epsilon", grad_eps, "finite-difference step");
    gradcheck_cmd->add_option("--tolerance", grad_tol, "max relative error");

    // sweep-mam
    auto* sweep = app.add_subcommand("sweep-mam", "sweep the fusion stack depth K");
    CommonOpts sweep_common;
    add_common(sweep, sweep_common);
    std::string sweep_k = "1..8", sweep_corrupt = "none";
    int sweep_sequences = 16, sweep_eval_sequences = 8, sweep_frames = 30;
    sweep->add_option("--k", sweep_k, "range lo..hi or comma list");
    sweep->add_option("--sequences", sweep_sequences, "synthetic train set size");
    sweep->add_option("--eval-sequences", sweep_eval_sequences, "synthetic eval set size");
    sweep->add_option("--frames", sweep_frames, "frames per sequence");
    sweep->add_option("--corrupt", sweep_corrupt, "corruption mode for both sets");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);  // --help and friends
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
        return 2;
    }

    try {
        thread_cap();  // validate MACFT_THREADS up front
        if (synth->parsed())
            return cmd_synth(synth_out, synth_seed, synth_sequences, synth_frames,
                             synth_corrupt);
        if (train->parsed())
            return cmd_train(train_common, train_stage_n, train_data, train_ckpt,
                             train_sequences, train_frames, train_corrupt);
        if (track->parsed()) return cmd_track(track_common, track_seq, track_ckpt, track_attn);
        if (eval->parsed()) return cmd_eval(eval_common, eval_results, eval_seq);
        if (ablate->parsed())
            return cmd_ablate(ablate_common, ablate_variants, ablate_sequences,
                              ablate_eval_sequences, ablate_frames, ablate_corrupt);
        if (gradcheck_cmd->parsed())
            return cmd_gradcheck(grad_common, grad_seeds, grad_eps, grad_tol);
        if (sweep->parsed())
            return cmd_sweep_mam(sweep_common, sweep_k, sweep_sequences, sweep_eval_sequences,
                                 sweep_frames, sweep_corrupt);
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace macft
