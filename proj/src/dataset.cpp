#include "macft/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "macft/common.hpp"
#include "macft/image.hpp"
#include "macft/rng.hpp"

namespace fs = std::filesystem;

namespace macft {

Tensor SequencePair::rgb_frame(int i) const {
    check(i >= 0 && i < size(), "frame index ", i, " out of range for sequence ", name);
    if (!rgb_mem.empty()) return rgb_mem[static_cast<std::size_t>(i)];
    return load_image(rgb_paths[static_cast<std::size_t>(i)]);
}

Tensor SequencePair::tir_frame(int i) const {
    check(i >= 0 && i < size(), "frame index ", i, " out of range for sequence ", name);
    if (!tir_mem.empty()) return tir_mem[static_cast<std::size_t>(i)];
    return load_image(tir_paths[static_cast<std::size_t>(i)]);
}

void SynthConfig::validate() const {
    check(frames >= 1 && canvas >= 16, "synth config needs frames >= 1 and canvas >= 16");
    check(target_size >= 2.0 && target_size < canvas, "target size ", target_size,
          " must fit the canvas ", canvas);
    check(period > 0.0, "trajectory period must be positive");
    for (const auto* ranges : {&rgb_corruption, &tir_corruption})
        for (const auto& r : *ranges)
            check(r.begin >= 0 && r.begin < r.end && r.end <= frames, "corruption range [",
                  r.begin, ",", r.end, ") outside [0,", frames, ")");
}

namespace {

void apply_corruption(Tensor& frame, const std::vector<CorruptionRange>& ranges, int t, Rng& rng) {
    for (const auto& r : ranges) {
        if (t < r.begin || t >= r.end) continue;
        if (r.blank) {
            for (std::size_t i = 0; i < frame.size(); ++i) frame[i] = rng.uniform();
        } else if (r.noise_sigma > 0.0) {
            for (std::size_t i = 0; i < frame.size(); ++i)
                frame[i] = std::clamp(frame[i] + rng.normal(0.0, r.noise_sigma), 0.0, 1.0);
        }
    }
}

}  // namespace

SequencePair synth_sequence(const SynthConfig& cfg) {
    cfg.validate();
    SequencePair seq;
    seq.name = cfg.name;
    seq.attributes = cfg.attributes;

    Rng bg_rng = Rng::derive(cfg.seed, 0xb6u);
    Rng color_rng = Rng::derive(cfg.seed, 0xc0u);
    Rng noise_rng = Rng::derive(cfg.seed, 0x17u);

    // static textured background, shared by both modalities' geometry but
    // drawn independently so the bands look different
    Tensor bg_rgb({cfg.canvas, cfg.canvas, 3});
    Tensor bg_tir({cfg.canvas, cfg.canvas, 3});
    for (std::size_t i = 0; i < bg_rgb.size(); ++i) bg_rgb[i] = bg_rng.uniform(0.0, 0.35);
    for (int p = 0; p < cfg.canvas * cfg.canvas; ++p) {
        const double v = bg_rng.uniform(0.0, 0.35);
        for (int c = 0; c < 3; ++c) bg_tir[static_cast<std::size_t>(p) * 3 + c] = v;
    }
    const double color[3] = {color_rng.uniform(0.7, 1.0), color_rng.uniform(0.7, 1.0),
                             color_rng.uniform(0.0, 0.3)};

    const double two_pi = 2.0 * 3.14159265358979323846;
    const double mid = cfg.canvas / 2.0;
    for (int t = 0; t < cfg.frames; ++t) {
        const double angle = two_pi * t / cfg.period + cfg.phase;
        const double cx = mid + cfg.amp_x * std::sin(angle);
        const double cy = mid + cfg.amp_y * std::cos(angle);
        const double side = cfg.target_size * (1.0 + cfg.size_drift * std::sin(angle));
        Box gt{cx - 0.5 * side, cy - 0.5 * side, side, side};
        seq.gt.push_back(gt);

        Tensor rgb = bg_rgb;
        const int x0 = std::max(0, static_cast<int>(std::floor(gt.x)));
        const int y0 = std::max(0, static_cast<int>(std::floor(gt.y)));
        const int x1 = std::min(cfg.canvas, static_cast<int>(std::ceil(gt.x2())));
        const int y1 = std::min(cfg.canvas, static_cast<int>(std::ceil(gt.y2())));
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x)
                for (int c = 0; c < 3; ++c)
                    rgb[(static_cast<std::size_t>(y) * cfg.canvas + x) * 3 + c] = color[c];

        Tensor tir = bg_tir;
        const double sigma = side / 3.0;
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double heat = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
                const std::size_t base = (static_cast<std::size_t>(y) * cfg.canvas + x) * 3;
                for (int c = 0; c < 3; ++c)
                    tir[base + c] = std::clamp(tir[base + c] + heat, 0.0, 1.0);
            }

        apply_corruption(rgb, cfg.rgb_corruption, t, noise_rng);
        apply_corruption(tir, cfg.tir_corruption, t, noise_rng);
        seq.rgb_mem.push_back(std::move(rgb));
        seq.tir_mem.push_back(std::move(tir));
    }
    return seq;
}

namespace {
std::string frame_name(int i) {
    std::ostringstream os;
    os.width(6);
    os.fill('0');
    os << i;
    return os.str();
}
}  // namespace

void write_sequence(const std::string& dir, const SequencePair& seq) {
    fs::create_directories(dir + "/rgb");
    fs::create_directories(dir + "/tir");
    std::ofstream gt(dir + "/gt.txt");
    check(gt.good(), "cannot write ", dir, "/gt.txt");
    gt.precision(17);
    for (int i = 0; i < seq.size(); ++i) {
        save_png(dir + "/rgb/" + frame_name(i) + ".png", seq.rgb_frame(i));
        save_pgm(dir + "/tir/" + frame_name(i) + ".pgm", seq.tir_frame(i));
        gt << seq.gt[i].x << "," << seq.gt[i].y << "," << seq.gt[i].w << "," << seq.gt[i].h
           << "\n";
    }
    gt.flush();
    check(gt.good(), "write failure on ", dir, "/gt.txt");
    if (!seq.attributes.empty()) {
        nlohmann::json j;
        j["attributes"] = seq.attributes;
        std::ofstream attr(dir + "/attributes.json");
        attr << j.dump(2) << "\n";
    }
}

SequencePair load_sequence(const std::string& dir) {
    check(fs::is_directory(dir), "sequence directory not found: ", dir);
    SequencePair seq;
    seq.name = fs::path(dir).filename().string();

    auto list_frames = [](const std::string& sub) {
        std::vector<std::string> out;
        check(fs::is_directory(sub), "missing frame directory: ", sub);
        for (const auto& e : fs::directory_iterator(sub))
            if (e.is_regular_file()) out.push_back(e.path().string());
        std::sort(out.begin(), out.end());
        return out;
    };
    seq.rgb_paths = list_frames(dir + "/rgb");
    seq.tir_paths = list_frames(dir + "/tir");

    std::ifstream gt(dir + "/gt.txt");
    check(gt.good(), "missing ", dir, "/gt.txt");
    std::string line;
    int line_no = 0;
    while (std::getline(gt, line)) {
        ++line_no;
        if (line.empty()) continue;
        Box b;
        char c1, c2, c3;
        std::istringstream is(line);
        is >> b.x >> c1 >> b.y >> c2 >> b.w >> c3 >> b.h;
        check(!is.fail() && c1 == ',' && c2 == ',' && c3 == ',', "unparseable gt line ", line_no,
              " in ", dir, "/gt.txt: \"", line, "\"");
        seq.gt.push_back(b);
    }

    check(seq.rgb_paths.size() == seq.gt.size(), "sequence ", seq.name, " has ",
          seq.rgb_paths.size(), " rgb frames but ", seq.gt.size(), " gt lines");
    for (std::size_t i = 0; i < seq.rgb_paths.size(); ++i)
        check(i < seq.tir_paths.size(), "sequence ", seq.name, " is missing tir frame ", i);
    check(seq.tir_paths.size() == seq.rgb_paths.size(), "sequence ", seq.name, " has ",
          seq.tir_paths.size(), " tir frames but ", seq.rgb_paths.size(), " rgb frames");

    const std::string attr_path = dir + "/attributes.json";
    if (fs::exists(attr_path)) {
        std::ifstream is(attr_path);
        nlohmann::json j = nlohmann::json::parse(is);
        const nlohmann::json& arr = j.is_array() ? j : j.at("attributes");
        for (const auto& a : arr) seq.attributes.push_back(a.get<std::string>());
    }
    return seq;
}

std::vector<SequencePair> load_dataset(const std::string& dir) {
    check(fs::is_directory(dir), "dataset directory not found: ", dir);
    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_directory()) names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    check(!names.empty(), "dataset directory has no sequences: ", dir);
    std::vector<SequencePair> out;
    out.reserve(names.size());
    for (const auto& n : names) out.push_back(load_sequence(n));
    return out;
}

std::vector<SynthConfig> benchmark_specs(int sequences, int frames, std::uint64_t master_seed,
                                         const std::string& corrupt) {
    check(sequences > 0 && frames > 0, "benchmark_specs: non-positive counts");
    check(corrupt == "none" || corrupt == "rgb" || corrupt == "tir" || corrupt == "mixed",
          "benchmark_specs: corrupt must be none|rgb|tir|mixed, got '", corrupt, "'");
    std::vector<SynthConfig> specs;
    specs.reserve(static_cast<std::size_t>(sequences));
    for (int i = 0; i < sequences; ++i) {
        Rng rng = Rng::derive(master_seed, 0xbea7u, static_cast<std::uint64_t>(i));
        SynthConfig cfg;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "seq%04d", i);
        cfg.name = buf;
        cfg.frames = frames;
        cfg.canvas = 64;
        cfg.target_size = rng.uniform(9.0, 15.0);
        cfg.size_drift = rng.uniform(0.0, 0.15);
        cfg.amp_x = rng.uniform(6.0, 14.0);
        cfg.amp_y = rng.uniform(4.0, 10.0);
        cfg.period = rng.uniform(14.0, 26.0);
        cfg.phase = rng.uniform(0.0, 6.283185307179586);
        cfg.seed = rng.raw();
        if (cfg.size_drift > 0.075) cfg.attributes.push_back("SV");
        if (cfg.amp_x > 10.0) cfg.attributes.push_back("FM");

        // half of every sequence, centered, replaced by pure noise
        CorruptionRange range;
        range.begin = frames / 4;
        range.end = range.begin + frames / 2;
        range.blank = true;
        const bool hit_rgb =
            corrupt == "rgb" || (corrupt == "mixed" && i % 2 == 0);
        const bool hit_tir =
            corrupt == "tir" || (corrupt == "mixed" && i % 2 == 1);
        if (hit_rgb) {
            cfg.rgb_corruption.push_back(range);
            cfg.attributes.push_back("LI");
        }
        if (hit_tir) {
            cfg.tir_corruption.push_back(range);
            cfg.attributes.push_back("TC");
        }
        specs.push_back(std::move(cfg));
    }
    return specs;
}

std::vector<SequencePair> synth_dataset(const std::vector<SynthConfig>& specs) {
    std::vector<SequencePair> out;
    out.reserve(specs.size());
    for (const auto& s : specs) out.push_back(synth_sequence(s));
    return out;
}

}  // namespace macft
