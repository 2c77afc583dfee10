#include "macft/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "macft/common.hpp"

namespace macft {

double cle(const Box& pred, const Box& gt) {
    const double dx = pred.cx() - gt.cx();
    const double dy = pred.cy() - gt.cy();
    return std::sqrt(dx * dx + dy * dy);
}

double iou(const Box& a, const Box& b) {
    check(a.w > 0.0 && a.h > 0.0 && b.w > 0.0 && b.h > 0.0,
          "iou needs positive extents");
    const double iw = std::max(0.0, std::min(a.x2(), b.x2()) - std::max(a.x, b.x));
    const double ih = std::max(0.0, std::min(a.y2(), b.y2()) - std::max(a.y, b.y));
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return inter / uni;
}

PrecisionResult precision_curve(const std::vector<Box>& preds, const std::vector<Box>& gts) {
    check(preds.size() == gts.size() && !preds.empty(),
          "precision_curve needs equal nonempty prediction/gt lists (", preds.size(), " vs ",
          gts.size(), ")");
    std::vector<double> errors(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) errors[i] = cle(preds[i], gts[i]);
    PrecisionResult r;
    for (int t = 0; t <= 50; ++t) {
        std::size_t hits = 0;
        for (double e : errors)
            if (e <= t) ++hits;
        r.thresholds.push_back(t);
        r.values.push_back(static_cast<double>(hits) / errors.size());
    }
    r.pr20 = r.values[20];
    return r;
}

SuccessResult success_curve(const std::vector<Box>& preds, const std::vector<Box>& gts) {
    check(preds.size() == gts.size() && !preds.empty(),
          "success_curve needs equal nonempty prediction/gt lists (", preds.size(), " vs ",
          gts.size(), ")");
    std::vector<double> overlaps(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) overlaps[i] = iou(preds[i], gts[i]);
    SuccessResult r;
    for (int k = 0; k <= 20; ++k) {
        const double t = 0.05 * k;
        std::size_t hits = 0;
        // Strict inequality at interior thresholds; only exact perfection
        // (IoU = 1, which cannot be exceeded) satisfies the final t = 1 cell,
        // so the all-perfect curve is identically 1 and its area is exactly 1.
        for (double o : overlaps)
            if (o > t || o >= 1.0) ++hits;
        r.thresholds.push_back(t);
        r.values.push_back(static_cast<double>(hits) / overlaps.size());
    }
    for (std::size_t i = 0; i + 1 < r.values.size(); ++i)
        r.auc += 0.5 * (r.values[i] + r.values[i + 1]) * 0.05;
    r.sr50 = r.values[10];
    return r;
}

double mean_iou(const std::vector<Box>& preds, const std::vector<Box>& gts) {
    check(preds.size() == gts.size() && !preds.empty(), "mean_iou needs equal nonempty lists");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) sum += iou(preds[i], gts[i]);
    return sum / preds.size();
}

std::vector<AttributeRow> attribute_report(const std::vector<SequenceResult>& results) {
    check(!results.empty(), "attribute_report needs at least one sequence");
    std::map<std::string, std::pair<std::vector<Box>, std::vector<Box>>> buckets;
    for (const auto& seq : results) {
        check(seq.preds.size() == seq.gts.size(), "sequence ", seq.name,
              " has mismatched prediction/gt counts");
        auto add = [&](const std::string& tag) {
            auto& [p, g] = buckets[tag];
            p.insert(p.end(), seq.preds.begin(), seq.preds.end());
            g.insert(g.end(), seq.gts.begin(), seq.gts.end());
        };
        add("ALL");
        for (const auto& tag : seq.attributes) add(tag);
    }
    std::vector<AttributeRow> rows;
    // ALL first, then tags alphabetically (std::map order)
    for (const std::string special : {std::string("ALL")}) {
        auto it = buckets.find(special);
        if (it == buckets.end()) continue;
        AttributeRow row;
        row.tag = special;
        row.frames = static_cast<int>(it->second.first.size());
        row.pr20 = precision_curve(it->second.first, it->second.second).pr20;
        const SuccessResult sr = success_curve(it->second.first, it->second.second);
        row.sr_auc = sr.auc;
        row.sr50 = sr.sr50;
        rows.push_back(row);
        buckets.erase(it);
    }
    for (const auto& [tag, lists] : buckets) {
        AttributeRow row;
        row.tag = tag;
        row.frames = static_cast<int>(lists.first.size());
        row.pr20 = precision_curve(lists.first, lists.second).pr20;
        const SuccessResult sr = success_curve(lists.first, lists.second);
        row.sr_auc = sr.auc;
        row.sr50 = sr.sr50;
        rows.push_back(row);
    }
    return rows;
}

namespace {

void write_curve_csv(const std::string& path, const char* x_name,
                     const std::vector<double>& xs, const std::vector<double>& ys) {
    std::ofstream os(path);
    check(os.good(), "cannot write ", path);
    os.precision(17);
    os << x_name << ",value\n";
    for (std::size_t i = 0; i < xs.size(); ++i) os << xs[i] << "," << ys[i] << "\n";
}

void write_curve_svg(const std::string& path, const std::string& title,
                     const std::string& x_label, const std::vector<double>& xs,
                     const std::vector<double>& ys) {
    const int w = 480, h = 360, ml = 56, mr = 16, mt = 36, mb = 48;
    const double x_max = xs.back();
    const int pw = w - ml - mr, ph = h - mt - mb;
    std::ostringstream poly;
    poly.precision(2);
    poly << std::fixed;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double px = ml + xs[i] / x_max * pw;
        const double py = mt + (1.0 - ys[i]) * ph;
        if (i) poly << " ";
        poly << px << "," << py;
    }
    std::ofstream os(path);
    check(os.good(), "cannot write ", path);
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "  <rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n"
       << "  <text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">"
       << title << "</text>\n"
       << "  <line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\""
       << mt + ph << "\" stroke=\"black\"/>\n"
       << "  <line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
       << "\" stroke=\"black\"/>\n"
       << "  <text x=\"" << ml + pw / 2 << "\" y=\"" << h - 12
       << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n"
       << "  <text x=\"16\" y=\"" << mt + ph / 2
       << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << mt + ph / 2
       << ")\">fraction of frames</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double fy = mt + ph * (1.0 - 0.25 * k);
        os << "  <text x=\"" << ml - 8 << "\" y=\"" << fy + 4
           << "\" text-anchor=\"end\" font-size=\"10\">" << 0.25 * k << "</text>\n";
        const double fx = ml + pw * 0.25 * k;
        os << "  <text x=\"" << fx << "\" y=\"" << mt + ph + 16
           << "\" text-anchor=\"middle\" font-size=\"10\">" << x_max * 0.25 * k << "</text>\n";
    }
    os << "  <polyline points=\"" << poly.str()
       << "\" fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\"/>\n"
       << "</svg>\n";
}

}  // namespace

void write_report(const std::string& dir, const std::vector<SequenceResult>& results) {
    std::filesystem::create_directories(dir);
    std::vector<Box> preds, gts;
    for (const auto& seq : results) {
        preds.insert(preds.end(), seq.preds.begin(), seq.preds.end());
        gts.insert(gts.end(), seq.gts.begin(), seq.gts.end());
    }
    const PrecisionResult pr = precision_curve(preds, gts);
    const SuccessResult sr = success_curve(preds, gts);
    write_curve_csv(dir + "/pr_curve.csv", "threshold_px", pr.thresholds, pr.values);
    write_curve_csv(dir + "/sr_curve.csv", "threshold_iou", sr.thresholds, sr.values);
    write_curve_svg(dir + "/pr_curve.svg", "precision", "center error threshold (px)",
                    pr.thresholds, pr.values);
    write_curve_svg(dir + "/sr_curve.svg", "success", "overlap threshold (IoU)", sr.thresholds,
                    sr.values);

    std::ofstream os(dir + "/attributes.csv");
    check(os.good(), "cannot write ", dir, "/attributes.csv");
    os.precision(17);
    os << "tag,frames,pr20,sr_auc,sr50\n";
    for (const auto& row : attribute_report(results))
        os << row.tag << "," << row.frames << "," << row.pr20 << "," << row.sr_auc << ","
           << row.sr50 << "\n";
}

void write_results_csv(const std::string& path, const std::vector<Box>& preds) {
    std::ofstream os(path);
    check(os.good(), "cannot write ", path);
    os.precision(17);
    os << "frame,x,y,w,h\n";
    for (std::size_t i = 0; i < preds.size(); ++i)
        os << i << "," << preds[i].x << "," << preds[i].y << "," << preds[i].w << ","
           << preds[i].h << "\n";
}

std::vector<Box> read_results_csv(const std::string& path) {
    std::ifstream is(path);
    check(is.good(), "cannot open results file: ", path);
    std::string line;
    check(static_cast<bool>(std::getline(is, line)), "empty results file: ", path);
    check(line == "frame,x,y,w,h", "unexpected results header in ", path, ": \"", line, "\"");
    std::vector<Box> out;
    int line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream ls(line);
        long frame;
        Box b;
        char c1, c2, c3, c4;
        ls >> frame >> c1 >> b.x >> c2 >> b.y >> c3 >> b.w >> c4 >> b.h;
        check(!ls.fail() && c1 == ',' && c2 == ',' && c3 == ',' && c4 == ',',
              "unparseable results line ", line_no, " in ", path);
        check(frame == static_cast<long>(out.size()), "results file ", path,
              " has out-of-order frame index at line ", line_no);
        out.push_back(b);
    }
    return out;
}

}  // namespace macft
