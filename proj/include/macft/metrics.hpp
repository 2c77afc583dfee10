#pragma once

#include <string>
#include <vector>

#include "macft/box.hpp"

namespace macft {

// Center location error, pixels.
double cle(const Box& pred, const Box& gt);
// Intersection over union in [0,1].
double iou(const Box& a, const Box& b);

struct PrecisionResult {
    std::vector<double> thresholds;  // 0..50 step 1
    std::vector<double> values;      // fraction of frames with CLE <= t
    double pr20 = 0.0;
};

struct SuccessResult {
    std::vector<double> thresholds;  // 0..1 step 0.05
    std::vector<double> values;      // fraction of frames with IoU > t
    double auc = 0.0;                // trapezoidal area under the curve
    double sr50 = 0.0;               // value at t = 0.5
};

PrecisionResult precision_curve(const std::vector<Box>& preds, const std::vector<Box>& gts);
SuccessResult success_curve(const std::vector<Box>& preds, const std::vector<Box>& gts);

double mean_iou(const std::vector<Box>& preds, const std::vector<Box>& gts);

// Tracking output for one sequence, ready for aggregation.
struct SequenceResult {
    std::string name;
    std::vector<Box> preds, gts;
    std::vector<std::string> attributes;
};

struct AttributeRow {
    std::string tag;  // "ALL" plus each attribute present
    int frames = 0;
    double pr20 = 0.0, sr_auc = 0.0, sr50 = 0.0;
};

std::vector<AttributeRow> attribute_report(const std::vector<SequenceResult>& results);

// pr_curve.csv / sr_curve.csv / attributes.csv plus SVG polyline plots of
// both curves, all inside `dir` (created if needed).
void write_report(const std::string& dir, const std::vector<SequenceResult>& results);

// Results CSV: header "frame,x,y,w,h", one row per frame.
void write_results_csv(const std::string& path, const std::vector<Box>& preds);
std::vector<Box> read_results_csv(const std::string& path);

}  // namespace macft
