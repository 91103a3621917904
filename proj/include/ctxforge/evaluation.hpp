#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxforge/dataset.hpp"

namespace ctxforge {

struct Detection {
    std::string image_id;
    BBox box;
    std::string class_name;
    double confidence = 0.0;
};

enum class Interpolation { AllPoints, ElevenPoint };

std::string to_string(Interpolation interpolation);

struct ClassResult {
    double ap = 0.0;
    int gt = 0;
    int tp = 0;
    int fp = 0;
};

struct EvalReport {
    std::map<std::string, ClassResult> classes;
    double map = 0.0;
    double iou_threshold = 0.5;
    Interpolation interpolation = Interpolation::AllPoints;
};

struct EvalOptions {
    double iou_threshold = 0.5;
    Interpolation interpolation = Interpolation::AllPoints;
    /// Empty: every class with ground truth.
    std::vector<std::string> classes;
};

/// VOC-style evaluation. Per class, detections are ranked by confidence (ties: image id, then
/// box coordinates). Each takes the unmatched non-difficult ground truth box of its image with
/// the highest IoU >= threshold; failing that, a hit on a difficult box is ignored, otherwise
/// it is a false positive. Classes without ground truth are not evaluated.
EvalReport evaluate(const DatasetManifest& groundtruth, std::span<const Detection> detections,
                    const EvalOptions& options = {});

/// Area under the precision envelope, from TP/FP flags in rank order.
double average_precision(const std::vector<bool>& is_tp, int positives, Interpolation interpolation);

struct DeltaReport {
    /// Percentage points, augmented minus baseline.
    std::map<std::string, double> classes;
    double map = 0.0;
};

/// Throws DataError when the two reports cover different classes.
DeltaReport delta_report(const EvalReport& baseline, const EvalReport& augmented);

/// "+13.88" / "-0.25" / "+0.00"
std::string format_delta(double points);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& doc);

/// Aligned plain-text table: one header row and one row per report, with a delta column
/// when a baseline is given.
std::string format_table(const EvalReport& report, const std::string& method,
                         const EvalReport* baseline = nullptr);

/// VOC results file: "image_id confidence x_min y_min x_max y_max" per line.
std::vector<Detection> read_voc_detections(const std::filesystem::path& file, const std::string& class_name);

/// COCO-style results array; image_id and category_id may be the numeric ids of to_coco or the
/// string image id and class name.
std::vector<Detection> read_coco_detections(const nlohmann::json& results, const DatasetManifest& groundtruth);

/// A .json results file, a single class file "<...>_<class>.txt", or a directory of class files.
std::vector<Detection> read_detections(const std::filesystem::path& path, const DatasetManifest& groundtruth);

}  // namespace ctxforge
