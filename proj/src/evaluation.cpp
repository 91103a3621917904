#include "ctxforge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>

#include "ctxforge/error.hpp"

namespace fs = std::filesystem;

namespace ctxforge {

std::string to_string(Interpolation interpolation) {
    return interpolation == Interpolation::AllPoints ? "all-points" : "11-point";
}

double average_precision(const std::vector<bool>& is_tp, int positives, Interpolation interpolation) {
    if (positives <= 0) return 0.0;
    const std::size_t n = is_tp.size();
    std::vector<double> precision(n);
    std::vector<int> tp_count(n);
    int tp = 0;
    for (std::size_t i = 0; i < n; ++i) {
        tp += is_tp[i] ? 1 : 0;
        tp_count[i] = tp;
        precision[i] = double(tp) / double(i + 1);
    }
    if (interpolation == Interpolation::ElevenPoint) {
        double sum = 0.0;
        for (int t = 0; t <= 10; ++t) {
            double best = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (10 * tp_count[i] >= t * positives) best = std::max(best, precision[i]);
            sum += best;
        }
        return sum / 11.0;
    }
    // Envelope from the right; recall moves by 1/positives at each true positive.
    std::vector<double> envelope(precision);
    for (std::size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        if (is_tp[i]) sum += envelope[i];
    return sum / double(positives);
}

namespace {

struct GtBox {
    BBox box;
    bool difficult = false;
    bool matched = false;
};

bool ranks_before(const Detection* a, const Detection* b) {
    if (a->confidence != b->confidence) return a->confidence > b->confidence;
    return std::tie(a->image_id, a->box.x_min, a->box.y_min, a->box.x_max, a->box.y_max) <
           std::tie(b->image_id, b->box.x_min, b->box.y_min, b->box.x_max, b->box.y_max);
}

}  // namespace

EvalReport evaluate(const DatasetManifest& groundtruth, std::span<const Detection> detections,
                    const EvalOptions& options) {
    std::set<std::string> known;
    for (const auto& img : groundtruth.images) known.insert(img.id);
    for (const auto& d : detections) {
        if (!known.count(d.image_id)) throw DataError("detection references unknown image '" + d.image_id + "'");
        if (std::isnan(d.confidence)) throw DataError("detection on '" + d.image_id + "' has NaN confidence");
    }

    std::set<std::string> classes(options.classes.begin(), options.classes.end());
    if (classes.empty())
        for (const auto& a : groundtruth.annotations) classes.insert(a.label.name);

    EvalReport report;
    report.iou_threshold = options.iou_threshold;
    report.interpolation = options.interpolation;
    double ap_sum = 0.0;
    for (const auto& cls : classes) {
        std::unordered_map<std::string, std::vector<GtBox>> gt;
        int positives = 0;
        for (const auto& a : groundtruth.annotations) {
            if (a.label.name != cls) continue;
            gt[a.image_id].push_back({a.box, a.difficult, false});
            positives += a.difficult ? 0 : 1;
        }
        if (positives == 0) continue;

        std::vector<const Detection*> ranked;
        for (const auto& d : detections)
            if (d.class_name == cls) ranked.push_back(&d);
        std::sort(ranked.begin(), ranked.end(), ranks_before);

        std::vector<bool> is_tp;
        ClassResult result;
        result.gt = positives;
        for (const Detection* d : ranked) {
            auto& boxes = gt[d->image_id];
            GtBox* best = nullptr;
            double best_iou = options.iou_threshold;
            bool hits_difficult = false;
            for (auto& g : boxes) {
                const double overlap = iou(d->box, g.box);
                if (overlap < options.iou_threshold) continue;
                if (g.difficult) {
                    hits_difficult = true;
                } else if (!g.matched && (best == nullptr || overlap > best_iou)) {
                    best = &g;
                    best_iou = overlap;
                }
            }
            if (best) {
                best->matched = true;
                is_tp.push_back(true);
                ++result.tp;
            } else if (!hits_difficult) {
                is_tp.push_back(false);
                ++result.fp;
            }
        }
        result.ap = average_precision(is_tp, positives, options.interpolation);
        ap_sum += result.ap;
        report.classes[cls] = result;
    }
    report.map = report.classes.empty() ? 0.0 : ap_sum / double(report.classes.size());
    return report;
}

DeltaReport delta_report(const EvalReport& baseline, const EvalReport& augmented) {
    std::set<std::string> a, b;
    for (const auto& [name, r] : baseline.classes) a.insert(name);
    for (const auto& [name, r] : augmented.classes) b.insert(name);
    if (a != b) throw DataError("baseline and augmented reports cover different classes");
    DeltaReport delta;
    for (const auto& [name, r] : augmented.classes) delta.classes[name] = (r.ap - baseline.classes.at(name).ap) * 100.0;
    delta.map = (augmented.map - baseline.map) * 100.0;
    return delta;
}

std::string format_delta(double points) {
    if (std::abs(points) < 0.005) points = 0.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%+.2f", points);
    return buf;
}

nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json doc{{"iou_threshold", report.iou_threshold},
                       {"interpolation", to_string(report.interpolation)},
                       {"map", report.map},
                       {"classes", nlohmann::json::object()}};
    for (const auto& [name, r] : report.classes)
        doc["classes"][name] = {{"ap", r.ap}, {"gt", r.gt}, {"tp", r.tp}, {"fp", r.fp}};
    return doc;
}

EvalReport report_from_json(const nlohmann::json& doc) {
    try {
        EvalReport report;
        report.iou_threshold = doc.value("iou_threshold", 0.5);
        report.interpolation =
            doc.value("interpolation", std::string("all-points")) == "11-point" ? Interpolation::ElevenPoint
                                                                               : Interpolation::AllPoints;
        report.map = doc.at("map").get<double>();
        for (const auto& [name, r] : doc.at("classes").items())
            report.classes[name] = {r.at("ap").get<double>(), r.value("gt", 0), r.value("tp", 0), r.value("fp", 0)};
        return report;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed evaluation report: ") + e.what());
    }
}

std::string format_table(const EvalReport& report, const std::string& method, const EvalReport* baseline) {
    auto pct = [](double v) {
        std::ostringstream s;
        s << std::fixed << std::setprecision(2) << v * 100.0;
        return s.str();
    };
    std::vector<std::string> header{"Method", "mAP(%)"};
    if (baseline) header.push_back("Delta");
    for (const auto& [name, r] : report.classes) header.push_back(name);

    std::vector<std::vector<std::string>> rows;
    if (baseline) {
        std::vector<std::string> row{"baseline", pct(baseline->map), "-"};
        for (const auto& [name, r] : report.classes) {
            auto it = baseline->classes.find(name);
            row.push_back(it == baseline->classes.end() ? "-" : pct(it->second.ap));
        }
        rows.push_back(std::move(row));
    }
    std::vector<std::string> row{method, pct(report.map)};
    if (baseline) row.push_back(format_delta(delta_report(*baseline, report).map));
    for (const auto& [name, r] : report.classes) row.push_back(pct(r.ap));
    rows.push_back(std::move(row));

    std::vector<std::size_t> width(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) {
        width[i] = header[i].size();
        for (const auto& r : rows) width[i] = std::max(width[i], r[i].size());
    }
    std::ostringstream out;
    auto emit = [&](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out << "  ";
            if (i == 0)
                out << std::left << std::setw(int(width[i])) << cells[i];
            else
                out << std::right << std::setw(int(width[i])) << cells[i];
        }
        out << '\n';
    };
    emit(header);
    std::size_t total = 0;
    for (auto w : width) total += w + 2;
    out << std::string(total - 2, '-') << '\n';
    for (const auto& r : rows) emit(r);
    return out.str();
}

std::vector<Detection> read_voc_detections(const fs::path& file, const std::string& class_name) {
    std::ifstream in(file);
    if (!in) throw DataError("cannot read detections file " + file.string());
    std::vector<Detection> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream fields(line);
        Detection d;
        double x0, y0, x1, y1;
        if (!(fields >> d.image_id >> d.confidence >> x0 >> y0 >> x1 >> y1))
            throw DataError(file.string() + ":" + std::to_string(line_no) + ": expected 6 fields");
        try {
            d.box = BBox::make(x0, y0, x1, y1);
        } catch (const DataError& e) {
            throw DataError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        d.class_name = class_name;
        out.push_back(std::move(d));
    }
    return out;
}

std::vector<Detection> read_coco_detections(const nlohmann::json& results, const DatasetManifest& groundtruth) {
    if (!results.is_array()) throw DataError("COCO results must be a JSON array");
    std::vector<std::string> categories;
    for (const auto& [name, split] : groundtruth.splits) categories.push_back(name);
    std::vector<Detection> out;
    try {
        for (const auto& r : results) {
            Detection d;
            const auto& image = r.at("image_id");
            if (image.is_number_integer()) {
                const auto idx = image.get<long long>();
                if (idx < 1 || idx > (long long)groundtruth.images.size())
                    throw DataError("COCO image_id " + std::to_string(idx) + " out of range");
                d.image_id = groundtruth.images[std::size_t(idx - 1)].id;
            } else {
                d.image_id = image.get<std::string>();
            }
            if (r.contains("category")) {
                d.class_name = r["category"].get<std::string>();
            } else {
                const auto& cat = r.at("category_id");
                if (cat.is_string()) {
                    d.class_name = cat.get<std::string>();
                } else {
                    const auto idx = cat.get<long long>();
                    if (idx < 1 || idx > (long long)categories.size())
                        throw DataError("COCO category_id " + std::to_string(idx) + " out of range");
                    d.class_name = categories[std::size_t(idx - 1)];
                }
            }
            const auto& b = r.at("bbox");
            const double x = b.at(0).get<double>(), y = b.at(1).get<double>();
            d.box = BBox::make(x, y, x + b.at(2).get<double>(), y + b.at(3).get<double>());
            d.confidence = r.at("score").get<double>();
            out.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed COCO results: ") + e.what());
    }
    return out;
}

namespace {

std::string class_of(const fs::path& file) {
    std::string stem = file.stem().string();
    auto pos = stem.rfind('_');
    return pos == std::string::npos ? stem : stem.substr(pos + 1);
}

}  // namespace

std::vector<Detection> read_detections(const fs::path& path, const DatasetManifest& groundtruth) {
    if (fs::is_directory(path)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(path))
            if (e.is_regular_file() && e.path().extension() == ".txt") files.push_back(e.path());
        std::sort(files.begin(), files.end());
        std::vector<Detection> out;
        for (const auto& f : files) {
            auto part = read_voc_detections(f, class_of(f));
            out.insert(out.end(), part.begin(), part.end());
        }
        return out;
    }
    if (path.extension() == ".json") {
        std::ifstream in(path);
        if (!in) throw DataError("cannot read detections file " + path.string());
        try {
            return read_coco_detections(nlohmann::json::parse(in), groundtruth);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(path.string() + ": " + e.what());
        }
    }
    return read_voc_detections(path, class_of(path));
}

}  // namespace ctxforge
