#include "ctxforge/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "ctxforge/error.hpp"
#include "ctxforge/rng.hpp"

namespace fs = std::filesystem;

namespace ctxforge {

namespace {

template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) std::swap(items[i - 1], items[rng.index(i)]);
}

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size()))
        text.replace(pos, key.size(), value);
    return text;
}

std::string format_value(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::vector<std::string> SweepSelection::instances(int per_class) const {
    std::vector<std::string> out;
    for (const auto& [cls, order] : instance_order)
        out.insert(out.end(), order.begin(), order.begin() + std::min<std::ptrdiff_t>(per_class, order.size()));
    return out;
}

std::vector<std::string> SweepSelection::contexts(int count) const {
    return {context_order.begin(), context_order.begin() + std::min<std::ptrdiff_t>(count, context_order.size())};
}

SweepSelection plan_sweep(const DatasetManifest& manifest, std::span<const std::string> context_pool,
                          const SweepSpec& spec) {
    if (!manifest.kshot) throw DataError("sweep needs a manifest with a K-shot selection");
    if (spec.instance_counts.empty() || spec.context_counts.empty())
        throw ConfigError("sweep needs at least one instance count and one context count");
    const int max_instances = *std::max_element(spec.instance_counts.begin(), spec.instance_counts.end());
    const int max_contexts = *std::max_element(spec.context_counts.begin(), spec.context_counts.end());
    const int min_count = std::min(*std::min_element(spec.instance_counts.begin(), spec.instance_counts.end()),
                                   *std::min_element(spec.context_counts.begin(), spec.context_counts.end()));
    if (min_count < 1) throw ConfigError("sweep counts must be >= 1");
    if (max_instances > manifest.kshot->k)
        throw ConfigError("sweep asks for " + std::to_string(max_instances) + " instances per class but K = " +
                          std::to_string(manifest.kshot->k));
    if (max_contexts > int(context_pool.size()))
        throw DataError("sweep asks for " + std::to_string(max_contexts) + " contexts, only " +
                        std::to_string(context_pool.size()) + " novel-free images available");

    SweepSelection selection;
    for (const auto& [cls, ids] : manifest.kshot->selected) {
        auto order = ids;
        seeded_shuffle(order, derive_seed(spec.seed, "sweep/instances/" + cls));
        selection.instance_order[cls] = std::move(order);
    }
    selection.context_order.assign(context_pool.begin(), context_pool.end());
    std::sort(selection.context_order.begin(), selection.context_order.end());
    seeded_shuffle(selection.context_order, derive_seed(spec.seed, "sweep/contexts"));
    return selection;
}

SweepResult run_sweep(const DatasetManifest& manifest, const SweepSpec& spec) {
    if (spec.detector_command && !spec.test_set)
        throw ConfigError("a detector command needs a test set to score against");
    const std::vector<std::string> pool = novel_free_images(manifest);
    const SweepSelection selection = plan_sweep(manifest, pool, spec);

    SweepResult result;
    for (int i : spec.instance_counts)
        for (int c : spec.context_counts) {
            SweepCell cell;
            cell.instances = i;
            cell.contexts = c;
            cell.dataset = spec.output_dir / ("cell_" + std::to_string(i) + "x" + std::to_string(c));
            result.cells.push_back(std::move(cell));
        }

    std::vector<std::string> novel;
    for (const auto& [cls, ids] : manifest.kshot->selected) novel.push_back(cls);

    std::mutex detector_mutex;
    auto run_cell = [&](SweepCell& cell) {
        cell.instance_ids = selection.instances(cell.instances);
        cell.context_ids = selection.contexts(cell.contexts);

        DatasetManifest restricted = manifest;
        restricted.kshot->k = cell.instances;
        for (auto& [cls, ids] : restricted.kshot->selected) {
            const auto& order = selection.instance_order.at(cls);
            ids.assign(order.begin(), order.begin() + cell.instances);
            std::sort(ids.begin(), ids.end());
        }
        const std::vector<ReferenceInstance> refs = extract_references(restricted);
        std::vector<ContextScene> contexts;
        for (const auto& id : cell.context_ids) contexts.push_back(load_context(manifest, id));

        SynthesisPlan plan = spec.plan_template;
        plan.backend = spec.backend;
        plan.seed = derive_seed(spec.seed, "sweep/synthesis");
        plan.jobs = 1;
        plan.items.clear();
        for (const auto& id : cell.context_ids) {
            PlanItem item{id, {}};
            for (const auto& cls : novel) item.instances.emplace_back(cls, spec.per_context);
            plan.items.push_back(std::move(item));
        }
        fs::remove_all(cell.dataset);
        SynthesisOutcome synthetic = synthesize(refs, contexts, plan, cell.dataset);
        DatasetManifest merged = merge(kshot_subset(restricted), synthetic.manifest);
        save_voc(merged, cell.dataset);
        merged.root = cell.dataset;
        for (auto& img : merged.images) img.path = cell.dataset / "JPEGImages" / img.file;
        save_manifest(merged, cell.dataset / "manifest.json");

        if (!spec.detector_command) return;
        const fs::path detections = cell.dataset / "detections.json";
        const std::string command = replace_all(replace_all(*spec.detector_command, "{train_dir}", cell.dataset.string()),
                                                "{out_detections}", detections.string());
        int status = 0;
        {
            std::unique_lock lock(detector_mutex, std::defer_lock);
            if (spec.serialize_detector) lock.lock();
            status = std::system(command.c_str());
        }
        if (status != 0) {
            cell.error = "detector command exited with status " + std::to_string(status);
            return;
        }
        const std::vector<Detection> dets = read_detections(detections, *spec.test_set);
        EvalOptions options;
        options.classes = novel;
        cell.map = evaluate(*spec.test_set, dets, options).map;
    };

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < result.cells.size(); i = next++) {
            try {
                run_cell(result.cells[i]);
            } catch (const Error& e) {
                result.cells[i].error = e.what();
            }
        }
    };
    const int jobs = std::max(1, std::min<int>(spec.jobs, int(result.cells.size())));
    std::vector<std::thread> threads;
    for (int t = 1; t < jobs; ++t) threads.emplace_back(worker);
    worker();
    for (auto& t : threads) t.join();

    fs::create_directories(spec.output_dir);
    std::ofstream(spec.output_dir / "sweep.json") << sweep_to_json(result).dump(2) << '\n';
    return result;
}

nlohmann::json sweep_to_json(const SweepResult& result) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& cell : result.cells) {
        nlohmann::json j{{"instances", cell.instances},
                         {"contexts", cell.contexts},
                         {"dataset", cell.dataset.string()},
                         {"instance_ids", cell.instance_ids},
                         {"context_ids", cell.context_ids}};
        j["map"] = cell.map ? nlohmann::json(*cell.map) : nlohmann::json(nullptr);
        if (cell.error) j["error"] = *cell.error;
        cells.push_back(std::move(j));
    }
    return {{"cells", cells}};
}

namespace {

struct Curve {
    std::string axis;    // the varied axis
    std::string fixed;   // name of the fixed axis
    int fixed_value = 0;
    std::vector<std::pair<int, double>> points;
    int excluded = 0;
};

void write_svg(const fs::path& file, const Curve& curve) {
    constexpr double W = 480, H = 320, L = 60, R = 20, T = 30, B = 50;
    double x_lo = curve.points.front().first, x_hi = curve.points.back().first;
    double y_lo = 0.0, y_hi = 0.0;
    for (const auto& [x, y] : curve.points) y_hi = std::max(y_hi, y);
    if (x_hi == x_lo) x_hi = x_lo + 1;
    if (y_hi == y_lo) y_hi = y_lo + 1;
    auto sx = [&](double x) { return L + (x - x_lo) / (x_hi - x_lo) * (W - L - R); };
    auto sy = [&](double y) { return H - B - (y - y_lo) / (y_hi - y_lo) * (H - T - B); };

    std::ofstream out(file);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">mAP@0.5 vs " << curve.axis
        << " (" << curve.fixed << " = " << curve.fixed_value << ")</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << (W + L - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
        << curve.axis << "</text>\n";
    out << "<text x=\"" << L - 8 << "\" y=\"" << T + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << y_hi * 100
        << "</text>\n";
    out << "<text x=\"" << L - 8 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"11\">0</text>\n";
    out << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : curve.points) out << sx(x) << "," << sy(y) << " ";
    out << "\"/>\n";
    for (const auto& [x, y] : curve.points) {
        out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"steelblue\"/>\n";
        out << "<text x=\"" << sx(x) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << x
            << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace

std::vector<fs::path> emit_curves(const SweepResult& result, const fs::path& dir) {
    const bool any = std::any_of(result.cells.begin(), result.cells.end(), [](const SweepCell& c) { return c.map.has_value(); });
    if (!any) throw DataError("no evaluated sweep cell to plot");

    std::map<int, Curve> by_instances, by_contexts;
    for (const auto& cell : result.cells) {
        Curve& a = by_instances[cell.instances];
        a.axis = "contexts", a.fixed = "instances", a.fixed_value = cell.instances;
        Curve& b = by_contexts[cell.contexts];
        b.axis = "instances", b.fixed = "contexts", b.fixed_value = cell.contexts;
        if (cell.map) {
            a.points.emplace_back(cell.contexts, *cell.map);
            b.points.emplace_back(cell.instances, *cell.map);
        } else {
            ++a.excluded;
            ++b.excluded;
        }
    }

    fs::create_directories(dir);
    std::vector<fs::path> written;
    auto emit = [&](Curve& curve) {
        if (curve.points.empty()) return;
        std::sort(curve.points.begin(), curve.points.end());
        const std::string stem = "curve_" + curve.fixed + "_" + std::to_string(curve.fixed_value);
        const fs::path csv = dir / (stem + ".csv");
        std::ofstream out(csv);
        out << curve.axis << ",map\n";
        for (const auto& [x, y] : curve.points) out << x << "," << format_value(y) << "\n";
        out << "# excluded cells without mAP: " << curve.excluded << "\n";
        out.close();
        written.push_back(csv);
        const fs::path svg = dir / (stem + ".svg");
        write_svg(svg, curve);
        written.push_back(svg);
    };
    for (auto& [v, curve] : by_instances) emit(curve);
    for (auto& [v, curve] : by_contexts) emit(curve);
    return written;
}

}  // namespace ctxforge
