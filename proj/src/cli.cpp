#include "ctxforge/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "ctxforge/config.hpp"
#include "ctxforge/dataset.hpp"
#include "ctxforge/error.hpp"
#include "ctxforge/evaluation.hpp"
#include "ctxforge/harness.hpp"
#include "ctxforge/mock_service.hpp"
#include "ctxforge/rng.hpp"

namespace fs = std::filesystem;

namespace ctxforge {

namespace {

/// Flags bound to a staging config; only flags given on the command line are copied over the
/// TOML-resolved config.
struct Bindings {
    RunConfig staging;
    std::string backend = "naive";
    std::string config_file;
    std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> apply;

    template <typename T>
    CLI::Option* add(CLI::App* app, const std::string& name, T RunConfig::*member, const std::string& description) {
        CLI::Option* opt = app->add_option(name, staging.*member, description);
        apply.emplace_back(opt, [this, member](RunConfig& c) { c.*member = staging.*member; });
        return opt;
    }

    CLI::Option* add_flag(CLI::App* app, const std::string& name, bool RunConfig::*member,
                          const std::string& description) {
        CLI::Option* opt = app->add_flag(name, staging.*member, description);
        apply.emplace_back(opt, [this, member](RunConfig& c) { c.*member = staging.*member; });
        return opt;
    }

    void add_backend(CLI::App* app) {
        CLI::Option* opt = app->add_option("--backend", backend, "Compositing backend")
                               ->check(CLI::IsMember({"naive", "poisson", "diffusion"}));
        apply.emplace_back(opt, [this](RunConfig& c) { c.backend = backend_from_string(backend); });
    }

    RunConfig resolve() const {
        RunConfig cfg;
        if (!config_file.empty()) cfg.apply_toml(config_file);
        for (const auto& [opt, fn] : apply)
            if (opt->count() > 0) fn(cfg);
        if (cfg.endpoint.empty())
            if (const char* env = std::getenv("CTXFORGE_ENDPOINT")) cfg.endpoint = env;
        return cfg;
    }
};

void add_common(CLI::App* app, Bindings& b) {
    app->add_option("--config", b.config_file, "TOML config file; flags override its values");
    b.add(app, "--root", &RunConfig::root, "VOC dataset root (Annotations/, JPEGImages/)");
    b.add(app, "--classes", &RunConfig::classes, "Class names of the dataset (default: DIOR classes)")
        ->delimiter(',');
    b.add(app, "--novel", &RunConfig::novel, "Novel class names")->delimiter(',');
    b.add(app, "--k", &RunConfig::k, "Instances per novel class");
    b.add(app, "--seed", &RunConfig::seed, "Root seed");
    b.add(app, "--out", &RunConfig::out, "Output directory");
    b.add(app, "--jobs", &RunConfig::jobs, "Worker threads (default: logical cores)");
}

void add_synthesis(CLI::App* app, Bindings& b) {
    b.add_backend(app);
    b.add(app, "--context-root", &RunConfig::context_root, "VOC root to draw contexts from (default: --root)");
    b.add(app, "--contexts", &RunConfig::contexts, "Number of context images");
    b.add(app, "--per-context", &RunConfig::per_context, "Instances of each novel class per context");
    b.add(app, "--scale-min", &RunConfig::scale_min, "Lower bound of the area scale factor");
    b.add(app, "--scale-max", &RunConfig::scale_max, "Upper bound of the area scale factor");
    b.add(app, "--overlap", &RunConfig::overlap, "Maximum IoU with any other box");
    b.add(app, "--max-attempts", &RunConfig::max_attempts, "Placement attempts per instance");
    b.add(app, "--tol", &RunConfig::tolerance, "Poisson max-norm residual bound");
    b.add(app, "--max-iter", &RunConfig::max_iterations, "Poisson iteration cap (0: 10*sqrt(unknowns))");
    b.add(app, "--endpoint", &RunConfig::endpoint, "Integration service URL (env CTXFORGE_ENDPOINT)");
    b.add_flag(app, "--mock,--mock-endpoint", &RunConfig::mock, "Use the in-process mock integration service");
    b.add(app, "--timeout", &RunConfig::timeout_s, "Service timeout in seconds");
    b.add(app, "--retries", &RunConfig::retries, "Service retries after a transport failure");
    b.add(app, "--steps", &RunConfig::steps, "Denoising steps requested from the service");
}

ClassMap class_map(const RunConfig& cfg) {
    ClassMap classes;
    if (cfg.classes.empty()) {
        classes = dior_classes();
    } else {
        for (const auto& name : cfg.classes) classes[name] = Split::Base;
    }
    return with_novel(std::move(classes), cfg.novel);
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

void validate_synthesis(const RunConfig& cfg) {
    require(!cfg.root.empty(), "--root is required");
    require(!cfg.out.empty(), "--out is required");
    require(!cfg.novel.empty(), "--novel must name at least one class");
    require(cfg.k >= 1, "--k must be >= 1");
    require(cfg.contexts >= 1, "--contexts must be >= 1");
    require(cfg.per_context >= 1, "--per-context must be >= 1");
    if (cfg.backend == Backend::Diffusion)
        require(!cfg.endpoint.empty() || cfg.mock, "--backend diffusion needs --endpoint or --mock");
}

void write_resolved(const RunConfig& cfg) {
    fs::create_directories(cfg.out);
    std::ofstream(cfg.out / "config.resolved.toml") << cfg.to_toml();
}

/// Owns whatever the diffusion backend needs for the lifetime of a command.
struct ServiceHandle {
    std::unique_ptr<MockIntegrationServer> mock;
    std::unique_ptr<IntegrationClient> client;
};

ServiceHandle open_service(const RunConfig& cfg) {
    ServiceHandle h;
    if (cfg.backend != Backend::Diffusion) return h;
    ClientOptions options;
    if (cfg.mock) {
        h.mock = std::make_unique<MockIntegrationServer>();
        options.endpoint = h.mock->endpoint();
    } else {
        options.endpoint = cfg.endpoint;
    }
    options.timeout = std::chrono::milliseconds(std::int64_t(cfg.timeout_s * 1000.0));
    options.retries = cfg.retries;
    options.steps = cfg.steps;
    h.client = std::make_unique<IntegrationClient>(options);
    return h;
}

SynthesisPlan base_plan(const RunConfig& cfg, const IntegrationClient* client) {
    SynthesisPlan plan;
    plan.backend = cfg.backend;
    plan.scale_min = cfg.scale_min;
    plan.scale_max = cfg.scale_max;
    plan.overlap_threshold = cfg.overlap;
    plan.max_attempts = cfg.max_attempts;
    plan.poisson.tolerance = cfg.tolerance;
    plan.poisson.max_iterations = cfg.max_iterations;
    plan.client = client;
    plan.jobs = cfg.resolved_jobs();
    plan.seed = derive_seed(cfg.seed, "synthesis");
    return plan;
}

std::vector<std::string> pick_contexts(const DatasetManifest& source, int count, std::uint64_t seed) {
    std::vector<std::string> pool = novel_free_images(source);
    if (pool.empty()) throw DataError("no novel-free context image in " + source.root.string());
    Rng rng(derive_seed(seed, "contexts"));
    for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.index(i)]);
    pool.resize(std::min<std::size_t>(pool.size(), std::size_t(count)));
    return pool;
}

void finalize_dataset(DatasetManifest merged, const fs::path& out) {
    save_voc(merged, out);
    merged.root = out;
    for (auto& img : merged.images) img.path = out / "JPEGImages" / img.file;
    save_manifest(merged, out / "manifest.json");
    std::ofstream(out / "annotations.coco.json") << to_coco(merged).dump(2) << '\n';
}

int cmd_synth(const RunConfig& cfg, std::ostream& out) {
    validate_synthesis(cfg);
    write_resolved(cfg);
    const ClassMap classes = class_map(cfg);
    const DatasetManifest dataset = load_voc(cfg.root, classes);
    const DatasetManifest kshot = sample_kshot(dataset, cfg.novel, cfg.k, derive_seed(cfg.seed, "kshot"));
    const std::vector<ReferenceInstance> refs = extract_references(kshot);

    const DatasetManifest context_source = cfg.context_root.empty() ? dataset : load_voc(cfg.context_root, classes);
    std::vector<ContextScene> contexts;
    for (const auto& id : pick_contexts(context_source, cfg.contexts, cfg.seed))
        contexts.push_back(load_context(context_source, id));

    ServiceHandle service = open_service(cfg);
    SynthesisPlan plan = base_plan(cfg, service.client.get());
    std::set<std::string> novel(cfg.novel.begin(), cfg.novel.end());
    for (const auto& c : contexts) {
        PlanItem item{c.id, {}};
        for (const auto& cls : novel) item.instances.emplace_back(cls, cfg.per_context);
        plan.items.push_back(std::move(item));
    }
    SynthesisOutcome outcome = synthesize(refs, contexts, plan, cfg.out);
    DatasetManifest fewshot = kshot_subset(kshot);
    finalize_dataset(merge(fewshot, outcome.manifest), cfg.out);

    std::map<std::string, int> skipped;
    for (const auto& s : outcome.skipped) ++skipped[s.class_name];
    out << std::left << std::setw(26) << "class" << std::right << std::setw(10) << "few-shot" << std::setw(10)
        << "placed" << std::setw(10) << "skipped" << '\n';
    for (const auto& cls : novel) {
        out << std::left << std::setw(26) << cls << std::right << std::setw(10)
            << kshot.kshot->selected.at(cls).size() << std::setw(10) << outcome.placed[cls] << std::setw(10)
            << skipped[cls] << '\n';
    }
    out << "synthetic images: " << outcome.manifest.images.size() << ", annotations: "
        << outcome.manifest.annotations.size() << ", written to " << cfg.out.string() << '\n';
    return 0;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    validate_synthesis(cfg);
    write_resolved(cfg);
    const ClassMap classes = class_map(cfg);
    const DatasetManifest dataset = load_voc(cfg.root, classes);
    const DatasetManifest kshot = sample_kshot(dataset, cfg.novel, cfg.k, derive_seed(cfg.seed, "kshot"));

    ServiceHandle service = open_service(cfg);
    SweepSpec spec;
    spec.instance_counts = cfg.sweep_instances;
    spec.context_counts = cfg.sweep_contexts;
    spec.backend = cfg.backend;
    spec.seed = cfg.seed;
    spec.per_context = cfg.per_context;
    spec.output_dir = cfg.out;
    spec.jobs = cfg.resolved_jobs();
    spec.plan_template = base_plan(cfg, service.client.get());
    if (!cfg.detector_command.empty()) {
        require(!cfg.test_root.empty(), "--detector needs --test-root");
        spec.detector_command = cfg.detector_command;
        spec.test_set = load_voc(cfg.test_root, classes);
    }
    SweepResult result = run_sweep(kshot, spec);

    out << std::setw(10) << "instances" << std::setw(10) << "contexts" << std::setw(12) << "mAP(%)" << "  dataset\n";
    bool evaluated = false;
    for (const auto& cell : result.cells) {
        out << std::setw(10) << cell.instances << std::setw(10) << cell.contexts << std::setw(12);
        if (cell.map) {
            std::ostringstream v;
            v << std::fixed << std::setprecision(2) << *cell.map * 100.0;
            out << v.str();
            evaluated = true;
        } else {
            out << "-";
        }
        out << "  " << cell.dataset.string();
        if (cell.error) out << "  (" << *cell.error << ")";
        out << '\n';
    }
    if (evaluated)
        for (const auto& file : emit_curves(result, cfg.out / "curves")) out << "wrote " << file.string() << '\n';
    return 0;
}

int cmd_eval(const RunConfig& cfg, std::ostream& out) {
    require(!cfg.root.empty(), "--root (ground-truth VOC root or manifest.json) is required");
    require(!cfg.detections.empty(), "--detections is required");
    require(cfg.iou > 0.0 && cfg.iou <= 1.0, "--iou must be in (0, 1]");
    const DatasetManifest gt =
        cfg.root.extension() == ".json" ? load_manifest(cfg.root) : load_voc(cfg.root, class_map(cfg));
    const std::vector<Detection> dets = read_detections(cfg.detections, gt);

    EvalOptions options;
    options.iou_threshold = cfg.iou;
    options.interpolation = cfg.eleven_point ? Interpolation::ElevenPoint : Interpolation::AllPoints;
    options.classes = cfg.novel;
    const EvalReport report = evaluate(gt, dets, options);

    std::optional<EvalReport> baseline;
    if (!cfg.baseline.empty()) {
        std::ifstream in(cfg.baseline);
        if (!in) throw DataError("cannot read baseline report " + cfg.baseline.string());
        try {
            baseline = report_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(cfg.baseline.string() + ": " + e.what());
        }
    }
    out << format_table(report, cfg.method, baseline ? &*baseline : nullptr);
    if (baseline) {
        const DeltaReport delta = delta_report(*baseline, report);
        out << "delta mAP " << format_delta(delta.map);
        for (const auto& [name, d] : delta.classes) out << "  " << name << " " << format_delta(d);
        out << '\n';
    }
    out << "interpolation: " << to_string(report.interpolation) << ", IoU threshold: " << report.iou_threshold << '\n';
    if (!cfg.out.empty()) {
        fs::create_directories(cfg.out);
        std::ofstream(cfg.out / "report.json") << report_to_json(report).dump(2) << '\n';
        std::ofstream(cfg.out / "report.txt") << format_table(report, cfg.method, baseline ? &*baseline : nullptr);
    }
    return 0;
}

void draw_box(RgbImage& image, const PixelRect& r) {
    const std::uint8_t color[3] = {255, 32, 32};
    for (Index t = 0; t < 2; ++t) {
        for (Index x = std::max<Index>(r.x0 - t, 0); x < std::min<Index>(r.x1 + t, image.cols()); ++x) {
            for (Index y : {r.y0 - 1 - t, r.y1 + t}) {
                if (y < 0 || y >= image.rows()) continue;
                for (int c = 0; c < 3; ++c) image[c](y, x) = color[c];
            }
        }
        for (Index y = std::max<Index>(r.y0 - t, 0); y < std::min<Index>(r.y1 + t, image.rows()); ++y) {
            for (Index x : {r.x0 - 1 - t, r.x1 + t}) {
                if (x < 0 || x >= image.cols()) continue;
                for (int c = 0; c < 3; ++c) image[c](y, x) = color[c];
            }
        }
    }
}

int cmd_preview(const RunConfig& cfg, std::ostream& out) {
    validate_synthesis(cfg);
    require(cfg.samples >= 1, "--samples must be >= 1");
    write_resolved(cfg);
    const ClassMap classes = class_map(cfg);
    const DatasetManifest dataset = load_voc(cfg.root, classes);
    const DatasetManifest kshot = sample_kshot(dataset, cfg.novel, cfg.k, derive_seed(cfg.seed, "kshot"));
    const std::vector<ReferenceInstance> refs = extract_references(kshot);
    const DatasetManifest context_source = cfg.context_root.empty() ? dataset : load_voc(cfg.context_root, classes);
    const auto context_ids = pick_contexts(context_source, cfg.samples, cfg.seed);
    ServiceHandle service = open_service(cfg);

    for (int s = 0; s < cfg.samples; ++s) {
        const ContextScene context = load_context(context_source, context_ids[std::size_t(s) % context_ids.size()]);
        const ReferenceInstance& ref = refs[std::size_t(s) % refs.size()];
        SynthesisPlan plan = base_plan(cfg, service.client.get());
        plan.seed = derive_seed(cfg.seed, "preview", std::uint64_t(s));
        plan.jobs = 1;
        plan.items = {PlanItem{context.id, {{ref.label().name, 1}}}};
        const fs::path scratch = cfg.out / "preview_scratch";
        SynthesisOutcome outcome;
        try {
            outcome = synthesize(std::span(&ref, 1), std::span(&context, 1), plan, scratch);
        } catch (const DataError& e) {
            out << "sample " << s << ": " << e.what() << '\n';
            continue;
        }
        const Annotation& placed = outcome.manifest.annotations.front();
        RgbImage composite = read_rgb(outcome.manifest.images.front().path);
        PlacementSpec placement(placed.box, composite.cols(), composite.rows());
        StitchResult stitch = build_stitch(ref, placement, composite.rows(), composite.cols(),
                                           derive_seed(plan.seed, "affine"));
        draw_box(composite, placement.rect());

        const Plane<std::uint8_t> gray = stitch.collage.to_u8();
        RgbImage sheet(composite.rows(), composite.cols() * 2);
        for (int c = 0; c < 3; ++c) {
            sheet[c].leftCols(composite.cols()) = composite[c];
            sheet[c].rightCols(composite.cols()) = gray;
        }
        const fs::path file = cfg.out / ("preview_" + std::to_string(s) + ".png");
        write_rgb(file, sheet);
        out << "wrote " << file.string() << " (" << ref.label().name << ", " << to_string(stitch.op)
            << (stitch.rotated ? ", rotated" : "") << ")\n";
    }
    fs::remove_all(cfg.out / "preview_scratch");
    return 0;
}

const char* kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Config: return "E_CONFIG";
        case ErrorKind::Data: return "E_DATA";
        case ErrorKind::Service: return "E_SERVICE";
    }
    return "E_DATA";
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"ctxforge: context-diverse dataset synthesis for few-shot detection", "ctxforge"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    Bindings synth_b, sweep_b, eval_b, preview_b;
    CLI::App* synth = app.add_subcommand("synth", "Sample K-shot references, composite them into contexts, write the merged dataset");
    add_common(synth, synth_b);
    add_synthesis(synth, synth_b);

    CLI::App* sweep = app.add_subcommand("sweep", "Materialize the instance-count x context-count dataset grid");
    add_common(sweep, sweep_b);
    add_synthesis(sweep, sweep_b);
    sweep_b.add(sweep, "--instances", &RunConfig::sweep_instances, "Instance counts per class")->delimiter(',');
    sweep_b.add(sweep, "--context-counts", &RunConfig::sweep_contexts, "Context counts")->delimiter(',');
    sweep_b.add(sweep, "--detector", &RunConfig::detector_command,
                "Detector command with {train_dir} and {out_detections} placeholders");
    sweep_b.add(sweep, "--test-root", &RunConfig::test_root, "VOC root the detector output is scored against");

    CLI::App* eval = app.add_subcommand("eval", "Score detections with VOC mAP@0.5");
    add_common(eval, eval_b);
    eval_b.add(eval, "--detections", &RunConfig::detections, "COCO results .json, class .txt file, or directory");
    eval_b.add(eval, "--baseline", &RunConfig::baseline, "Baseline report.json for delta columns");
    eval_b.add(eval, "--iou", &RunConfig::iou, "IoU match threshold");
    eval_b.add_flag(eval, "--eleven-point", &RunConfig::eleven_point, "Use 11-point interpolated AP");
    eval_b.add(eval, "--method", &RunConfig::method, "Row label in the printed table");

    CLI::App* preview = app.add_subcommand("preview", "Render composites beside their stitch collages as PNG sheets");
    add_common(preview, preview_b);
    add_synthesis(preview, preview_b);
    preview_b.add(preview, "--samples", &RunConfig::samples, "Number of sheets");

    try {
        std::vector<std::string> args;
        for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);
        app.parse(args);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        // Subcommand --help lands here as CallForHelp from the subcommand.
        if (e.get_exit_code() == 0) {
            for (CLI::App* sub : {synth, sweep, eval, preview})
                if (sub->parsed()) {
                    out << sub->help();
                    return 0;
                }
            out << app.help();
            return 0;
        }
        err << "error " << kind_name(ErrorKind::Config) << ": " << e.what() << '\n';
        return int(ErrorKind::Config);
    }

    try {
        if (synth->parsed()) return cmd_synth(synth_b.resolve(), out);
        if (sweep->parsed()) return cmd_sweep(sweep_b.resolve(), out);
        if (eval->parsed()) return cmd_eval(eval_b.resolve(), out);
        if (preview->parsed()) return cmd_preview(preview_b.resolve(), out);
    } catch (const Error& e) {
        err << "error " << kind_name(e.kind()) << ": " << e.what() << '\n';
        return int(e.kind());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error " << kind_name(ErrorKind::Data) << ": " << e.what() << '\n';
        return int(ErrorKind::Data);
    }
    return int(ErrorKind::Config);
}

}  // namespace ctxforge
