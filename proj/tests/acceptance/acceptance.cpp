// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ctxforge/compositing.hpp"
#include "ctxforge/dataset.hpp"
#include "ctxforge/error.hpp"
#include "ctxforge/evaluation.hpp"
#include "ctxforge/geometry.hpp"
#include "ctxforge/harness.hpp"
#include "ctxforge/poisson.hpp"
#include "support/eval_oracle.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

using namespace ctxforge;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// Pinned tolerances.
constexpr double kOrientationSeconds = 1.0;
constexpr double kPoissonResidual = 1e-3;
constexpr double kPoissonConsistent = 1e-3;
constexpr double kPoissonSeconds = 10.0;
constexpr double kDeltaTolerance = 0.005;
constexpr int kSynthesisPlacements = 1000;

struct Failure {
    std::string what;
};

void expect(bool ok, const std::string& what) {
    if (!ok) throw Failure{what};
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1. Orientation law and idempotence over a 100 x 100 ratio grid.
std::string orientation() {
    const auto t0 = Clock::now();
    auto grid = [](int i) { return std::exp(std::log(0.1) + (i + 0.5) / 100.0 * (std::log(10.0) - std::log(0.1))); };
    std::vector<ReferenceInstance> refs;
    for (int i = 0; i < 100; ++i) {
        // Mask of exactly 20 rows and round(20 * ratio) columns; R_r is the realized ratio.
        const Index cols = std::max<Index>(1, Index(std::lround(20.0 * grid(i)))), rows = 20;
        refs.emplace_back(RgbImage(rows, cols, 100), Mask::Ones(rows, cols), ClassLabel{"airplane", Split::Novel}, "g",
                          BBox::make(0, 0, double(cols), double(rows)));
    }
    int cells = 0;
    for (const auto& ref : refs) {
        for (int j = 0; j < 100; ++j) {
            const double rt = grid(j);
            const PlacementSpec placement(BBox::make(0, 0, 10.0 * rt, 10.0), 120, 20);
            const Alignment once = orient_align(ref, placement);
            const double after = once.reference.aspect_ratio();
            expect((after - 1.0) * (placement.aspect_ratio() - 1.0) >= 0.0,
                   "law violated at R_r=" + std::to_string(ref.aspect_ratio()) + " R_t=" + std::to_string(rt));
            const Alignment twice = orient_align(once.reference, placement);
            expect(!twice.rotated && twice.reference.pixels() == once.reference.pixels() &&
                       (twice.reference.mask() == once.reference.mask()).all(),
                   "not idempotent at R_r=" + std::to_string(ref.aspect_ratio()) + " R_t=" + std::to_string(rt));
            ++cells;
        }
    }
    const double s = seconds_since(t0);
    expect(s < kOrientationSeconds, "took " + fmt("%.3f", s) + " s");
    return std::to_string(cells) + " cells, " + fmt("%.3f", s) + " s";
}

// Independent 5-point residual of the returned solution.
double plug_back(const Plane<double>& f, const Plane<double>& g, const Mask& m) {
    double worst = 0.0;
    for (Index y = 1; y + 1 < f.rows(); ++y)
        for (Index x = 1; x + 1 < f.cols(); ++x)
            if (m(y, x))
                worst = std::max(worst, std::abs((4 * f(y, x) - f(y - 1, x) - f(y + 1, x) - f(y, x - 1) - f(y, x + 1)) -
                                                 (4 * g(y, x) - g(y - 1, x) - g(y + 1, x) - g(y, x - 1) - g(y, x + 1))));
    return worst;
}

Plane<double> smooth(Rng& rng, Index n) {
    const double a = rng.uniform(0.03, 0.3), b = rng.uniform(0.03, 0.3), c = rng.uniform(0, 6), d = rng.uniform(0, 6);
    Plane<double> p(n, n);
    for (Index y = 0; y < n; ++y)
        for (Index x = 0; x < n; ++x)
            p(y, x) = 0.5 + 0.25 * std::sin(a * double(x) + c) + 0.2 * std::cos(b * double(y) + d) +
                      0.02 * rng.uniform(-1, 1);
    return p;
}

// 2. Poisson solver on 20 random 64 x 64 triples.
std::string poisson() {
    const auto t0 = Clock::now();
    Rng rng(2024);
    double worst = 0.0, worst_consistent = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const Plane<double> context = smooth(rng, 64), source = smooth(rng, 64);
        // Union of two random ellipses kept off the border.
        Mask mask = Mask::Zero(64, 64);
        for (int e = 0; e < 2; ++e) {
            const double cy = rng.uniform(20, 44), cx = rng.uniform(20, 44);
            const double ry = rng.uniform(5, 18), rx = rng.uniform(5, 18);
            for (Index y = 1; y < 63; ++y)
                for (Index x = 1; x < 63; ++x)
                    if ((double(y) - cy) * (double(y) - cy) / (ry * ry) + (double(x) - cx) * (double(x) - cx) / (rx * rx) <= 1)
                        mask(y, x) = 1;
        }
        const PoissonSolution s = solve_poisson(source, context, mask);
        const double r = plug_back(s.values, source, mask);
        worst = std::max(worst, r);
        expect(r <= kPoissonResidual, "trial " + std::to_string(trial) + " residual " + fmt("%.3g", r));
        for (Index i = 0; i < mask.size(); ++i)
            expect(mask.data()[i] || s.values.data()[i] == context.data()[i],
                   "trial " + std::to_string(trial) + " boundary pixel changed");

        const PoissonSolution same = solve_poisson(context, context, mask);
        const double err = (same.values - context).abs().maxCoeff();
        worst_consistent = std::max(worst_consistent, err);
        expect(err <= kPoissonConsistent, "consistent case off by " + fmt("%.3g", err));

        // Through the compositor: pixels outside the solved region equal the context bit for bit.
        ContextScene scene;
        scene.id = "p";
        scene.pixels = RgbImage(64, 64);
        for (int c = 0; c < 3; ++c) scene.pixels[c] = to_u8(context * 255.0 * (0.8 + 0.1 * c));
        RgbImage patch(40, 40);
        for (int c = 0; c < 3; ++c) patch[c] = to_u8(source.block(12, 12, 40, 40) * 255.0);
        const ReferenceInstance ref(patch, mask.block(12, 12, 40, 40), ClassLabel{"windmill", Split::Novel}, "s",
                                    BBox::make(0, 0, 40, 40));
        const PlacementSpec placement(BBox::make(12, 12, 52, 52), 64, 64);
        const CompositeResult out = compose_poisson(scene, ref, placement);
        expect(out.solver_stats && out.solver_stats->residual <= kPoissonResidual, "compositor residual above bound");
        const Mask solved = mask;  // mask sits inside the placement; its interior is the unknown set
        for (int c = 0; c < 3; ++c)
            for (Index y = 0; y < 64; ++y)
                for (Index x = 0; x < 64; ++x)
                    if (!solved(y, x)) expect(out.pixels[c](y, x) == scene.pixels[c](y, x), "compositor boundary changed");
    }
    const double s = seconds_since(t0);
    expect(s < kPoissonSeconds, "took " + fmt("%.2f", s) + " s");
    return "max residual " + fmt("%.2e", worst) + ", consistent error " + fmt("%.2e", worst_consistent) + ", " +
           fmt("%.2f", s) + " s";
}

// 3. Evaluator equals the brute-force oracle; hand case AP = 0.5.
std::string evaluator() {
    int classes = 0;
    for (std::uint64_t seed = 0; seed < 500; ++seed) {
        const test::RandomInstance inst = test::random_instance(1'000'000 + seed);
        const EvalReport r = evaluate(inst.gt, inst.detections);
        double sum = 0.0;
        int n = 0;
        for (const char* cls : {"alpha", "beta"}) {
            const test::OracleClass o = test::oracle_class(inst.gt, inst.detections, cls, 0.5);
            if (o.positives == 0) {
                expect(!r.classes.count(cls), "class without GT was evaluated");
                continue;
            }
            const ClassResult& c = r.classes.at(cls);
            const int tp = int(std::count(o.tp_flags.begin(), o.tp_flags.end(), true));
            const int fp = int(o.tp_flags.size()) - tp;
            expect(c.ap == o.ap && c.tp == tp && c.fp == fp && c.gt == o.positives,
                   "mismatch at seed " + std::to_string(seed) + " class " + cls);
            sum += o.ap;
            ++n;
            ++classes;
        }
        expect(r.map == (n ? sum / n : 0.0), "mAP mismatch at seed " + std::to_string(seed));
    }
    DatasetManifest gt;
    gt.images = {{"a", "a", 100, 100, {}}, {"b", "b", 100, 100, {}}};
    gt.annotations = {{"a#0", "a", BBox::make(10, 10, 50, 50), {"airplane", Split::Novel}, false},
                      {"b#0", "b", BBox::make(20, 20, 60, 60), {"airplane", Split::Novel}, false}};
    const std::vector<Detection> hand{{"a", BBox::make(10, 10, 50, 50), "airplane", 0.9},
                                      {"b", BBox::make(70, 70, 95, 95), "airplane", 0.8}};
    const double ap = evaluate(gt, hand).classes.at("airplane").ap;
    expect(ap == 0.5, "hand case AP " + fmt("%.17g", ap));
    return "500 instances, " + std::to_string(classes) + " class evaluations exact; hand case AP = 0.5";
}

// 4. Delta report formatting.
std::string delta() {
    std::string detail;
    for (const auto& [before, after, expected] :
         std::vector<std::tuple<double, double, std::string>>{{18.30, 32.18, "+13.88"}, {26.16, 34.52, "+8.36"}}) {
        EvalReport base, aug;
        base.map = before / 100.0;
        aug.map = after / 100.0;
        base.classes["airplane"].ap = base.map;
        aug.classes["airplane"].ap = aug.map;
        const DeltaReport d = delta_report(base, aug);
        const std::string printed = format_delta(d.map);
        expect(printed == expected, "printed " + printed + ", expected " + expected);
        expect(std::abs(std::stod(printed) - std::stod(expected)) <= kDeltaTolerance, "outside tolerance");
        detail += fmt("%.2f", before) + "->" + fmt("%.2f", after) + " " + printed + "; ";
    }
    return detail.substr(0, detail.size() - 2);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// 5. Synthesis invariants over >= 1000 placements, plus byte-identical reruns.
std::string synthesis() {
    test::TempDir dir("acc_syn");
    std::vector<ReferenceInstance> refs;
    for (std::size_t c = 0; c < test::fixture_novel().size(); ++c)
        for (int i = 0; i < 3; ++i) {
            const Index w = Index(10 + 7 * i + 3 * c), h = Index(14 + 4 * c - i);
            refs.emplace_back(test::random_texture(h, w, 10 * c + std::uint64_t(i)), Mask::Ones(h, w),
                              ClassLabel{test::fixture_novel()[c], Split::Novel}, "r",
                              BBox::make(0, 0, double(w), double(h)));
        }
    std::vector<ContextScene> contexts;
    Rng rng(5);
    for (int i = 0; i < 26; ++i) {
        ContextScene c;
        c.id = "ctx" + std::to_string(i);
        c.pixels = test::random_texture(280 + Index(rng.index(60)), 300 + Index(rng.index(60)), 700 + std::uint64_t(i));
        c.novel_free = true;
        for (int b = 0; b < 3; ++b) {
            const double x = rng.uniform(0, 200), y = rng.uniform(0, 200);
            c.existing_boxes.push_back({BBox::make(x, y, x + rng.uniform(20, 60), y + rng.uniform(20, 60)),
                                        ClassLabel{"ship", Split::Base}});
        }
        contexts.push_back(std::move(c));
    }
    SynthesisPlan plan;
    plan.seed = 77;
    plan.jobs = 4;
    std::map<std::string, int> planned;
    for (const auto& c : contexts) {
        PlanItem item{c.id, {}};
        for (const auto& cls : test::fixture_novel()) {
            item.instances.emplace_back(cls, 9);
            planned[cls] += 9;
        }
        plan.items.push_back(item);
    }
    const SynthesisOutcome out = synthesize(refs, contexts, plan, dir / "naive");
    const int placed = int(out.manifest.annotations.size());
    expect(placed >= kSynthesisPlacements, "only " + std::to_string(placed) + " placements");

    std::map<std::string, const ContextScene*> by_id;
    for (const auto& c : contexts) by_id[c.id] = &c;
    std::map<std::string, std::vector<BBox>> per_image;
    for (const auto& a : out.manifest.annotations) per_image[a.image_id].push_back(a.box);
    double worst = 0.0;
    for (const auto& img : out.manifest.images) {
        const ContextScene& ctx = *by_id.at(img.id.substr(0, img.id.find("__syn")));
        const auto& boxes = per_image[img.id];
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            expect(boxes[i].inside(double(img.width), double(img.height)), "box outside " + img.id);
            for (const auto& e : ctx.existing_boxes) worst = std::max(worst, iou(boxes[i], e.box));
            for (std::size_t j = 0; j < i; ++j) worst = std::max(worst, iou(boxes[i], boxes[j]));
        }
    }
    expect(worst <= plan.overlap_threshold, "IoU " + fmt("%.4f", worst) + " above threshold");
    std::map<std::string, int> skipped;
    for (const auto& s : out.skipped) ++skipped[s.class_name];
    for (const auto& [cls, n] : planned)
        expect(out.placed.at(cls) == n - skipped[cls], "count mismatch for " + cls);

    for (Backend backend : {Backend::Naive, Backend::Poisson}) {
        SynthesisPlan small = plan;
        small.backend = backend;
        small.items.resize(6);
        const std::string name = to_string(backend);
        const SynthesisOutcome a = synthesize(refs, contexts, small, dir / (name + "_a"));
        small.jobs = 1;
        const SynthesisOutcome b = synthesize(refs, contexts, small, dir / (name + "_b"));
        expect(a.manifest == b.manifest, name + " manifests differ");
        for (const auto& img : a.manifest.images)
            expect(slurp(dir / (name + "_a") / "JPEGImages" / img.file) == slurp(dir / (name + "_b") / "JPEGImages" / img.file),
                   name + " bytes differ for " + img.file);
    }
    return std::to_string(placed) + " placements, " + std::to_string(out.skipped.size()) + " skips, max IoU " +
           fmt("%.4f", worst) + "; naive/poisson reruns byte-identical";
}

// 6. VOC round trip on 50 images; K-shot exact and permutation stable.
std::string voc_and_kshot() {
    test::TempDir dir("acc_voc");
    const DatasetManifest made = test::make_voc_fixture(dir / "voc", 50, 31);
    const DatasetManifest a = load_voc(dir / "voc");
    expect(a.images.size() == 50, "expected 50 images");
    expect(a == made, "loaded manifest differs from the written one");
    save_voc(a, dir / "copy");
    expect(load_voc(dir / "copy") == a, "load -> save -> load changed the manifest");

    std::mt19937 shuffle(3);
    for (int k : {1, 2, 3}) {
        const DatasetManifest s = sample_kshot(a, test::fixture_novel(), k, 11);
        for (const auto& [cls, ids] : s.kshot->selected)
            expect(int(ids.size()) == k, cls + " has " + std::to_string(ids.size()) + " selections");
        for (int t = 0; t < 10; ++t) {
            DatasetManifest p = a;
            std::shuffle(p.images.begin(), p.images.end(), shuffle);
            std::shuffle(p.annotations.begin(), p.annotations.end(), shuffle);
            expect(sample_kshot(p, test::fixture_novel(), k, 11).kshot == s.kshot, "selection depends on record order");
        }
    }
    return "50 images, " + std::to_string(a.annotations.size()) + " boxes round-tripped; K=1,2,3 exact and stable";
}

// 7. Sweep nesting.
std::string sweep_nesting() {
    test::TempDir dir("acc_sweep");
    const DatasetManifest m = sample_kshot(test::make_voc_fixture(dir / "voc", 60, 41), test::fixture_novel(), 4, 2);
    auto subset = [](const std::vector<std::string>& s, const std::vector<std::string>& b) {
        const std::set<std::string> big(b.begin(), b.end());
        return std::all_of(s.begin(), s.end(), [&](const std::string& x) { return big.count(x) > 0; });
    };
    SweepSpec spec;
    spec.instance_counts = {1, 2, 4};
    spec.context_counts = {2, 5};
    spec.output_dir = dir / "out";
    spec.seed = 8;
    spec.jobs = 2;
    const SweepResult r = run_sweep(m, spec);
    int pairs = 0;
    for (const auto& a : r.cells) {
        expect(!a.error, "cell failed: " + a.error.value_or(""));
        for (const auto& b : r.cells) {
            if (a.contexts == b.contexts && a.instances < b.instances) {
                expect(subset(a.instance_ids, b.instance_ids), "instance sets not nested");
                expect(a.context_ids == b.context_ids, "context set changed along the instance axis");
                ++pairs;
            }
            if (a.instances == b.instances && a.contexts < b.contexts) {
                expect(subset(a.context_ids, b.context_ids), "context sets not nested");
                expect(a.instance_ids == b.instance_ids, "instance set changed along the context axis");
                ++pairs;
            }
        }
    }
    const auto pool = novel_free_images(m);
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        spec.seed = seed;
        const SweepSelection sel = plan_sweep(m, pool, spec);
        for (int i = 1; i < 4; ++i) expect(subset(sel.instances(i), sel.instances(i + 1)), "planned instances not nested");
        for (int c = 1; c < int(pool.size()); ++c) expect(subset(sel.contexts(c), sel.contexts(c + 1)), "planned contexts not nested");
    }
    return std::to_string(r.cells.size()) + " cells, " + std::to_string(pairs) + " ordered pairs nested; 50 seeded plans";
}

ConditioningBundle bundle(std::optional<CoarseFeature> coarse) {
    ContextScene ctx;
    ctx.id = "c";
    ctx.pixels = test::random_texture(40, 48, 1);
    const ReferenceInstance ref(test::random_texture(12, 16, 2), Mask::Ones(12, 16), ClassLabel{"airplane", Split::Novel},
                                "r", BBox::make(0, 0, 16, 12));
    return make_bundle(ctx, ref, PlacementSpec(BBox::make(10, 8, 26, 20), 48, 40), 3, std::move(coarse));
}

// 8. Diffusion client against an in-process stub.
std::string diffusion_client() {
    {
        test::StubServer stub(test::StubServer::Mode::Normal);
        IntegrationClient client(ClientOptions{stub.endpoint()});
        const RgbImage ok = client.integrate(bundle(CoarseFeature::Zero(257, 1536)), 1);
        expect(ok.rows() == 40 && ok.cols() == 48, "mock raster not context-sized");
        for (auto [rows, cols] : {std::pair<Index, Index>{256, 1536}, {257, 1535}, {258, 1536}}) {
            bool rejected = false;
            try {
                client.integrate(bundle(CoarseFeature::Zero(rows, cols)), 1);
            } catch (const DataError&) {
                rejected = true;
            }
            expect(rejected, "coarse feature " + std::to_string(rows) + "x" + std::to_string(cols) + " accepted");
        }
        expect(stub.requests() == 1, "a malformed bundle reached the server");

        // Server side of the schema: a hand-built 257 x 1535 payload is answered with 400.
        nlohmann::json doc = wire::encode_request(bundle(CoarseFeature::Zero(257, 1536)), 5, 1);
        for (auto& row : doc["coarse_feature"]) row.erase(row.size() - 1);
        httplib::Client raw(stub.endpoint());
        auto res = raw.Post("/v1/integrate", doc.dump(), "application/json");
        expect(res && res->status == 400, "257x1535 payload not rejected with 400");
    }
    {
        test::StubServer stub(test::StubServer::Mode::Slow, std::chrono::milliseconds(500));
        ClientOptions options{stub.endpoint()};
        options.timeout = std::chrono::milliseconds(120);
        options.retries = 2;
        IntegrationClient client(options);
        bool failed = false;
        try {
            client.integrate(bundle(std::nullopt), 1);
        } catch (const ServiceError&) {
            failed = true;
        }
        expect(failed, "timeout did not surface as a service error");
        expect(client.attempts() == 3, "expected 3 attempts, saw " + std::to_string(client.attempts()));
    }
    {
        test::StubServer stub(test::StubServer::Mode::WrongSize);
        IntegrationClient client(ClientOptions{stub.endpoint()});
        std::string message;
        try {
            client.integrate(bundle(std::nullopt), 1);
        } catch (const ProtocolError& e) {
            message = e.what();
        }
        expect(message.find("48x41") != std::string::npos && message.find("48x40") != std::string::npos,
               "dimension mismatch not reported with both sizes: '" + message + "'");
    }
    return "257x1536 enforced client-side (0 bad requests sent), 400 server-side; timeout -> 3 attempts; "
           "size mismatch -> protocol error";
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<std::string()>>> criteria{
        {"orientation-alignment law", orientation},
        {"poisson solver", poisson},
        {"evaluator oracle equivalence", evaluator},
        {"delta report arithmetic", delta},
        {"synthesis invariants", synthesis},
        {"voc round trip and k-shot", voc_and_kshot},
        {"sweep nesting", sweep_nesting},
        {"diffusion client contract", diffusion_client},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        try {
            const std::string detail = run();
            std::cout << "PASS  " << name << "  (" << detail << ")" << std::endl;
        } catch (const Failure& f) {
            std::cout << "FAIL  " << name << "  " << f.what << std::endl;
            ++failures;
        } catch (const std::exception& e) {
            std::cout << "FAIL  " << name << "  exception: " << e.what() << std::endl;
            ++failures;
        }
    }
    std::cout << (criteria.size() - std::size_t(failures)) << "/" << criteria.size() << " criteria passed" << std::endl;
    return failures;
}
