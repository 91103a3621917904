#include <doctest.h>

#include <cmath>
#include <thread>

#include "ctxforge/compositing.hpp"
#include "ctxforge/error.hpp"
#include "ctxforge/mock_service.hpp"
#include "ctxforge/rng.hpp"
#include "ctxforge/wire.hpp"
#include "support/fixtures.hpp"
#include "support/stub_server.hpp"

using namespace ctxforge;

namespace {

ContextScene make_context(Index rows, Index cols, std::uint64_t seed) {
    ContextScene c;
    c.id = "ctx";
    c.pixels = test::random_texture(rows, cols, seed);
    c.novel_free = true;
    return c;
}

ReferenceInstance make_ref(const RgbImage& px, const Mask& mask) {
    return ReferenceInstance(px, mask, ClassLabel{"airplane", Split::Novel}, "src",
                             BBox::make(0, 0, double(px.cols()), double(px.rows())));
}

// Independent 5-point residual in max-norm over the masked pixels.
double plug_back_residual(const Plane<double>& f, const Plane<double>& g, const Mask& mask) {
    double worst = 0.0;
    for (Index y = 1; y + 1 < f.rows(); ++y) {
        for (Index x = 1; x + 1 < f.cols(); ++x) {
            if (!mask(y, x)) continue;
            const double lf = 4 * f(y, x) - f(y - 1, x) - f(y + 1, x) - f(y, x - 1) - f(y, x + 1);
            const double lg = 4 * g(y, x) - g(y - 1, x) - g(y + 1, x) - g(y, x - 1) - g(y, x + 1);
            worst = std::max(worst, std::abs(lf - lg));
        }
    }
    return worst;
}

Plane<double> smooth_field(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    const double a = rng.uniform(0.05, 0.2), b = rng.uniform(0.05, 0.2), c = rng.uniform(0, 6);
    Plane<double> p(rows, cols);
    for (Index y = 0; y < rows; ++y)
        for (Index x = 0; x < cols; ++x) p(y, x) = 0.5 + 0.4 * std::sin(a * double(x) + c) * std::cos(b * double(y));
    return p;
}

Mask disk(Index rows, Index cols, double cy, double cx, double radius) {
    Mask m = Mask::Zero(rows, cols);
    for (Index y = 0; y < rows; ++y)
        for (Index x = 0; x < cols; ++x)
            m(y, x) = (double(y) - cy) * (double(y) - cy) + (double(x) - cx) * (double(x) - cx) <= radius * radius;
    return m;
}

ConditioningBundle small_bundle(std::optional<CoarseFeature> coarse = std::nullopt) {
    const ContextScene ctx = make_context(40, 48, 1);
    const ReferenceInstance ref = make_ref(test::random_texture(12, 16, 2), Mask::Ones(12, 16));
    const PlacementSpec placement(BBox::make(10, 8, 26, 20), 48, 40);
    return make_bundle(ctx, ref, placement, 5, std::move(coarse));
}

}  // namespace

TEST_CASE("compose_naive: full mask pastes the resized reference") {
    const ContextScene ctx = make_context(30, 40, 3);
    const ReferenceInstance ref = make_ref(test::random_texture(10, 10, 4), Mask::Ones(10, 10));
    const PlacementSpec placement(BBox::make(5, 5, 25, 25), 40, 30);
    const CompositeResult r = compose_naive(ctx, ref, placement);
    const ScaledReference s = scale_to_placement(ref, placement);
    CHECK(r.new_box == placement.target());
    CHECK(r.backend == Backend::Naive);
    for (int c = 0; c < 3; ++c) {
        CHECK((r.pixels[c].block(5, 5, 20, 20) == s.pixels[c]).all());
        Plane<std::uint8_t> outside = r.pixels[c];
        outside.block(5, 5, 20, 20) = ctx.pixels[c].block(5, 5, 20, 20);
        CHECK((outside == ctx.pixels[c]).all());
    }
}

TEST_CASE("compose_naive: empty scaled mask leaves the context untouched") {
    const ContextScene ctx = make_context(30, 40, 3);
    // A one-pixel mask that nearest sampling drops when shrinking 20 -> 4.
    Mask m = Mask::Zero(20, 20);
    m(0, 1) = 1;
    const ReferenceInstance ref = make_ref(test::random_texture(20, 20, 4), m);
    const PlacementSpec placement(BBox::make(5, 5, 9, 9), 40, 30);
    REQUIRE((scale_to_placement(ref, placement).mask == 0).all());
    CHECK(compose_naive(ctx, ref, placement).pixels == ctx.pixels);
}

TEST_CASE("compose_naive: half mask matches a per-pixel select loop") {
    const ContextScene ctx = make_context(30, 40, 5);
    Mask m = Mask::Zero(14, 18);
    m.leftCols(9) = 1;
    const ReferenceInstance ref = make_ref(test::random_texture(14, 18, 6), m);
    const PlacementSpec placement(BBox::make(3, 4, 31, 25), 40, 30);
    const CompositeResult r = compose_naive(ctx, ref, placement);
    const ScaledReference s = scale_to_placement(ref, placement);
    const PixelRect rect = placement.rect();
    for (int c = 0; c < 3; ++c) {
        for (Index y = 0; y < 30; ++y) {
            for (Index x = 0; x < 40; ++x) {
                const bool in = x >= rect.x0 && x < rect.x1 && y >= rect.y0 && y < rect.y1;
                const std::uint8_t expect =
                    in && s.mask(y - rect.y0, x - rect.x0) ? s.pixels[c](y - rect.y0, x - rect.x0) : ctx.pixels[c](y, x);
                CHECK(r.pixels[c](y, x) == expect);
            }
        }
    }
}

TEST_CASE("compose_naive rejects an out-of-bounds placement") {
    const ContextScene ctx = make_context(30, 40, 3);
    const ReferenceInstance ref = make_ref(test::random_texture(10, 10, 4), Mask::Ones(10, 10));
    // Valid for a larger context, not for this one.
    const PlacementSpec placement(BBox::make(30, 20, 50, 40), 60, 60);
    CHECK_THROWS_AS(compose_naive(ctx, ref, placement), DataError);
}

TEST_CASE("solve_poisson: single unknown with boundary 10 and flat guidance") {
    const Plane<double> guidance = Plane<double>::Constant(3, 3, 0.7);
    const Plane<double> boundary = Plane<double>::Constant(3, 3, 10.0);
    Mask m = Mask::Zero(3, 3);
    m(1, 1) = 1;
    const PoissonSolution s = solve_poisson(guidance, boundary, m);
    CHECK(s.values(1, 1) == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(s.stats.unknowns == 1);
    CHECK(s.stats.converged);
}

TEST_CASE("solve_poisson: consistent system returns the context") {
    const Plane<double> ctx = smooth_field(32, 32, 7);
    const Mask m = disk(32, 32, 16, 16, 10);
    const PoissonSolution s = solve_poisson(ctx, ctx, m);
    CHECK((s.values - ctx).abs().maxCoeff() <= 1e-3);
}

TEST_CASE("solve_poisson: 64x64 disk residual via independent plug-back") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Plane<double> ctx = smooth_field(64, 64, 100 + seed);
        const Plane<double> src = smooth_field(64, 64, 200 + seed);
        const Mask m = disk(64, 64, 31.5, 31.5, 12);
        const PoissonSolution s = solve_poisson(src, ctx, m);
        CHECK(s.stats.converged);
        CHECK(plug_back_residual(s.values, src, m) <= 1e-3);
        CHECK(plug_back_residual(s.values, src, m) == doctest::Approx(s.stats.residual).epsilon(1e-6));
        for (Index i = 0; i < m.size(); ++i)
            if (!m.data()[i]) CHECK(s.values.data()[i] == ctx.data()[i]);
    }
}

TEST_CASE("solve_poisson: maximum principle for a harmonic guidance") {
    Plane<double> guidance(40, 40);
    for (Index y = 0; y < 40; ++y)
        for (Index x = 0; x < 40; ++x) guidance(y, x) = 0.01 * double(x) + 0.02 * double(y);  // linear: zero Laplacian
    const Plane<double> boundary = smooth_field(40, 40, 9);
    const Mask m = disk(40, 40, 20, 20, 14);
    const PoissonSolution s = solve_poisson(guidance, boundary, m);
    // Zero source Laplacian: f - g is harmonic, so it is bounded by its boundary values.
    const Plane<double> d = s.values - guidance;
    double lo = 1e9, hi = -1e9, dlo = 1e9, dhi = -1e9;
    for (Index y = 1; y < 39; ++y) {
        for (Index x = 1; x < 39; ++x) {
            if (m(y, x)) {
                dlo = std::min(dlo, d(y, x));
                dhi = std::max(dhi, d(y, x));
                continue;
            }
            const bool touches = m(y - 1, x) || m(y + 1, x) || m(y, x - 1) || m(y, x + 1);
            if (!touches) continue;
            lo = std::min(lo, d(y, x));
            hi = std::max(hi, d(y, x));
        }
    }
    CHECK(dlo >= lo - 1e-3);
    CHECK(dhi <= hi + 1e-3);
}

TEST_CASE("solve_poisson rejects border-touching and empty masks") {
    const Plane<double> z = Plane<double>::Zero(8, 8);
    Mask m = Mask::Zero(8, 8);
    CHECK_THROWS_AS(solve_poisson(z, z, m), DataError);
    m(0, 3) = 1;
    CHECK_THROWS_AS(solve_poisson(z, z, m), DataError);
}

TEST_CASE("solve_poisson flags non-convergence but still returns") {
    const Plane<double> ctx = smooth_field(64, 64, 1);
    const Plane<double> src = smooth_field(64, 64, 2);
    const PoissonSolution s = solve_poisson(src, ctx, disk(64, 64, 32, 32, 20), SolverOptions{1e-12, 2});
    CHECK_FALSE(s.stats.converged);
    CHECK(s.stats.iterations == 2);
    CHECK(s.stats.residual > 1e-12);
}

TEST_CASE("compose_poisson: outside pixels equal the context, deterministic, stats reported") {
    const ContextScene ctx = make_context(64, 64, 11);
    const ReferenceInstance ref = make_ref(test::random_texture(20, 24, 12), Mask::Ones(20, 24));
    const PlacementSpec placement(BBox::make(18, 20, 42, 40), 64, 64);
    const CompositeResult a = compose_poisson(ctx, ref, placement);
    const CompositeResult b = compose_poisson(ctx, ref, placement);
    CHECK(a.pixels == b.pixels);
    REQUIRE(a.solver_stats);
    CHECK(a.solver_stats->converged);
    CHECK(a.solver_stats->residual <= 1e-3);
    CHECK(a.new_box == placement.target());
    const Mask region = region_mask(placement, 64, 64);
    for (int c = 0; c < 3; ++c)
        for (Index i = 0; i < region.size(); ++i)
            if (!region.data()[i]) CHECK(a.pixels[c].data()[i] == ctx.pixels[c].data()[i]);
}

TEST_CASE("compose_poisson: identical patch reproduces the context") {
    ContextScene ctx = make_context(48, 48, 13);
    const PlacementSpec placement(BBox::make(10, 12, 30, 36), 48, 48);
    RgbImage patch(24, 20);
    for (int c = 0; c < 3; ++c) patch[c] = ctx.pixels[c].block(12, 10, 24, 20);
    const CompositeResult r = compose_poisson(ctx, make_ref(patch, Mask::Ones(24, 20)), placement);
    for (int c = 0; c < 3; ++c)
        CHECK((r.pixels[c].cast<int>() - ctx.pixels[c].cast<int>()).abs().maxCoeff() <= 1);
}

TEST_CASE("compose_poisson rejects a placement touching the image border") {
    const ContextScene ctx = make_context(30, 30, 3);
    const ReferenceInstance ref = make_ref(test::random_texture(10, 10, 4), Mask::Ones(10, 10));
    CHECK_THROWS_AS(compose_poisson(ctx, ref, PlacementSpec(BBox::make(0, 5, 10, 15), 30, 30)), DataError);
}

TEST_CASE("ConditioningBundle invariants") {
    ConditioningBundle b = small_bundle();
    CHECK_NOTHROW(b.validate());
    CHECK(b.region_mask.cast<int>().sum() == 16 * 12);
    CHECK(b.reference_pixels.rows() == 224);
    b.coarse_feature = CoarseFeature::Zero(256, 1536);
    CHECK_THROWS_AS(b.validate(), DataError);
    b.coarse_feature = CoarseFeature::Zero(257, 1535);
    CHECK_THROWS_AS(b.validate(), DataError);
    b.coarse_feature = CoarseFeature::Zero(257, 1536);
    CHECK_NOTHROW(b.validate());
    b.region_mask(0, 0) = 1;
    CHECK_THROWS_AS(b.validate(), DataError);
}

TEST_CASE("wire: request round trip and 400 on a bad coarse shape") {
    const ConditioningBundle b = small_bundle(CoarseFeature::Constant(257, 1536, 0.25f));
    nlohmann::json doc = wire::encode_request(b, 20, 9);
    const wire::IntegrateRequest req = wire::decode_request(doc);
    CHECK(req.context == b.context_pixels);
    CHECK((req.mask == b.region_mask).all());
    CHECK(req.steps == 20);
    CHECK(req.seed == 9);
    REQUIRE(req.coarse_feature);
    CHECK(req.coarse_feature->rows() == 257);
    CHECK((*req.coarse_feature)(256, 1535) == 0.25f);

    doc["coarse_feature"].back().erase(doc["coarse_feature"].back().size() - 1);
    try {
        wire::decode_request(doc);
        FAIL("expected a RequestError");
    } catch (const wire::RequestError& e) {
        CHECK(e.status == 400);
    }
    doc = wire::encode_request(b, 20, 9);
    doc["context"] = "!!!";
    try {
        wire::decode_request(doc);
        FAIL("expected a RequestError");
    } catch (const wire::RequestError& e) {
        CHECK(e.status == 422);
    }
    CHECK(wire::base64_decode(wire::base64_encode({1, 2, 3, 250})) == std::vector<std::uint8_t>{1, 2, 3, 250});
}

TEST_CASE("diffusion client: mock service returns context-sized rasters") {
    MockIntegrationServer mock;
    IntegrationClient client(ClientOptions{mock.endpoint()});
    const ConditioningBundle b = small_bundle(CoarseFeature::Zero(257, 1536));
    const PlacementSpec placement(BBox::make(10, 8, 26, 20), 48, 40);
    const CompositeResult r = compose_diffusion(client, b, placement, 3);
    CHECK(r.pixels.rows() == 40);
    CHECK(r.pixels.cols() == 48);
    CHECK(r.new_box == placement.target());
    CHECK(r.backend == Backend::Diffusion);
    CHECK(compose_diffusion(client, b, placement, 3).pixels == r.pixels);
}

TEST_CASE("diffusion client: wrong coarse shape is rejected before sending") {
    test::StubServer stub(test::StubServer::Mode::Normal);
    IntegrationClient client(ClientOptions{stub.endpoint()});
    ConditioningBundle b = small_bundle();
    b.coarse_feature = CoarseFeature::Zero(256, 1536);
    CHECK_THROWS_AS(client.integrate(b, 0), DataError);
    CHECK(stub.requests() == 0);
    CHECK(client.attempts() == 0);
}

TEST_CASE("diffusion client: timeout retries then fails") {
    test::StubServer stub(test::StubServer::Mode::Slow, std::chrono::milliseconds(600));
    ClientOptions options{stub.endpoint()};
    options.timeout = std::chrono::milliseconds(150);
    IntegrationClient client(options);
    CHECK_THROWS_AS(client.integrate(small_bundle(), 0), ServiceError);
    CHECK(client.attempts() == 3);
}

TEST_CASE("diffusion client: wrong response size is a protocol error naming both sizes") {
    test::StubServer stub(test::StubServer::Mode::WrongSize);
    IntegrationClient client(ClientOptions{stub.endpoint()});
    try {
        client.integrate(small_bundle(), 0);
        FAIL("expected a ProtocolError");
    } catch (const ProtocolError& e) {
        const std::string what = e.what();
        CHECK(what.find("48x41") != std::string::npos);
        CHECK(what.find("48x40") != std::string::npos);
        CHECK(e.kind() == ErrorKind::Service);
    }
    CHECK(client.attempts() == 1);
}

TEST_CASE("diffusion client: server error is not retried") {
    test::StubServer stub(test::StubServer::Mode::Error500);
    IntegrationClient client(ClientOptions{stub.endpoint()});
    CHECK_THROWS_AS(client.integrate(small_bundle(), 0), ServiceError);
    CHECK(stub.requests() == 1);
}

TEST_CASE("diffusion client: in-flight requests are capped") {
    test::StubServer stub(test::StubServer::Mode::Normal, std::chrono::milliseconds(80));
    ClientOptions options{stub.endpoint()};
    options.max_in_flight = 2;
    IntegrationClient client(options);
    const ConditioningBundle b = small_bundle();
    std::vector<std::thread> threads;
    for (int i = 0; i < 6; ++i) threads.emplace_back([&] { client.integrate(b, 0); });
    for (auto& t : threads) t.join();
    CHECK(stub.requests() == 6);
    CHECK(stub.peak_in_flight() <= 2);
}

TEST_CASE("backend names") {
    for (Backend b : {Backend::Naive, Backend::Poisson, Backend::Diffusion}) CHECK(backend_from_string(to_string(b)) == b);
    CHECK_THROWS_AS(backend_from_string("magic"), ConfigError);
}
