#include "ctxforge/compositing.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include <httplib.h>

#include "ctxforge/error.hpp"
#include "ctxforge/wire.hpp"

namespace ctxforge {

std::string to_string(Backend backend) {
    switch (backend) {
        case Backend::Naive: return "naive";
        case Backend::Poisson: return "poisson";
        case Backend::Diffusion: return "diffusion";
    }
    return "naive";
}

Backend backend_from_string(const std::string& name) {
    if (name == "naive") return Backend::Naive;
    if (name == "poisson") return Backend::Poisson;
    if (name == "diffusion") return Backend::Diffusion;
    throw ConfigError("unknown backend '" + name + "' (expected naive, poisson or diffusion)");
}

Mask region_mask(const PlacementSpec& placement, Index rows, Index cols) {
    const PixelRect r = placement.rect();
    Mask mask = Mask::Zero(rows, cols);
    mask.block(r.y0, r.x0, r.height(), r.width()).setOnes();
    return mask;
}

void ConditioningBundle::validate() const {
    const Index rows = context_pixels.rows();
    const Index cols = context_pixels.cols();
    if (region_mask.rows() != rows || region_mask.cols() != cols)
        throw DataError("region mask size differs from the context");
    if (stitch.canvas.rows() != rows || stitch.canvas.cols() != cols)
        throw DataError("stitch collage size differs from the context");
    const PixelRect& r = stitch.region;
    for (Index y = 0; y < rows; ++y) {
        for (Index x = 0; x < cols; ++x) {
            const bool inside = x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1;
            if ((region_mask(y, x) != 0) != inside) throw DataError("region mask does not match the placement");
        }
    }
    if (coarse_feature &&
        (coarse_feature->rows() != kCoarseTokens || coarse_feature->cols() != kCoarseChannels)) {
        std::ostringstream msg;
        msg << "coarse_feature must be " << kCoarseTokens << "x" << kCoarseChannels << ", got "
            << coarse_feature->rows() << "x" << coarse_feature->cols();
        throw DataError(msg.str());
    }
    if (coarse_feature && !coarse_feature->allFinite()) throw DataError("coarse_feature has non-finite values");
    if (reference_pixels.rows() < 1 || reference_pixels.cols() < 1) throw DataError("reference image is empty");
}

ConditioningBundle make_bundle(const ContextScene& context, const ReferenceInstance& aligned_ref,
                               const PlacementSpec& placement, std::uint64_t affine_seed,
                               std::optional<CoarseFeature> coarse_feature) {
    const Index rows = context.pixels.rows();
    const Index cols = context.pixels.cols();
    StitchResult stitch = build_stitch(aligned_ref, placement, rows, cols, affine_seed);
    return {context.pixels, region_mask(placement, rows, cols), std::move(stitch.collage), std::move(coarse_feature),
            pad_then_resize(aligned_ref).pixels};
}

ScaledReference scale_to_placement(const ReferenceInstance& ref, const PlacementSpec& placement) {
    const PixelRect r = placement.rect();
    return {resize_rgb(ref.pixels(), r.height(), r.width()), resize_nearest(ref.mask(), r.height(), r.width())};
}

namespace {

void check_inside(const ContextScene& context, const PlacementSpec& placement) {
    const PixelRect r = placement.rect();
    if (r.x0 < 0 || r.y0 < 0 || r.x1 > context.pixels.cols() || r.y1 > context.pixels.rows())
        throw DataError("placement outside context '" + context.id + "'");
}

}  // namespace

CompositeResult compose_naive(const ContextScene& context, const ReferenceInstance& ref,
                              const PlacementSpec& placement) {
    check_inside(context, placement);
    const PixelRect r = placement.rect();
    ScaledReference scaled = scale_to_placement(ref, placement);
    CompositeResult result{context.pixels, placement.target(), Backend::Naive, std::nullopt};
    for (int c = 0; c < 3; ++c) {
        auto region = result.pixels[c].block(r.y0, r.x0, r.height(), r.width());
        region = (scaled.mask != 0).select(scaled.pixels[c], region);
    }
    return result;
}

CompositeResult compose_poisson(const ContextScene& context, const ReferenceInstance& ref,
                                const PlacementSpec& placement, const SolverOptions& options) {
    check_inside(context, placement);
    const Index rows = context.pixels.rows();
    const Index cols = context.pixels.cols();
    const PixelRect r = placement.rect();
    ScaledReference scaled = scale_to_placement(ref, placement);

    const Index h = r.height();
    const Index w = r.width();
    const Mask set = (scaled.mask != 0).cast<std::uint8_t>();
    if ((r.x0 == 0 && set.col(0).any()) || (r.y0 == 0 && set.row(0).any()) ||
        (r.x1 == cols && set.col(w - 1).any()) || (r.y1 == rows && set.row(h - 1).any()))
        throw DataError("Poisson mask touches the context border");

    // Unknowns are the mask interior, so every equation only reads guidance inside the reference.
    Mask mask = Mask::Zero(h, w);
    if (h > 2 && w > 2) {
        mask.block(1, 1, h - 2, w - 2) = set.block(1, 1, h - 2, w - 2) * set.block(0, 1, h - 2, w - 2) *
                                         set.block(2, 1, h - 2, w - 2) * set.block(1, 0, h - 2, w - 2) *
                                         set.block(1, 2, h - 2, w - 2);
    }

    CompositeResult result{context.pixels, placement.target(), Backend::Poisson, SolverStats{}};
    SolverStats& total = *result.solver_stats;
    total.converged = true;
    for (int c = 0; c < 3; ++c) {
        const Plane<double> guidance = scaled.pixels[c].cast<double>() / 255.0;
        const Plane<double> boundary = context.pixels[c].block(r.y0, r.x0, h, w).cast<double>() / 255.0;
        PoissonSolution solution = solve_poisson(guidance, boundary, mask, options);
        auto region = result.pixels[c].block(r.y0, r.x0, h, w);
        region = (mask != 0).select(to_u8(solution.values * 255.0), region);
        total.iterations = std::max(total.iterations, solution.stats.iterations);
        total.residual = std::max(total.residual, solution.stats.residual);
        total.converged = total.converged && solution.stats.converged;
        total.unknowns = solution.stats.unknowns;
    }
    return result;
}

struct IntegrationClient::State {
    explicit State(int slots) : in_flight(std::max(slots, 1)) {}
    std::counting_semaphore<1024> in_flight;
    std::atomic<int> attempts{0};
};

IntegrationClient::IntegrationClient(ClientOptions options)
    : options_(std::move(options)), state_(std::make_unique<State>(options_.max_in_flight)) {
    if (options_.endpoint.empty()) throw ConfigError("integration endpoint is empty");
    if (options_.retries < 0) throw ConfigError("retries must be >= 0");
    if (options_.steps < 1) throw ConfigError("steps must be >= 1");
}

IntegrationClient::~IntegrationClient() = default;

int IntegrationClient::attempts() const { return state_->attempts.load(); }

RgbImage IntegrationClient::integrate(const ConditioningBundle& bundle, std::uint64_t seed) const {
    bundle.validate();
    const std::string body = wire::encode_request(bundle, options_.steps, seed).dump();

    state_->in_flight.acquire();
    struct Release {
        State* s;
        ~Release() { s->in_flight.release(); }
    } release{state_.get()};

    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        httplib::Client client(options_.endpoint);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        state_->attempts.fetch_add(1);
        auto response = client.Post("/v1/integrate", body, "application/json");
        if (!response) {
            last_error = httplib::to_string(response.error());
            continue;
        }
        if (response->status != 200)
            throw ServiceError("integration service answered " + std::to_string(response->status) + ": " +
                               response->body);
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(response->body);
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("integration response is not JSON: ") + e.what());
        }
        RgbImage image = wire::decode_response(doc);
        if (image.rows() != bundle.context_pixels.rows() || image.cols() != bundle.context_pixels.cols()) {
            std::ostringstream msg;
            msg << "integration response is " << image.cols() << "x" << image.rows() << ", context is "
                << bundle.context_pixels.cols() << "x" << bundle.context_pixels.rows();
            throw ProtocolError(msg.str());
        }
        return image;
    }
    throw ServiceError("integration service unreachable after " + std::to_string(options_.retries + 1) +
                       " attempts: " + last_error);
}

CompositeResult compose_diffusion(const IntegrationClient& client, const ConditioningBundle& bundle,
                                  const PlacementSpec& placement, std::uint64_t seed) {
    return {client.integrate(bundle, seed), placement.target(), Backend::Diffusion, std::nullopt};
}

}  // namespace ctxforge
