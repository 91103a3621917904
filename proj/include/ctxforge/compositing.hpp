#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include <Eigen/Core>

#include "ctxforge/filtering.hpp"
#include "ctxforge/poisson.hpp"
#include "ctxforge/types.hpp"

namespace ctxforge {

enum class Backend { Naive, Poisson, Diffusion };

std::string to_string(Backend backend);
Backend backend_from_string(const std::string& name);

inline constexpr Index kCoarseTokens = 257;
inline constexpr Index kCoarseChannels = 1536;

using CoarseFeature = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Everything the integration service conditions on.
struct ConditioningBundle {
    RgbImage context_pixels;
    Mask region_mask;
    StitchCollage stitch;
    std::optional<CoarseFeature> coarse_feature;
    RgbImage reference_pixels;

    /// Throws DataError on a mask that is not exactly the region, or a
    /// coarse feature that is not 257x1536.
    void validate() const;
};

/// Region mask for a placement: 1 on the placement's pixels, 0 elsewhere.
Mask region_mask(const PlacementSpec& placement, Index rows, Index cols);

/// Assembles a bundle: builds the stitch collage and the 224x224 reference input.
ConditioningBundle make_bundle(const ContextScene& context, const ReferenceInstance& aligned_ref,
                               const PlacementSpec& placement, std::uint64_t affine_seed,
                               std::optional<CoarseFeature> coarse_feature = std::nullopt);

struct CompositeResult {
    RgbImage pixels;
    BBox new_box;
    Backend backend = Backend::Naive;
    std::optional<SolverStats> solver_stats;
};

/// Reference scaled to the placement rectangle: bilinear pixels, nearest mask.
struct ScaledReference {
    RgbImage pixels;
    Mask mask;
};
ScaledReference scale_to_placement(const ReferenceInstance& ref, const PlacementSpec& placement);

/// Copy-paste: reference pixels overwrite the context where the scaled mask is set.
CompositeResult compose_naive(const ContextScene& context, const ReferenceInstance& ref,
                              const PlacementSpec& placement);

/// Seamless cloning with pure source-gradient guidance from the scaled reference. Unknowns are
/// the interior of the scaled mask (all four neighbours set); the mask rim keeps the context as
/// the Dirichlet boundary. Solved per channel on [0, 1]-scaled intensities, then clamped and rounded.
/// Throws DataError when the mask touches the context border or has no interior.
CompositeResult compose_poisson(const ContextScene& context, const ReferenceInstance& ref,
                                const PlacementSpec& placement, const SolverOptions& options = {});

struct ClientOptions {
    /// http://host:port
    std::string endpoint;
    std::chrono::milliseconds timeout{120'000};
    int retries = 2;
    int max_in_flight = 4;
    int steps = 50;
};

/// Client for the integration service (POST /v1/integrate). Safe for concurrent use.
class IntegrationClient {
public:
    explicit IntegrationClient(ClientOptions options);
    ~IntegrationClient();
    IntegrationClient(const IntegrationClient&) = delete;
    IntegrationClient& operator=(const IntegrationClient&) = delete;

    /// Validates, sends, and checks the response size against the context.
    RgbImage integrate(const ConditioningBundle& bundle, std::uint64_t seed) const;

    const ClientOptions& options() const { return options_; }

    /// Number of POST attempts made so far, including retries.
    int attempts() const;

private:
    struct State;
    ClientOptions options_;
    std::unique_ptr<State> state_;
};

CompositeResult compose_diffusion(const IntegrationClient& client, const ConditioningBundle& bundle,
                                  const PlacementSpec& placement, std::uint64_t seed = 0);

}  // namespace ctxforge
