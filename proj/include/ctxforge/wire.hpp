#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ctxforge/compositing.hpp"

// JSON schema of the integration service, shared by the client and the in-process mock.
//
// Request  {context, mask, stitch, reference: base64 PNG; coarse_feature?: [[257 x 1536]];
//           steps: int >= 1; seed: int}
// Response {image: base64 PNG RGB; mode: "model" | "mock"; timing_ms: number}

namespace ctxforge::wire {

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);

nlohmann::json encode_request(const ConditioningBundle& bundle, int steps, std::uint64_t seed);

struct IntegrateRequest {
    RgbImage context;
    Mask mask;
    Plane<std::uint8_t> stitch;
    RgbImage reference;
    std::optional<CoarseFeature> coarse_feature;
    int steps = 1;
    std::uint64_t seed = 0;
};

/// Thrown by decode_request; carries the HTTP status the server should answer with.
struct RequestError {
    int status;
    std::string message;
};

/// Validates shapes (400) and image payloads (422).
IntegrateRequest decode_request(const nlohmann::json& body);

nlohmann::json encode_response(const RgbImage& image, const std::string& mode, double timing_ms);
RgbImage decode_response(const nlohmann::json& body);

/// Deterministic stand-in for generation: the reference is scaled into the mask's bounding
/// rectangle and blended with a 4-pixel linear alpha feather inside the mask boundary.
RgbImage mock_integrate(const IntegrateRequest& request);

}  // namespace ctxforge::wire
