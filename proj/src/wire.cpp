#include "ctxforge/wire.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <openssl/evp.h>

#include "ctxforge/error.hpp"

namespace ctxforge::wire {

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out(4 * ((bytes.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), int(bytes.size()));
    out.resize(std::size_t(n));
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw DataError("base64 payload length is not a multiple of 4");
    std::vector<std::uint8_t> out(3 * text.size() / 4);
    const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), int(text.size()));
    if (n < 0) throw DataError("invalid base64 payload");
    std::size_t size = std::size_t(n);
    if (!text.empty() && text.back() == '=') --size;
    if (text.size() > 1 && text[text.size() - 2] == '=') --size;
    out.resize(size);
    return out;
}

nlohmann::json encode_request(const ConditioningBundle& bundle, int steps, std::uint64_t seed) {
    nlohmann::json doc;
    doc["context"] = base64_encode(encode_png(bundle.context_pixels));
    doc["mask"] = base64_encode(encode_png(Plane<std::uint8_t>(bundle.region_mask.min(std::uint8_t(1)) * 255)));
    doc["stitch"] = base64_encode(encode_png(bundle.stitch.to_u8()));
    doc["reference"] = base64_encode(encode_png(bundle.reference_pixels));
    if (bundle.coarse_feature) {
        const CoarseFeature& f = *bundle.coarse_feature;
        nlohmann::json rows = nlohmann::json::array();
        for (Index i = 0; i < f.rows(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (Index j = 0; j < f.cols(); ++j) row.push_back(f(i, j));
            rows.push_back(std::move(row));
        }
        doc["coarse_feature"] = std::move(rows);
    }
    doc["steps"] = steps;
    doc["seed"] = seed;
    return doc;
}

namespace {

[[noreturn]] void reject(int status, const std::string& message) { throw RequestError{status, message}; }

const std::string& string_field(const nlohmann::json& body, const char* name) {
    if (!body.contains(name) || !body[name].is_string()) reject(400, std::string(name) + ": missing or not a string");
    return body[name].get_ref<const std::string&>();
}

template <typename Decoded, typename Fn>
Decoded decode_image(const nlohmann::json& body, const char* name, Fn&& decode) {
    const std::string& text = string_field(body, name);
    try {
        return decode(base64_decode(text));
    } catch (const DataError& e) {
        reject(422, std::string(name) + ": " + e.what());
    }
}

std::string shape(Index rows, Index cols) {
    std::ostringstream s;
    s << cols << "x" << rows;
    return s.str();
}

}  // namespace

IntegrateRequest decode_request(const nlohmann::json& body) {
    if (!body.is_object()) reject(400, "request body must be a JSON object");
    IntegrateRequest req;

    if (body.contains("coarse_feature") && !body["coarse_feature"].is_null()) {
        const auto& rows = body["coarse_feature"];
        if (!rows.is_array()) reject(400, "coarse_feature: expected an array of rows");
        Index cols = rows.empty() ? 0 : Index(rows[0].is_array() ? rows[0].size() : 0);
        bool ragged = false;
        for (const auto& row : rows) ragged = ragged || !row.is_array() || Index(row.size()) != cols;
        if (ragged || Index(rows.size()) != kCoarseTokens || cols != kCoarseChannels) {
            std::ostringstream msg;
            msg << "coarse_feature: expected " << kCoarseTokens << "x" << kCoarseChannels << ", got " << rows.size()
                << "x" << (ragged ? std::string("ragged") : std::to_string(cols));
            reject(400, msg.str());
        }
        CoarseFeature f(kCoarseTokens, kCoarseChannels);
        for (Index i = 0; i < kCoarseTokens; ++i) {
            for (Index j = 0; j < kCoarseChannels; ++j) {
                const auto& v = rows[std::size_t(i)][std::size_t(j)];
                if (!v.is_number() || !std::isfinite(v.get<double>()))
                    reject(400, "coarse_feature: entries must be finite numbers");
                f(i, j) = v.get<float>();
            }
        }
        req.coarse_feature = std::move(f);
    }
    if (!body.contains("steps") || !body["steps"].is_number_integer() || body["steps"].get<long long>() < 1)
        reject(400, "steps: must be an integer >= 1");
    req.steps = body["steps"].get<int>();
    if (body.contains("seed")) {
        if (!body["seed"].is_number_integer()) reject(400, "seed: must be an integer");
        req.seed = body["seed"].get<std::uint64_t>();
    }

    req.context = decode_image<RgbImage>(body, "context", [](const auto& b) { return decode_rgb(b); });
    req.mask = decode_image<Mask>(body, "mask", [](const auto& b) {
        return Mask((decode_gray(b) > 0).template cast<std::uint8_t>());
    });
    req.stitch = decode_image<Plane<std::uint8_t>>(body, "stitch", [](const auto& b) { return decode_gray(b); });
    req.reference = decode_image<RgbImage>(body, "reference", [](const auto& b) { return decode_rgb(b); });

    const std::string ctx = shape(req.context.rows(), req.context.cols());
    if (req.mask.rows() != req.context.rows() || req.mask.cols() != req.context.cols())
        reject(400, "mask: expected " + ctx + ", got " + shape(req.mask.rows(), req.mask.cols()));
    if (req.stitch.rows() != req.context.rows() || req.stitch.cols() != req.context.cols())
        reject(400, "stitch: expected " + ctx + ", got " + shape(req.stitch.rows(), req.stitch.cols()));
    if (!(req.mask != 0).any()) reject(400, "mask: no pixel set");
    return req;
}

nlohmann::json encode_response(const RgbImage& image, const std::string& mode, double timing_ms) {
    return {{"image", base64_encode(encode_png(image))}, {"mode", mode}, {"timing_ms", timing_ms}};
}

RgbImage decode_response(const nlohmann::json& body) {
    if (!body.is_object() || !body.contains("image") || !body["image"].is_string())
        throw ProtocolError("integration response lacks an 'image' string");
    try {
        return decode_rgb(base64_decode(body["image"].get<std::string>()));
    } catch (const DataError& e) {
        throw ProtocolError(std::string("integration response image: ") + e.what());
    }
}

RgbImage mock_integrate(const IntegrateRequest& request) {
    const Index rows = request.context.rows();
    const Index cols = request.context.cols();
    const PixelRect r = mask_bounds(request.mask);
    RgbImage ref = resize_rgb(request.reference, r.height(), r.width());

    // Chessboard distance to the nearest unset pixel (the frame outside the image counts as unset).
    constexpr int kFeather = 4;
    Plane<int> dist(rows, cols);
    for (Index y = 0; y < rows; ++y) {
        for (Index x = 0; x < cols; ++x) {
            if (!request.mask(y, x)) {
                dist(y, x) = 0;
                continue;
            }
            int best = int(std::min({y + 1, x + 1, rows - y, cols - x}));
            if (y > 0) best = std::min(best, dist(y - 1, x) + 1);
            if (x > 0) best = std::min(best, dist(y, x - 1) + 1);
            if (y > 0 && x > 0) best = std::min(best, dist(y - 1, x - 1) + 1);
            if (y > 0 && x + 1 < cols) best = std::min(best, dist(y - 1, x + 1) + 1);
            dist(y, x) = best;
        }
    }
    for (Index y = rows - 1; y >= 0; --y) {
        for (Index x = cols - 1; x >= 0; --x) {
            if (dist(y, x) == 0) continue;
            int best = dist(y, x);
            if (y + 1 < rows) best = std::min(best, dist(y + 1, x) + 1);
            if (x + 1 < cols) best = std::min(best, dist(y, x + 1) + 1);
            if (y + 1 < rows && x + 1 < cols) best = std::min(best, dist(y + 1, x + 1) + 1);
            if (y + 1 < rows && x > 0) best = std::min(best, dist(y + 1, x - 1) + 1);
            dist(y, x) = best;
        }
    }

    RgbImage out = request.context;
    for (Index y = r.y0; y < r.y1; ++y) {
        for (Index x = r.x0; x < r.x1; ++x) {
            if (!request.mask(y, x)) continue;
            const double alpha = double(std::min(dist(y, x), kFeather)) / kFeather;
            for (int c = 0; c < 3; ++c) {
                const double v = alpha * ref[c](y - r.y0, x - r.x0) + (1.0 - alpha) * request.context[c](y, x);
                out[c](y, x) = std::uint8_t(std::clamp(std::round(v), 0.0, 255.0));
            }
        }
    }
    return out;
}

}  // namespace ctxforge::wire
