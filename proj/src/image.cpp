#include "ctxforge/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ctxforge/error.hpp"

namespace ctxforge {

namespace {

RgbImage from_mat(const cv::Mat& mat) {
    RgbImage image(mat.rows, mat.cols);
    if (mat.channels() == 1) {
        for (int y = 0; y < mat.rows; ++y) {
            const auto* row = mat.ptr<std::uint8_t>(y);
            for (int x = 0; x < mat.cols; ++x)
                for (int c = 0; c < 3; ++c) image[c](y, x) = row[x];
        }
        return image;
    }
    for (int y = 0; y < mat.rows; ++y) {
        const auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < mat.cols; ++x) {
            image[0](y, x) = row[x][2];
            image[1](y, x) = row[x][1];
            image[2](y, x) = row[x][0];
        }
    }
    return image;
}

cv::Mat to_mat(const RgbImage& image) {
    cv::Mat mat(int(image.rows()), int(image.cols()), CV_8UC3);
    for (int y = 0; y < mat.rows; ++y) {
        auto* row = mat.ptr<cv::Vec3b>(y);
        for (int x = 0; x < mat.cols; ++x) row[x] = cv::Vec3b(image[2](y, x), image[1](y, x), image[0](y, x));
    }
    return mat;
}

cv::Mat to_mat(const Plane<std::uint8_t>& plane) {
    cv::Mat mat(int(plane.rows()), int(plane.cols()), CV_8UC1);
    for (int y = 0; y < mat.rows; ++y)
        for (int x = 0; x < mat.cols; ++x) mat.at<std::uint8_t>(y, x) = plane(y, x);
    return mat;
}

void write_mat(const std::filesystem::path& path, const cv::Mat& mat) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), mat)) throw DataError("cannot write image " + path.string());
}

std::vector<std::uint8_t> encode(const cv::Mat& mat) {
    std::vector<std::uint8_t> bytes;
    if (!cv::imencode(".png", mat, bytes)) throw DataError("PNG encoding failed");
    return bytes;
}

}  // namespace

Plane<double> grayscale(const RgbImage& image) {
    return 0.299 * image[0].cast<double>() + 0.587 * image[1].cast<double>() + 0.114 * image[2].cast<double>();
}

Plane<std::uint8_t> to_u8(const Plane<double>& plane) {
    return plane.round().max(0.0).min(255.0).cast<std::uint8_t>();
}

RgbImage resize_rgb(const RgbImage& image, Index rows, Index cols) {
    if (image.rows() == rows && image.cols() == cols) return image;
    return map_channels(image, [&](const Plane<std::uint8_t>& p) { return to_u8(resize_bilinear(p, rows, cols)); });
}

RgbImage read_rgb(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (mat.empty()) throw DataError("cannot read image " + path.string());
    return from_mat(mat);
}

void write_rgb(const std::filesystem::path& path, const RgbImage& image) { write_mat(path, to_mat(image)); }

void write_gray(const std::filesystem::path& path, const Plane<std::uint8_t>& plane) {
    write_mat(path, to_mat(plane));
}

std::vector<std::uint8_t> encode_png(const RgbImage& image) { return encode(to_mat(image)); }

std::vector<std::uint8_t> encode_png(const Plane<std::uint8_t>& plane) { return encode(to_mat(plane)); }

RgbImage decode_rgb(const std::vector<std::uint8_t>& bytes) {
    cv::Mat mat = cv::imdecode(bytes, cv::IMREAD_COLOR);
    if (mat.empty()) throw DataError("undecodable image payload");
    return from_mat(mat);
}

Plane<std::uint8_t> decode_gray(const std::vector<std::uint8_t>& bytes) {
    cv::Mat mat = cv::imdecode(bytes, cv::IMREAD_GRAYSCALE);
    if (mat.empty()) throw DataError("undecodable image payload");
    Plane<std::uint8_t> plane(mat.rows, mat.cols);
    for (int y = 0; y < mat.rows; ++y)
        for (int x = 0; x < mat.cols; ++x) plane(y, x) = mat.at<std::uint8_t>(y, x);
    return plane;
}

std::array<Index, 2> image_size(const std::filesystem::path& path) {
    cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (mat.empty()) throw DataError("cannot read image " + path.string());
    return {mat.cols, mat.rows};
}

}  // namespace ctxforge
