#pragma once

// Grayscale and binary document images plus PNM/PNG codecs.
//
// Intensity convention: 0 = black ink, 1 = white background.
// Binary convention: 1 = ink (foreground), 0 = background.

#include "docbin/tensor.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace docbin {

class ImageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<float> pixels;

    GrayImage() = default;
    GrayImage(int w, int h, float fill = 1.0f);

    float& at(int x, int y) { return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    float at(int x, int y) const { return pixels[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    std::size_t size() const { return pixels.size(); }
    bool operator==(const GrayImage&) const = default;
};

struct BinaryImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> bits;

    BinaryImage() = default;
    BinaryImage(int w, int h, std::uint8_t fill = 0);

    std::uint8_t& at(int x, int y) { return bits[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    std::uint8_t at(int x, int y) const { return bits[std::size_t(y) * std::size_t(width) + std::size_t(x)]; }
    std::size_t size() const { return bits.size(); }
    std::size_t count() const;
    bool operator==(const BinaryImage&) const = default;
};

enum class ImageFormat { Pgm, PgmAscii, Pbm, Png };

/// Picks the format from the file extension (.pgm, .pbm, .png).
ImageFormat format_from_path(const std::string& path);

/// PGM (P2/P5), PBM (P1/P4), PPM (P3/P6, luma-reduced) or PNG. Values become v/maxval.
GrayImage load_image(const std::string& path);
GrayImage decode_pnm(const std::string& bytes);

/// Gray images: PGM stores round(v*255); PBM thresholds at 0.5.
void save_image(const GrayImage& img, const std::string& path, ImageFormat format);
void save_image(const GrayImage& img, const std::string& path);
std::string encode_pgm(const GrayImage& img);

/// Binary images: PBM bit 1 = ink; PGM/PNG ink = 0, background = 255.
void save_binary(const BinaryImage& img, const std::string& path);
std::string encode_pbm(const BinaryImage& img);

/// Ink where intensity < threshold.
BinaryImage threshold_image(const GrayImage& img, float threshold = 0.5f);
/// Ink -> 0.0, background -> 1.0.
GrayImage to_gray(const BinaryImage& img);

/// Loads a ground-truth image as binary (ink where < 0.5). `uncertain` receives
/// the number of pixels strictly between 0.1 and 0.9.
BinaryImage load_binary(const std::string& path, std::size_t* uncertain = nullptr);

/// Stack of equal-size images into [N,1,H,W] with p -> 2p - 1.
Tensor images_to_tensor(const std::vector<const GrayImage*>& images);
Tensor image_to_tensor(const GrayImage& img);
/// Item `index` of a [N,1,H,W] tensor mapped back with t -> (t + 1) / 2, clamped to [0,1].
GrayImage tensor_to_image(const Tensor& t, std::int64_t index = 0);

}  // namespace docbin
