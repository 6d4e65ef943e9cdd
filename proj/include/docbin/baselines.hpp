#pragma once

// Classical global and local thresholding. Every method marks a pixel as ink
// when its intensity is strictly below the applicable threshold.

#include "docbin/image.hpp"

#include <vector>

namespace docbin {

/// Local mean and population standard deviation over a w x w window with
/// replicated borders, via separable box sums.
struct WindowStats {
    int width = 0;
    int height = 0;
    std::vector<double> mean;
    std::vector<double> stddev;
};

WindowStats window_stats(const GrayImage& img, int window);

/// Histogram level of an intensity: round(v * 255) clamped to [0,255].
int intensity_level(float v);

struct OtsuResult {
    /// Level in [0,255]; pixels with level < threshold are ink. 0 for constant images.
    int threshold = 0;
    BinaryImage image;
};

OtsuResult otsu(const GrayImage& img);
/// Between-class variance maximizer over a 256-bin histogram, lowest on ties.
int otsu_threshold(const std::vector<std::int64_t>& histogram);

/// Niblack and Sauvola compare against T - kLocalMargin so that summation
/// round-off cannot turn a flat window into ink.
inline constexpr double kLocalMargin = 1e-9;

struct NiblackParams {
    int window = 15;
    double k = -0.2;
};

struct SauvolaParams {
    int window = 25;
    double k = 0.5;
    double dynamic_range = 128.0 / 255.0;
};

struct BernsenParams {
    int window = 31;
    double contrast_min = 15.0 / 255.0;
};

BinaryImage niblack(const GrayImage& img, const NiblackParams& p = {});
BinaryImage sauvola(const GrayImage& img, const SauvolaParams& p = {});
BinaryImage bernsen(const GrayImage& img, const BernsenParams& p = {});

}  // namespace docbin
