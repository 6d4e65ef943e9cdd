#pragma once

// DIBCO evaluation measures. Foreground (1) is ink in both prediction and
// ground truth.

#include "docbin/image.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace docbin {

struct Confusion {
    std::int64_t tp = 0;
    std::int64_t fp = 0;
    std::int64_t fn = 0;
    std::int64_t tn = 0;
    std::int64_t total() const { return tp + fp + fn + tn; }
};

Confusion confusion(const BinaryImage& pred, const BinaryImage& gt);

/// Percent; 0 when TP == 0.
double f_measure(const Confusion& c);

/// Zhang-Suen thinning. Components that the two-pass rule would erase
/// entirely (2-pixel-thick blobs) keep one pixel so no component vanishes.
BinaryImage skeletonize(const BinaryImage& img);

/// Percent. Recall against the ground-truth skeleton, precision against the
/// full ground truth.
double pseudo_f_measure(const BinaryImage& pred, const BinaryImage& gt);

/// dB with peak 1 over {0,1} images; +inf when identical.
double psnr(const BinaryImage& pred, const BinaryImage& gt);

/// Non-uniform 8x8 ground-truth blocks on a grid anchored at (0,0), partial
/// edge blocks included.
std::int64_t nubn(const BinaryImage& gt, int block = 8);

/// 5x5 reciprocal-distance weights, centre 0, normalized to sum 1.
using DrdWeights = std::array<std::array<double, 5>, 5>;
const DrdWeights& drd_weights();

/// Sum of per-flip distortions divided by NUBN; 0 when pred == gt, +inf when
/// there are flips but NUBN is 0.
double drd(const BinaryImage& pred, const BinaryImage& gt);

struct MetricsReport {
    double f_measure = 0;
    double f_ps = 0;
    double psnr = 0;
    double drd = 0;
};

MetricsReport evaluate(const BinaryImage& pred, const BinaryImage& gt);

struct DatasetScore {
    MetricsReport mean;
    std::size_t images = 0;
    /// Images whose PSNR was infinite; they are left out of the PSNR mean.
    std::size_t psnr_infinite = 0;
};

/// Unweighted per-image means.
DatasetScore aggregate(const std::vector<MetricsReport>& reports);

/// "inf" for infinite values, number otherwise.
nlohmann::json metric_json(double v);
nlohmann::json to_json(const MetricsReport& r);

}  // namespace docbin
