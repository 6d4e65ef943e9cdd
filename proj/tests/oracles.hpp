#pragma once

// Straight-loop reference implementations of the metrics and thresholding
// methods. They follow the textbook definitions without sharing any code with
// the library.

#include "docbin/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

namespace docbin::oracle {

inline int ink(const BinaryImage& b, int x, int y) {
    if (x < 0 || y < 0 || x >= b.width || y >= b.height) return 0;
    return b.bits[std::size_t(y * b.width + x)] ? 1 : 0;
}

struct Counts {
    std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts count(const BinaryImage& pred, const BinaryImage& gt) {
    Counts c;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const int p = ink(pred, x, y), g = ink(gt, x, y);
            c.tp += p == 1 && g == 1;
            c.fp += p == 1 && g == 0;
            c.fn += p == 0 && g == 1;
            c.tn += p == 0 && g == 0;
        }
    return c;
}

inline double fmeasure(double precision, double recall) {
    if (precision + recall == 0) return 0;
    return 100.0 * 2.0 * precision * recall / (precision + recall);
}

inline double f_measure(const BinaryImage& pred, const BinaryImage& gt) {
    const auto c = count(pred, gt);
    if (c.tp == 0) return 0;
    return fmeasure(double(c.tp) / double(c.tp + c.fp), double(c.tp) / double(c.tp + c.fn));
}

inline BinaryImage zhang_suen(const BinaryImage& src) {
    BinaryImage img = src;
    for (auto& b : img.bits) b = b ? 1 : 0;
    for (bool changed = true; changed;) {
        changed = false;
        for (int step = 0; step < 2; ++step) {
            std::vector<std::pair<int, int>> remove;
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    if (!ink(img, x, y)) continue;
                    const int p2 = ink(img, x, y - 1), p3 = ink(img, x + 1, y - 1), p4 = ink(img, x + 1, y),
                              p5 = ink(img, x + 1, y + 1), p6 = ink(img, x, y + 1), p7 = ink(img, x - 1, y + 1),
                              p8 = ink(img, x - 1, y), p9 = ink(img, x - 1, y - 1);
                    const int ring[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
                    int a = 0;
                    for (int i = 0; i < 8; ++i) a += ring[i] == 0 && ring[i + 1] == 1;
                    const int b = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
                    if (b < 2 || b > 6 || a != 1) continue;
                    const bool cond = step == 0 ? (p2 * p4 * p6 == 0 && p4 * p6 * p8 == 0)
                                                : (p2 * p4 * p8 == 0 && p2 * p6 * p8 == 0);
                    if (cond) remove.emplace_back(x, y);
                }
            for (auto [x, y] : remove) img.bits[std::size_t(y * img.width + x)] = 0;
            changed = changed || !remove.empty();
        }
    }
    // A component erased entirely keeps its first pixel in raster order.
    const int n = src.width * src.height;
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int i) {
        while (parent[std::size_t(i)] != i) i = parent[std::size_t(i)] = parent[std::size_t(parent[std::size_t(i)])];
        return i;
    };
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            if (!ink(src, x, y)) continue;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx)
                    if (ink(src, x + dx, y + dy)) {
                        const int a = find(y * src.width + x), b = find((y + dy) * src.width + x + dx);
                        parent[std::size_t(std::max(a, b))] = std::min(a, b);
                    }
        }
    std::vector<char> alive(std::size_t(n), 0);
    for (int i = 0; i < n; ++i)
        if (img.bits[std::size_t(i)]) alive[std::size_t(find(i))] = 1;
    for (int i = 0; i < n; ++i)
        if (src.bits[std::size_t(i)] && !alive[std::size_t(find(i))]) {
            img.bits[std::size_t(i)] = 1;
            alive[std::size_t(find(i))] = 1;
        }
    return img;
}

inline double pseudo_f(const BinaryImage& pred, const BinaryImage& gt) {
    const auto skel = zhang_suen(gt);
    const auto c = count(pred, gt);
    const auto s = count(pred, skel);
    if (c.tp == 0 || s.tp + s.fn == 0) return 0;
    return fmeasure(double(c.tp) / double(c.tp + c.fp), double(s.tp) / double(s.tp + s.fn));
}

inline double psnr(const BinaryImage& pred, const BinaryImage& gt) {
    double se = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) se += std::pow(ink(pred, x, y) - ink(gt, x, y), 2);
    if (se == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / (se / double(gt.width * gt.height)));
}

inline std::int64_t nubn(const BinaryImage& gt) {
    std::int64_t n = 0;
    for (int by = 0; by * 8 < gt.height; ++by)
        for (int bx = 0; bx * 8 < gt.width; ++bx) {
            int s = 0, total = 0;
            for (int y = by * 8; y < std::min(by * 8 + 8, gt.height); ++y)
                for (int x = bx * 8; x < std::min(bx * 8 + 8, gt.width); ++x) {
                    s += ink(gt, x, y);
                    ++total;
                }
            n += s != 0 && s != total;
        }
    return n;
}

inline double drd(const BinaryImage& pred, const BinaryImage& gt) {
    double w[5][5], sum = 0;
    for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) {
            w[i][j] = (i == 2 && j == 2) ? 0.0 : 1.0 / std::sqrt(double((i - 2) * (i - 2) + (j - 2) * (j - 2)));
            sum += w[i][j];
        }
    for (auto& row : w)
        for (auto& v : row) v /= sum;
    double total = 0;
    int flips = 0;
    for (int y = 0; y < gt.height; ++y)
        for (int x = 0; x < gt.width; ++x) {
            const int p = ink(pred, x, y);
            if (p == ink(gt, x, y)) continue;
            ++flips;
            double dk = 0;
            for (int i = 0; i < 5; ++i)
                for (int j = 0; j < 5; ++j) {
                    const int nx = x + j - 2, ny = y + i - 2;
                    const int g = (nx < 0 || ny < 0 || nx >= gt.width || ny >= gt.height) ? p : ink(gt, nx, ny);
                    dk += std::abs(g - p) * w[i][j];
                }
            total += dk;
        }
    if (flips == 0) return 0;
    const auto blocks = oracle::nubn(gt);
    if (blocks == 0) return std::numeric_limits<double>::infinity();
    return total / double(blocks);
}

// --- thresholding -----------------------------------------------------------

inline int level(float v) { return int(std::lround(std::clamp(double(v), 0.0, 1.0) * 255.0)); }

inline float clamped(const GrayImage& img, int x, int y) {
    return img.pixels[std::size_t(std::clamp(y, 0, img.height - 1) * img.width + std::clamp(x, 0, img.width - 1))];
}

inline void local_stats(const GrayImage& img, int x, int y, int window, double& mean, double& sd) {
    const int r = window / 2;
    double s = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) s += clamped(img, x + dx, y + dy);
    mean = s / double(window * window);
    double v = 0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) v += std::pow(clamped(img, x + dx, y + dy) - mean, 2);
    sd = std::sqrt(v / double(window * window));
}

/// Exhaustive search over all 255 candidate thresholds.
inline int otsu_threshold(const GrayImage& img) {
    int best = 0;
    double best_var = 0;
    for (int t = 1; t <= 255; ++t) {
        double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
        for (auto v : img.pixels) {
            const int l = level(v);
            if (l < t) {
                ++n0;
                s0 += l;
            } else {
                ++n1;
                s1 += l;
            }
        }
        if (n0 == 0 || n1 == 0) continue;
        const double n = n0 + n1, m0 = s0 / n0, m1 = s1 / n1;
        const double var = (n0 / n) * (n1 / n) * (m0 - m1) * (m0 - m1);
        if (var > best_var) {
            best_var = var;
            best = t;
        }
    }
    return best;
}

inline BinaryImage niblack(const GrayImage& img, int window, double k) {
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double m, s;
            local_stats(img, x, y, window, m, s);
            out.bits[std::size_t(y * img.width + x)] = img.pixels[std::size_t(y * img.width + x)] < m + k * s - 1e-9;
        }
    return out;
}

inline BinaryImage sauvola(const GrayImage& img, int window, double k, double range) {
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double m, s;
            local_stats(img, x, y, window, m, s);
            out.bits[std::size_t(y * img.width + x)] = img.pixels[std::size_t(y * img.width + x)] < m * (1 + k * (s / range - 1)) - 1e-9;
        }
    return out;
}

inline BinaryImage bernsen(const GrayImage& img, int window, double contrast_min) {
    const int global = otsu_threshold(img), r = window / 2;
    BinaryImage out(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            double lo = 2, hi = -1;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    lo = std::min(lo, double(clamped(img, x + dx, y + dy)));
                    hi = std::max(hi, double(clamped(img, x + dx, y + dy)));
                }
            const double t = (lo + hi) / 2;
            const auto i = std::size_t(y * img.width + x);
            out.bits[i] = hi - lo < contrast_min ? level(float(t)) < global : img.pixels[i] < t;
        }
    return out;
}

}  // namespace docbin::oracle
