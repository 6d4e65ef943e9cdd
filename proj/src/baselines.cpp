#include "docbin/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace docbin {

namespace {

void check_window(int window) {
    if (window < 1 || window % 2 == 0) {
        throw std::invalid_argument("window must be an odd positive size, got " + std::to_string(window));
    }
}

// Sliding extreme over a clamped 1-D window. Replicating the border never
// changes a min or max, so clipping the window is equivalent.
template <class Cmp>
void sliding_extreme(const float* src, float* dst, int n, int stride, int radius, Cmp better) {
    for (int i = 0; i < n; ++i) {
        const int lo = std::max(0, i - radius), hi = std::min(n - 1, i + radius);
        float v = src[std::ptrdiff_t(lo) * stride];
        for (int j = lo + 1; j <= hi; ++j) {
            const float c = src[std::ptrdiff_t(j) * stride];
            if (better(c, v)) v = c;
        }
        dst[std::ptrdiff_t(i) * stride] = v;
    }
}

template <class Cmp>
GrayImage window_extreme(const GrayImage& img, int radius, Cmp better) {
    GrayImage rows(img.width, img.height), out(img.width, img.height);
    for (int y = 0; y < img.height; ++y) {
        const auto off = std::ptrdiff_t(y) * img.width;
        sliding_extreme(img.pixels.data() + off, rows.pixels.data() + off, img.width, 1, radius, better);
    }
    for (int x = 0; x < img.width; ++x)
        sliding_extreme(rows.pixels.data() + x, out.pixels.data() + x, img.height, img.width, radius, better);
    return out;
}

}  // namespace

int intensity_level(float v) { return int(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

WindowStats window_stats(const GrayImage& img, int window) {
    check_window(window);
    const int r = window / 2, w = img.width, h = img.height;
    // Separable box sums over the replicate-padded image. Each output sums at
    // most window^2 terms, so round-off stays at the level of a direct loop
    // (integral images over a whole page lose several digits to cancellation).
    const int ph = h + 2 * r;
    std::vector<double> row1(std::size_t(w) * std::size_t(ph)), row2(row1.size());
    for (int py = 0; py < ph; ++py) {
        const int sy = std::clamp(py - r, 0, h - 1);
        for (int x = 0; x < w; ++x) {
            double a = 0, b = 0;
            for (int dx = -r; dx <= r; ++dx) {
                const double v = img.at(std::clamp(x + dx, 0, w - 1), sy);
                a += v;
                b += v * v;
            }
            row1[std::size_t(py) * std::size_t(w) + std::size_t(x)] = a;
            row2[std::size_t(py) * std::size_t(w) + std::size_t(x)] = b;
        }
    }
    WindowStats ws{w, h, std::vector<double>(img.size()), std::vector<double>(img.size())};
    const double n = double(window) * double(window);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double sum = 0, sq = 0;
            for (int py = y; py < y + window; ++py) {
                sum += row1[std::size_t(py) * std::size_t(w) + std::size_t(x)];
                sq += row2[std::size_t(py) * std::size_t(w) + std::size_t(x)];
            }
            const double m = sum / n;
            const auto i = std::size_t(y) * std::size_t(w) + std::size_t(x);
            ws.mean[i] = m;
            ws.stddev[i] = std::sqrt(std::max(0.0, sq / n - m * m));
        }
    }
    return ws;
}

int otsu_threshold(const std::vector<std::int64_t>& histogram) {
    if (histogram.size() != 256) throw std::invalid_argument("otsu_threshold expects 256 bins");
    std::int64_t n = 0, s = 0;
    for (int l = 0; l < 256; ++l) {
        n += histogram[std::size_t(l)];
        s += histogram[std::size_t(l)] * l;
    }
    int best = 0;
    long double best_var = 0;
    std::int64_t n0 = 0, s0 = 0;
    for (int t = 1; t < 256; ++t) {
        n0 += histogram[std::size_t(t - 1)];
        s0 += histogram[std::size_t(t - 1)] * (t - 1);
        const std::int64_t n1 = n - n0, s1 = s - s0;
        if (n0 == 0 || n1 == 0) continue;
        // Between-class variance up to the constant factor 1/n^2; exact
        // integer numerator keeps ties exact.
        const long double num = (long double)(s0 * n1 - s1 * n0);
        const long double var = num * num / ((long double)n0 * (long double)n1);
        if (var > best_var) {
            best_var = var;
            best = t;
        }
    }
    return best;
}

OtsuResult otsu(const GrayImage& img) {
    if (img.size() == 0) throw std::invalid_argument("otsu on an empty image");
    std::vector<std::int64_t> hist(256, 0);
    for (auto v : img.pixels) ++hist[std::size_t(intensity_level(v))];
    OtsuResult r{otsu_threshold(hist), BinaryImage(img.width, img.height)};
    for (std::size_t i = 0; i < img.size(); ++i) r.image.bits[i] = intensity_level(img.pixels[i]) < r.threshold;
    return r;
}

BinaryImage niblack(const GrayImage& img, const NiblackParams& p) {
    const auto ws = window_stats(img, p.window);
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) out.bits[i] = double(img.pixels[i]) < ws.mean[i] + p.k * ws.stddev[i] - kLocalMargin;
    return out;
}

BinaryImage sauvola(const GrayImage& img, const SauvolaParams& p) {
    if (p.dynamic_range <= 0) throw std::invalid_argument("sauvola dynamic range must be positive");
    const auto ws = window_stats(img, p.window);
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double t = ws.mean[i] * (1.0 + p.k * (ws.stddev[i] / p.dynamic_range - 1.0));
        out.bits[i] = double(img.pixels[i]) < t - kLocalMargin;
    }
    return out;
}

BinaryImage bernsen(const GrayImage& img, const BernsenParams& p) {
    check_window(p.window);
    const int r = p.window / 2;
    const auto lo = window_extreme(img, r, [](float a, float b) { return a < b; });
    const auto hi = window_extreme(img, r, [](float a, float b) { return a > b; });
    const int global = otsu(img).threshold;
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double t = (double(lo.pixels[i]) + double(hi.pixels[i])) / 2.0;
        if (double(hi.pixels[i]) - double(lo.pixels[i]) < p.contrast_min) {
            out.bits[i] = intensity_level(float(t)) < global;
        } else {
            out.bits[i] = double(img.pixels[i]) < t;
        }
    }
    return out;
}

}  // namespace docbin
