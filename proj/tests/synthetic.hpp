#pragma once

// Synthetic document pages for training tests: clean pages are black glyph
// strokes on white; degraded pages are the same strokes faded onto an uneven,
// noisy background.

#include "docbin/data.hpp"
#include "docbin/image.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

namespace docbin::testing {

inline GrayImage synthetic_clean(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GrayImage img(w, h, 1.0f);
    const int line = 14;
    for (int top = 3; top + 9 < h; top += line) {
        int x = 2 + int(rng() % 4);
        while (x + 6 < w) {
            const int gw = 3 + int(rng() % 5);
            const int shape = int(rng() % 4);
            for (int y = top; y < top + 9; ++y)
                for (int dx = 0; dx < gw; ++dx) {
                    const int yy = y - top;
                    bool ink = false;
                    switch (shape) {
                        case 0: ink = dx == 0 || dx == gw - 1; break;
                        case 1: ink = dx == 0 || yy == 0 || yy == 8; break;
                        case 2: ink = dx == gw / 2 || yy == 4; break;
                        default: ink = dx == (yy * (gw - 1)) / 8 || yy == 8; break;
                    }
                    if (ink) img.at(x + dx, y) = 0.0f;
                }
            x += gw + 2 + int(rng() % 3);
        }
    }
    return img;
}

inline GrayImage synthetic_degraded(const GrayImage& clean, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.04);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double cx = u(rng) * clean.width, cy = u(rng) * clean.height;
    const double radius = 0.3 * std::max(clean.width, clean.height);
    GrayImage out(clean.width, clean.height);
    for (int y = 0; y < clean.height; ++y)
        for (int x = 0; x < clean.width; ++x) {
            const double d = std::hypot(x - cx, y - cy);
            const double stain = 0.2 * std::exp(-d * d / (radius * radius));
            const double bg = 0.85 - 0.1 * double(y) / clean.height - stain;
            const double ink = 0.3 + 0.1 * u(rng);
            const double v = clean.at(x, y) < 0.5f ? ink : bg;
            out.at(x, y) = float(std::clamp(v + noise(rng), 0.0, 1.0));
        }
    return out;
}

/// `n` pixel-aligned (clean, degraded) patch pairs of size `size`; all in the
/// train split unless `eval` > 0.
inline PatchStore synthetic_store(std::size_t n, int size, std::uint64_t seed, std::size_t eval = 0) {
    PatchStore s;
    s.patch_size = size;
    for (std::size_t i = 0; i < n; ++i) {
        Patch c, d;
        c.image = synthetic_clean(size, size, seed * 1000 + i);
        d.image = synthetic_degraded(c.image, seed * 1000 + i + 500);
        c.origin.source = d.origin.source = "page" + std::to_string(i);
        c.split = d.split = i < n - eval ? Split::Train : Split::Eval;
        c.partner = i;
        d.partner = i;
        s.clean.push_back(std::move(c));
        s.degraded.push_back(std::move(d));
    }
    return s;
}

}  // namespace docbin::testing
