#include "docbin/baselines.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <random>

using namespace docbin;

namespace {

GrayImage random_gray(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = float(rng() % 256) / 255.0f;
    return img;
}

// Dark strokes on a bright, slowly varying background with noise.
GrayImage document_like(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0, 0.03);
    GrayImage img(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const bool stroke = (y % 12 < 3 && x % 20 < 14) || (x % 20 == 5);
            const double bg = 0.75 + 0.15 * double(x) / w;
            img.at(x, y) = float(std::clamp((stroke ? 0.2 : bg) + noise(rng), 0.0, 1.0));
        }
    return img;
}

}  // namespace

TEST_CASE("window stats match direct loops") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto img = random_gray(23, 17, seed);
        for (int window : {1, 3, 7, 15}) {
            auto ws = window_stats(img, window);
            for (int y = 0; y < img.height; ++y)
                for (int x = 0; x < img.width; ++x) {
                    double m, s;
                    oracle::local_stats(img, x, y, window, m, s);
                    const auto i = std::size_t(y * img.width + x);
                    CHECK(ws.mean[i] == doctest::Approx(m).epsilon(1e-6));
                    CHECK(ws.stddev[i] == doctest::Approx(s).epsilon(1e-6).scale(1e-6));
                    CHECK(ws.stddev[i] >= 0);
                }
        }
    }
    CHECK_THROWS(window_stats(GrayImage(4, 4), 4));
}

TEST_CASE("otsu on a bimodal image") {
    GrayImage img(10, 10);
    for (std::size_t i = 0; i < 100; ++i) img.pixels[i] = i < 50 ? 0.2f : 0.8f;
    auto r = otsu(img);
    CHECK(r.threshold == 52);  // lowest threshold separating level 51 from 204
    for (std::size_t i = 0; i < 100; ++i) CHECK(r.image.bits[i] == (i < 50));

    // any strictly monotone remap of the two levels keeps the partition
    for (auto [lo, hi] : {std::pair{0.05f, 0.95f}, std::pair{0.4f, 0.45f}, std::pair{0.0f, 1.0f}}) {
        GrayImage m(10, 10);
        for (std::size_t i = 0; i < 100; ++i) m.pixels[i] = i < 50 ? lo : hi;
        CHECK(otsu(m).image == r.image);
    }
}

TEST_CASE("otsu on a constant image") {
    auto r = otsu(GrayImage(6, 6, 0.3f));
    CHECK(r.threshold == 0);
    CHECK(r.image.count() == 0);
    CHECK_THROWS(otsu(GrayImage()));
}

TEST_CASE("otsu matches exhaustive search") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto img = random_gray(16, 16, seed);
        auto r = otsu(img);
        CHECK(r.threshold == oracle::otsu_threshold(img));
        for (std::size_t i = 0; i < img.size(); ++i) CHECK(r.image.bits[i] == (oracle::level(img.pixels[i]) < r.threshold));
    }
}

TEST_CASE("niblack") {
    CHECK(niblack(GrayImage(20, 20, 0.6f)).count() == 0);

    // 5x5 hand case, window 3, k = 0: ink where the pixel is below its
    // replicated 3x3 mean. Only the dark centre qualifies.
    GrayImage img(5, 5, 0.8f);
    img.at(2, 2) = 0.2f;
    auto b = niblack(img, {3, 0.0});
    CHECK(b.count() == 1);
    CHECK(b.at(2, 2) == 1);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto r = random_gray(32, 32, seed);
        CHECK(niblack(r) == oracle::niblack(r, 15, -0.2));
        CHECK(niblack(r, {7, 0.3}) == oracle::niblack(r, 7, 0.3));
    }
}

TEST_CASE("sauvola") {
    CHECK(sauvola(GrayImage(30, 30, 1.0f)).count() == 0);
    // s = 0 gives T = m (1 - k): a flat 0.3 field is ink only if 0.3 < 0.3 (1 - k)
    CHECK(sauvola(GrayImage(30, 30, 0.3f), {25, -0.1, 0.5}).count() == 900);
    CHECK(sauvola(GrayImage(30, 30, 0.3f), {25, 0.5, 0.5}).count() == 0);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto r = random_gray(32, 32, seed);
        CHECK(sauvola(r) == oracle::sauvola(r, 25, 0.5, 128.0 / 255.0));
        CHECK(sauvola(r, {9, 0.2, 0.5}) == oracle::sauvola(r, 9, 0.2, 0.5));
    }
}

TEST_CASE("bernsen") {
    // high-contrast step: everything darker than the midpoint is ink
    GrayImage step(10, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 10; ++x) step.at(x, y) = x < 5 ? 0.1f : 0.9f;
    auto b = bernsen(step, {31, 15.0 / 255});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 10; ++x) CHECK(b.at(x, y) == (x < 5));

    // flat region far from the edge inherits the global Otsu class
    GrayImage wide(80, 10, 0.9f);
    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) wide.at(x, y) = 0.1f;
    auto w = bernsen(wide, {5, 15.0 / 255});
    CHECK(w.at(2, 5) == 1);
    CHECK(w.at(60, 5) == 0);

    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto r = document_like(40, 36, seed);
        CHECK(bernsen(r, {7, 15.0 / 255}) == oracle::bernsen(r, 7, 15.0 / 255));
        CHECK(bernsen(r) == oracle::bernsen(r, 31, 15.0 / 255));
        auto g = random_gray(32, 32, seed);
        CHECK(bernsen(g, {3, 0.5}) == oracle::bernsen(g, 3, 0.5));
    }
}

TEST_CASE("baselines produce binary images on document-like input") {
    auto img = document_like(64, 48, 3);
    for (const auto& b : {otsu(img).image, niblack(img), sauvola(img), bernsen(img)}) {
        CHECK(b.width == 64);
        for (auto v : b.bits) CHECK(v <= 1);
        CHECK(b.count() > 0);
        CHECK(b.count() < b.size());
    }
}
