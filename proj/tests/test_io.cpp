#include "docbin/checkpoint.hpp"
#include "docbin/image.hpp"

#include "doctest.h"
#include "test_util.hpp"

#include <png.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <unistd.h>

using namespace docbin;
using namespace docbin::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("docbin_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary);
    os << bytes;
}

std::string read_bytes(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

GrayImage random_gray(int w, int h, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    GrayImage img(w, h);
    for (auto& p : img.pixels) p = float(rng() % 256) / 255.0f;
    return img;
}

}  // namespace

TEST_CASE("pnm decoding basics") {
    auto a = decode_pnm(std::string("P5\n1 1\n255\n") + char(0));
    CHECK(a.width == 1);
    CHECK(a.pixels[0] == 0.0f);
    auto b = decode_pnm("P2\n1 1\n255\n128\n");
    CHECK(b.pixels[0] == doctest::Approx(128.0 / 255.0));
    auto c = decode_pnm("P1\n# comment\n3 1\n1 0 1\n");
    CHECK(c.pixels == std::vector<float>{0, 1, 0});
    auto d = decode_pnm(std::string("P4\n3 1\n") + char(0xA0));
    CHECK(d.pixels == std::vector<float>{0, 1, 0});
    auto e = decode_pnm("P2\n2 1\n15\n0 15\n");
    CHECK(e.pixels == std::vector<float>{0, 1});
    auto f = decode_pnm(std::string("P6\n1 1\n255\n") + char(255) + char(0) + char(0));
    CHECK(f.pixels[0] == doctest::Approx(0.299).epsilon(1e-4));
}

TEST_CASE("pnm errors carry byte offsets") {
    CHECK_THROWS_AS(decode_pnm("XX\n"), ImageError);
    try {
        decode_pnm(std::string("P5\n4 4\n255\n") + "abc");
        FAIL("expected truncation error");
    } catch (const ImageError& e) {
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
    CHECK_THROWS_AS(decode_pnm("P2\n2 2\n255\n1 2 3\n"), ImageError);
    CHECK_THROWS_AS(decode_pnm("P5\n0 4\n255\n"), ImageError);
}

TEST_CASE("P5 round trip is bit exact") {
    TempDir dir;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto img = random_gray(13, 7, seed);
        save_image(img, dir.file("a.pgm"));
        auto back = load_image(dir.file("a.pgm"));
        CHECK(back == img);
        CHECK(encode_pgm(back) == encode_pgm(img));
    }
}

TEST_CASE("png round trip and colour luma") {
    TempDir dir;
    auto img = random_gray(9, 5, 4);
    save_image(img, dir.file("a.png"));
    CHECK(load_image(dir.file("a.png")) == img);

    png_image out{};
    out.version = PNG_IMAGE_VERSION;
    out.width = 2;
    out.height = 1;
    out.format = PNG_FORMAT_RGB;
    const png_byte rgb[] = {0, 255, 0, 10, 20, 30};
    REQUIRE(png_image_write_to_file(&out, dir.file("c.png").c_str(), 0, rgb, 0, nullptr));
    auto c = load_image(dir.file("c.png"));
    REQUIRE(c.width == 2);
    CHECK(c.pixels[0] == doctest::Approx(0.587).epsilon(1e-4));
    CHECK(c.pixels[1] == doctest::Approx((0.299 * 10 + 0.587 * 20 + 0.114 * 30) / 255).epsilon(1e-4));
    write_bytes(dir.file("bad.png"), "\x89PNG\r\n\x1a\nnot really");
    CHECK_THROWS_AS(load_image(dir.file("bad.png")), ImageError);
}

TEST_CASE("binary save conventions") {
    TempDir dir;
    BinaryImage ones(3, 2, 1);
    save_binary(ones, dir.file("ones.pgm"));
    const auto bytes = read_bytes(dir.file("ones.pgm"));
    REQUIRE(bytes.size() >= 6);
    for (std::size_t i = bytes.size() - 6; i < bytes.size(); ++i) CHECK(static_cast<unsigned char>(bytes[i]) == 0);

    BinaryImage zeros(1, 1, 0);
    save_binary(zeros, dir.file("z.pgm"));
    CHECK(static_cast<unsigned char>(read_bytes(dir.file("z.pgm")).back()) == 255);
    save_binary(zeros, dir.file("z.pbm"));
    CHECK(load_binary(dir.file("z.pbm")) == zeros);

    std::mt19937_64 rng(3);
    BinaryImage r(19, 4);
    for (auto& b : r.bits) b = std::uint8_t(rng() % 2);
    for (const char* name : {"r.pbm", "r.pgm", "r.png"}) {
        save_binary(r, dir.file(name));
        CHECK(load_binary(dir.file(name)) == r);
    }
    CHECK(encode_pbm(r) == encode_pbm(load_binary(dir.file("r.pbm"))));
}

TEST_CASE("load_binary flags uncertain pixels") {
    TempDir dir;
    GrayImage img(4, 1);
    img.pixels = {0.0f, 0.5f, 0.95f, 1.0f};
    save_image(img, dir.file("g.pgm"));
    std::size_t uncertain = 0;
    auto b = load_binary(dir.file("g.pgm"), &uncertain);
    CHECK(uncertain == 1);
    CHECK(b.bits == std::vector<std::uint8_t>{1, 0, 0, 0});
}

TEST_CASE("unwritable path is an error") {
    CHECK_THROWS(save_image(GrayImage(2, 2), "/nonexistent-dir/x.pgm"));
    CHECK_THROWS(load_image("/nonexistent-dir/x.pgm"));
}

TEST_CASE("tensor image round trip within quantization") {
    auto img = random_gray(8, 6, 9);
    auto t = image_to_tensor(img);
    CHECK(t.shape() == Shape{1, 1, 6, 8});
    for (auto v : t.data()) CHECK((v >= -1 && v <= 1));
    auto back = tensor_to_image(t);
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0f / 255);
    auto other = random_gray(8, 6, 10);
    auto both = images_to_tensor({&img, &other});
    CHECK(both.shape() == Shape{2, 1, 6, 8});
    CHECK(tensor_to_image(both, 1).pixels[5] == doctest::Approx(other.pixels[5]).epsilon(1e-6));
}

TEST_CASE("tensor file round trip") {
    TensorFile f;
    f.meta = {{"b", 2}, {"a", {{"z", 1}, {"y", "text"}}}};
    f.add("w", random_tensor({2, 3, 4}, 1));
    f.add("s", Tensor::scalar(Scalar(1.5)));
    f.add("empty", Tensor::zeros({0}));
    const auto bytes = serialize_tensor_file(f);
    CHECK(bytes.substr(0, 8) == "DOCBINCK");
    auto g = parse_tensor_file(bytes);
    CHECK(g.meta == f.meta);
    REQUIRE(g.tensors.size() == 3);
    CHECK(g.find("w")->to_vector() == f.find("w")->to_vector());
    CHECK(g.find("w")->shape() == Shape{2, 3, 4});
    CHECK(g.find("s")->shape() == Shape{});
    CHECK(!g.find("missing"));
    CHECK(serialize_tensor_file(g) == bytes);
}

TEST_CASE("tensor file rejects corruption") {
    TensorFile f;
    f.add("w", random_tensor({4}, 1));
    auto bytes = serialize_tensor_file(f);

    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_WITH_AS(parse_tensor_file(bad_magic), doctest::Contains("magic"), CheckpointError);

    auto bad_version = bytes;
    bad_version[8] = 9;
    CHECK_THROWS_WITH_AS(parse_tensor_file(bad_version), doctest::Contains("version"), CheckpointError);

    CHECK_THROWS_WITH_AS(parse_tensor_file(bytes.substr(0, bytes.size() - 3)), doctest::Contains("byte"),
                         CheckpointError);
    CHECK_THROWS_AS(parse_tensor_file(bytes + "x"), CheckpointError);
    CHECK_THROWS_AS(read_tensor_file("/nonexistent-dir/x.ck"), std::exception);
}

TEST_CASE("tensor file write is byte stable") {
    TempDir dir;
    TensorFile f;
    f.meta = {{"k", 1}};
    f.add("w", random_tensor({3, 3}, 2));
    write_tensor_file(dir.file("a.ck"), f);
    write_tensor_file(dir.file("b.ck"), read_tensor_file(dir.file("a.ck")));
    CHECK(read_bytes(dir.file("a.ck")) == read_bytes(dir.file("b.ck")));
}
