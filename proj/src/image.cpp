#include "docbin/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace docbin {

GrayImage::GrayImage(int w, int h, float fill) : width(w), height(h), pixels(std::size_t(w) * std::size_t(h), fill) {
    if (w < 1 || h < 1) throw ImageError("image dimensions must be >= 1");
}

BinaryImage::BinaryImage(int w, int h, std::uint8_t fill) : width(w), height(h), bits(std::size_t(w) * std::size_t(h), fill) {
    if (w < 1 || h < 1) throw ImageError("image dimensions must be >= 1");
}

std::size_t BinaryImage::count() const { return std::size_t(std::count(bits.begin(), bits.end(), std::uint8_t(1))); }

namespace {

std::string lower_ext(const std::string& path) {
    auto ext = std::filesystem::path(path).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return ext;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ImageError("cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw ImageError("cannot open " + path + " for writing");
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw ImageError("write failed for " + path);
}

float luma(double r, double g, double b) { return float(0.299 * r + 0.587 * g + 0.114 * b); }

class PnmParser {
public:
    explicit PnmParser(const std::string& bytes) : b_(bytes) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ImageError("PNM: " + msg + " at byte " + std::to_string(pos_));
    }

    void skip_space_and_comments() {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                while (pos_ < b_.size() && b_[pos_] != '\n' && b_[pos_] != '\r') ++pos_;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    long number(const char* what) {
        skip_space_and_comments();
        if (pos_ >= b_.size()) fail(std::string("unexpected end of file reading ") + what);
        if (!std::isdigit(static_cast<unsigned char>(b_[pos_]))) fail(std::string("expected ") + what);
        long v = 0;
        while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
            v = v * 10 + (b_[pos_] - '0');
            if (v > 1'000'000'000) fail(std::string("value too large for ") + what);
            ++pos_;
        }
        return v;
    }

    int bit() {
        skip_space_and_comments();
        if (pos_ >= b_.size()) fail("unexpected end of file in bitmap");
        const char c = b_[pos_];
        if (c != '0' && c != '1') fail("expected 0 or 1 in bitmap");
        ++pos_;
        return c - '0';
    }

    // Exactly one whitespace byte separates the header from a binary raster.
    void single_space() {
        if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
            fail("expected whitespace before raster");
        }
        ++pos_;
    }

    unsigned char byte() {
        if (pos_ >= b_.size()) fail("truncated raster");
        return static_cast<unsigned char>(b_[pos_++]);
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }
    std::size_t remaining() const { return b_.size() - pos_; }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace

ImageFormat format_from_path(const std::string& path) {
    const auto ext = lower_ext(path);
    if (ext == ".pgm") return ImageFormat::Pgm;
    if (ext == ".pbm") return ImageFormat::Pbm;
    if (ext == ".png") return ImageFormat::Png;
    throw ImageError("unsupported image extension '" + ext + "' for " + path);
}

GrayImage decode_pnm(const std::string& bytes) {
    PnmParser p(bytes);
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] < '1' || bytes[1] > '6') p.fail("bad magic");
    const int kind = bytes[1] - '0';
    p.advance(2);
    const long w = p.number("width");
    const long h = p.number("height");
    if (w < 1 || h < 1) p.fail("image dimensions must be >= 1");
    if (w * h > 400'000'000L) p.fail("image too large");
    const bool bitmap = kind == 1 || kind == 4;
    const long maxval = bitmap ? 1 : p.number("maxval");
    if (maxval < 1 || maxval > 65535) p.fail("maxval out of range");

    GrayImage img(static_cast<int>(w), static_cast<int>(h));
    const std::size_t n = img.size();
    const double scale = 1.0 / double(maxval);

    auto sample_ascii = [&](const char* what) {
        const long v = p.number(what);
        if (v > maxval) p.fail("sample exceeds maxval");
        return v;
    };
    auto sample_binary = [&]() -> long {
        if (maxval < 256) return p.byte();
        const long hi = p.byte();
        return (hi << 8) | p.byte();
    };
    auto check_sample = [&](long v) {
        if (v > maxval) p.fail("sample exceeds maxval");
        return v;
    };

    switch (kind) {
        case 1:
            for (std::size_t i = 0; i < n; ++i) img.pixels[i] = p.bit() ? 0.0f : 1.0f;
            break;
        case 2:
            for (std::size_t i = 0; i < n; ++i) img.pixels[i] = float(double(sample_ascii("sample")) * scale);
            break;
        case 3:
            for (std::size_t i = 0; i < n; ++i) {
                const double r = double(sample_ascii("red")), g = double(sample_ascii("green")),
                             b = double(sample_ascii("blue"));
                img.pixels[i] = luma(r * scale, g * scale, b * scale);
            }
            break;
        case 4: {
            p.single_space();
            const std::size_t row_bytes = (std::size_t(w) + 7) / 8;
            for (long y = 0; y < h; ++y) {
                for (std::size_t bx = 0; bx < row_bytes; ++bx) {
                    const unsigned char byte = p.byte();
                    for (int k = 0; k < 8; ++k) {
                        const long x = long(bx) * 8 + k;
                        if (x >= w) break;
                        img.at(int(x), int(y)) = (byte >> (7 - k)) & 1 ? 0.0f : 1.0f;
                    }
                }
            }
            break;
        }
        case 5:
            p.single_space();
            for (std::size_t i = 0; i < n; ++i) img.pixels[i] = float(double(check_sample(sample_binary())) * scale);
            break;
        case 6:
            p.single_space();
            for (std::size_t i = 0; i < n; ++i) {
                const double r = double(check_sample(sample_binary()));
                const double g = double(check_sample(sample_binary()));
                const double b = double(check_sample(sample_binary()));
                img.pixels[i] = luma(r * scale, g * scale, b * scale);
            }
            break;
    }
    return img;
}

namespace {

GrayImage load_png(const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw ImageError("PNG: " + path + ": " + image.message);
    }
    const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
    image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(image));
    png_color white{255, 255, 255};
    if (!png_image_finish_read(&image, &white, buffer.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw ImageError("PNG: " + path + ": " + msg);
    }
    GrayImage img(int(image.width), int(image.height));
    for (std::size_t i = 0; i < img.size(); ++i) {
        if (color) {
            img.pixels[i] = luma(buffer[3 * i] / 255.0, buffer[3 * i + 1] / 255.0, buffer[3 * i + 2] / 255.0);
        } else {
            img.pixels[i] = float(buffer[i] / 255.0);
        }
    }
    return img;
}

void save_png_bytes(const std::vector<png_byte>& gray, int w, int h, const std::string& path) {
    png_image image{};
    image.version = PNG_IMAGE_VERSION;
    image.width = png_uint_32(w);
    image.height = png_uint_32(h);
    image.format = PNG_FORMAT_GRAY;
    if (!png_image_write_to_file(&image, path.c_str(), 0, gray.data(), 0, nullptr)) {
        throw ImageError("PNG: cannot write " + path + ": " + image.message);
    }
}

std::uint8_t quantize(float v) { return std::uint8_t(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); }

}  // namespace

GrayImage load_image(const std::string& path) {
    if (lower_ext(path) == ".png") return load_png(path);
    try {
        return decode_pnm(read_file(path));
    } catch (const ImageError& e) {
        throw ImageError(path + ": " + e.what());
    }
}

std::string encode_pgm(const GrayImage& img) {
    std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.reserve(out.size() + img.size());
    for (auto v : img.pixels) out.push_back(char(quantize(v)));
    return out;
}

std::string encode_pbm(const BinaryImage& img) {
    std::string out = "P4\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n";
    const std::size_t row_bytes = (std::size_t(img.width) + 7) / 8;
    for (int y = 0; y < img.height; ++y) {
        for (std::size_t bx = 0; bx < row_bytes; ++bx) {
            unsigned char byte = 0;
            for (int k = 0; k < 8; ++k) {
                const std::size_t x = bx * 8 + std::size_t(k);
                if (x < std::size_t(img.width) && img.at(int(x), y)) byte |= static_cast<unsigned char>(0x80u >> k);
            }
            out.push_back(char(byte));
        }
    }
    return out;
}

void save_image(const GrayImage& img, const std::string& path, ImageFormat format) {
    switch (format) {
        case ImageFormat::Pgm:
            write_file(path, encode_pgm(img));
            break;
        case ImageFormat::PgmAscii: {
            std::string out = "P2\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
            for (int y = 0; y < img.height; ++y) {
                for (int x = 0; x < img.width; ++x) {
                    if (x) out += ' ';
                    out += std::to_string(quantize(img.at(x, y)));
                }
                out += '\n';
            }
            write_file(path, out);
            break;
        }
        case ImageFormat::Pbm:
            write_file(path, encode_pbm(threshold_image(img)));
            break;
        case ImageFormat::Png: {
            std::vector<png_byte> bytes(img.size());
            for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = quantize(img.pixels[i]);
            save_png_bytes(bytes, img.width, img.height, path);
            break;
        }
    }
}

void save_image(const GrayImage& img, const std::string& path) { save_image(img, path, format_from_path(path)); }

void save_binary(const BinaryImage& img, const std::string& path) {
    const auto fmt = format_from_path(path);
    if (fmt == ImageFormat::Pbm) {
        write_file(path, encode_pbm(img));
    } else if (fmt == ImageFormat::Png) {
        std::vector<png_byte> bytes(img.size());
        for (std::size_t i = 0; i < img.size(); ++i) bytes[i] = img.bits[i] ? 0 : 255;
        save_png_bytes(bytes, img.width, img.height, path);
    } else {
        save_image(to_gray(img), path, ImageFormat::Pgm);
    }
}

BinaryImage threshold_image(const GrayImage& img, float threshold) {
    BinaryImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) out.bits[i] = img.pixels[i] < threshold ? 1 : 0;
    return out;
}

GrayImage to_gray(const BinaryImage& img) {
    GrayImage out(img.width, img.height);
    for (std::size_t i = 0; i < img.size(); ++i) out.pixels[i] = img.bits[i] ? 0.0f : 1.0f;
    return out;
}

BinaryImage load_binary(const std::string& path, std::size_t* uncertain) {
    auto img = load_image(path);
    if (uncertain) {
        *uncertain = std::size_t(std::count_if(img.pixels.begin(), img.pixels.end(),
                                               [](float v) { return v > 0.1f && v < 0.9f; }));
    }
    return threshold_image(img, 0.5f);
}

Tensor images_to_tensor(const std::vector<const GrayImage*>& images) {
    if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
    const int w = images.front()->width, h = images.front()->height;
    std::vector<Scalar> data;
    data.reserve(images.size() * std::size_t(w) * std::size_t(h));
    for (const auto* img : images) {
        if (img->width != w || img->height != h) throw ShapeError("images_to_tensor: images differ in size");
        for (auto v : img->pixels) data.push_back(Scalar(2.0f * v - 1.0f));
    }
    return Tensor::from_data({std::int64_t(images.size()), 1, h, w}, std::move(data));
}

Tensor image_to_tensor(const GrayImage& img) { return images_to_tensor({&img}); }

GrayImage tensor_to_image(const Tensor& t, std::int64_t index) {
    if (t.ndim() != 4 || t.dim(1) != 1) throw ShapeError("tensor_to_image: expected [N,1,H,W], got " + shape_str(t.shape()));
    if (index < 0 || index >= t.dim(0)) throw ShapeError("tensor_to_image: index out of range");
    const int h = int(t.dim(2)), w = int(t.dim(3));
    GrayImage img(w, h);
    auto src = t.data().subspan(std::size_t(index) * std::size_t(w) * std::size_t(h));
    for (std::size_t i = 0; i < img.size(); ++i) img.pixels[i] = std::clamp(float((src[i] + 1) / 2), 0.0f, 1.0f);
    return img;
}

}  // namespace docbin
