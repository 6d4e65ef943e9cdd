#include "docbin/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace docbin {

namespace {

template <class T>
void put_le(std::string& out, T value) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(value);
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((u >> (8 * i)) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& bytes) : bytes_(bytes) {}

    template <class T>
    T le() {
        need(sizeof(T), "integer");
        using U = std::make_unsigned_t<T>;
        U u = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) u |= U(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        return static_cast<T>(u);
    }

    std::string take(std::uint64_t n, const char* what) {
        need(n, what);
        std::string s = bytes_.substr(pos_, std::size_t(n));
        pos_ += std::size_t(n);
        return s;
    }

    std::size_t pos() const { return pos_; }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::uint64_t n, const char* what) {
        if (n > bytes_.size() - pos_) {
            throw CheckpointError(std::string("truncated checkpoint while reading ") + what + " at byte " +
                                  std::to_string(pos_));
        }
    }

    const std::string& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::optional<Tensor> TensorFile::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return t.tensor;
    return std::nullopt;
}

void TensorFile::add(std::string name, const Tensor& t) { tensors.push_back({std::move(name), t}); }

std::string serialize_tensor_file(const TensorFile& file) {
    std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
    put_le<std::uint32_t>(out, kCheckpointVersion);
    const std::string meta = file.meta.dump();
    put_le<std::uint64_t>(out, meta.size());
    out += meta;
    put_le<std::uint64_t>(out, file.tensors.size());
    for (const auto& [name, t] : file.tensors) {
        put_le<std::uint32_t>(out, std::uint32_t(name.size()));
        out += name;
        put_le<std::uint32_t>(out, std::uint32_t(t.ndim()));
        for (auto d : t.shape()) put_le<std::int64_t>(out, d);
        for (auto v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return out;
}

TensorFile parse_tensor_file(const std::string& bytes) {
    Reader r(bytes);
    if (bytes.size() < sizeof(kCheckpointMagic) ||
        std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
        throw CheckpointError("bad checkpoint magic at byte 0");
    }
    r.take(sizeof(kCheckpointMagic), "magic");
    const auto version = r.le<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    }
    TensorFile file;
    const auto meta_len = r.le<std::uint64_t>();
    const auto meta_at = r.pos();
    try {
        file.meta = nlohmann::json::parse(r.take(meta_len, "metadata"));
    } catch (const nlohmann::json::parse_error& e) {
        throw CheckpointError("malformed checkpoint metadata at byte " + std::to_string(meta_at) + ": " + e.what());
    }
    const auto count = r.le<std::uint64_t>();
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto name_len = r.le<std::uint32_t>();
        std::string name = r.take(name_len, "tensor name");
        const auto ndim = r.le<std::uint32_t>();
        if (ndim > 8) throw CheckpointError("tensor '" + name + "' has implausible rank " + std::to_string(ndim));
        Shape shape;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            const auto e = r.le<std::int64_t>();
            if (e < 0) throw CheckpointError("tensor '" + name + "' has negative extent");
            shape.push_back(e);
        }
        const auto n = shape_numel(shape);
        const std::string raw = r.take(std::uint64_t(n) * 4, "tensor data");
        std::vector<Scalar> values(static_cast<std::size_t>(n));
        for (std::int64_t j = 0; j < n; ++j) {
            std::uint32_t u = 0;
            for (int b = 0; b < 4; ++b) u |= std::uint32_t(static_cast<unsigned char>(raw[std::size_t(j * 4 + b)])) << (8 * b);
            values[std::size_t(j)] = Scalar(std::bit_cast<float>(u));
        }
        file.tensors.push_back({std::move(name), Tensor::from_data(std::move(shape), std::move(values))});
    }
    if (!r.done()) throw CheckpointError("trailing bytes after tensor table at byte " + std::to_string(r.pos()));
    return file;
}

void write_tensor_file(const std::string& path, const TensorFile& file) {
    const std::string bytes = serialize_tensor_file(file);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot open " + path + " for writing");
    os.write(bytes.data(), std::streamsize(bytes.size()));
    if (!os) throw CheckpointError("write failed for " + path);
}

TensorFile read_tensor_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("cannot open checkpoint " + path);
    std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_tensor_file(bytes);
}

}  // namespace docbin
