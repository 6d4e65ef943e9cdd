#include "docbin/networks.hpp"

#include <bit>
#include <random>
#include <stdexcept>

namespace docbin {

namespace {

constexpr int kKernel = 5;
constexpr int kPad = 2;
constexpr double kInitStd = 0.02;

struct Initializer {
    std::mt19937_64 rng;
    std::normal_distribution<double> normal{0.0, kInitStd};

    Tensor weight(Shape shape) {
        std::vector<Scalar> v(std::size_t(shape_numel(shape)));
        for (auto& x : v) x = Scalar(normal(rng));
        return Tensor::from_data(std::move(shape), std::move(v), true);
    }

    ConvBlock conv(int in, int out, bool with_norm) {
        ConvBlock b{weight({out, in, kKernel, kKernel}), Tensor::zeros({out}, true), std::nullopt};
        if (with_norm) b.norm = make_norm(out);
        return b;
    }

    ConvBlock deconv(int in, int out, bool with_norm) {
        ConvBlock b{weight({in, out, kKernel, kKernel}), Tensor::zeros({out}, true), std::nullopt};
        if (with_norm) b.norm = make_norm(out);
        return b;
    }

    static Norm make_norm(int channels) {
        return Norm{Tensor::full({channels}, 1, true), Tensor::zeros({channels}, true), BatchNormStats::init(channels)};
    }
};

// First block sees raw pixels and the innermost block has a 1x1 map, so
// neither carries batch norm.
std::vector<ConvBlock> make_encoder(Initializer& init, const NetConfig& cfg) {
    const auto ch = cfg.channels();
    const int d = cfg.depth();
    std::vector<ConvBlock> blocks;
    for (int i = 0; i < d; ++i) {
        blocks.push_back(init.conv(i == 0 ? 1 : ch[std::size_t(i - 1)], ch[std::size_t(i)], i > 0 && i < d - 1));
    }
    return blocks;
}

std::vector<ConvBlock> make_decoder(Initializer& init, const NetConfig& cfg, int bottleneck_channels) {
    const auto ch = cfg.channels();
    const int d = cfg.depth();
    std::vector<ConvBlock> blocks;
    for (int j = 0; j < d; ++j) {
        const int in = j == 0 ? bottleneck_channels : 2 * ch[std::size_t(d - 1 - j)];
        const int out = j == d - 1 ? 1 : ch[std::size_t(d - 2 - j)];
        blocks.push_back(init.deconv(in, out, j < d - 1));
    }
    return blocks;
}

Tensor apply_norm(ConvBlock& b, Tensor h, Mode mode) {
    if (b.norm) h = batch_norm(h, b.norm->gamma, b.norm->beta, b.norm->stats, mode);
    return h;
}

Tensor encode_block(ConvBlock& b, const Tensor& x, Mode mode) {
    return leaky_relu(apply_norm(b, conv2d(x, b.weight, b.bias, {2, kPad}), mode));
}

std::vector<Tensor> run_encoder(std::vector<ConvBlock>& blocks, Tensor x, Mode mode) {
    std::vector<Tensor> feats;
    feats.reserve(blocks.size());
    for (auto& b : blocks) {
        x = encode_block(b, x, mode);
        feats.push_back(x);
    }
    return feats;
}

Tensor run_decoder(std::vector<ConvBlock>& blocks, Tensor h, const std::vector<Tensor>& skips, Mode mode) {
    const std::size_t d = blocks.size();
    for (std::size_t j = 0; j < d; ++j) {
        if (j > 0) h = concat_channels(h, skips[d - 1 - j]);
        h = conv_transpose2d(h, blocks[j].weight, blocks[j].bias, {2, kPad, 1});
        if (j + 1 < d) {
            h = leaky_relu(apply_norm(blocks[j], h, mode));
        } else {
            h = tanh(h);
        }
    }
    return h;
}

void check_image_input(const Tensor& x, const NetConfig& cfg, const char* what) {
    if (x.ndim() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.patch_size || x.dim(3) != cfg.patch_size) {
        throw ShapeError(std::string(what) + ": expected [N,1," + std::to_string(cfg.patch_size) + "," +
                         std::to_string(cfg.patch_size) + "], got " + shape_str(x.shape()));
    }
}

void collect(std::vector<ConvBlock>& blocks, const std::string& prefix, std::vector<NamedTensor>* params,
             std::vector<NamedTensor>* bufs) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const std::string p = prefix + "." + std::to_string(i) + ".";
        auto& b = blocks[i];
        if (params) {
            params->push_back({p + "weight", b.weight});
            params->push_back({p + "bias", b.bias});
            if (b.norm) {
                params->push_back({p + "gamma", b.norm->gamma});
                params->push_back({p + "beta", b.norm->beta});
            }
        }
        if (bufs && b.norm) {
            bufs->push_back({p + "running_mean", b.norm->stats.running_mean});
            bufs->push_back({p + "running_var", b.norm->stats.running_var});
        }
    }
}

std::vector<ConvBlock> clone_blocks(const std::vector<ConvBlock>& src) {
    std::vector<ConvBlock> out;
    for (const auto& b : src) {
        ConvBlock c{b.weight.clone(), b.bias.clone(), std::nullopt};
        if (b.norm) {
            c.norm = Norm{b.norm->gamma.clone(), b.norm->beta.clone(),
                          BatchNormStats{b.norm->stats.running_mean.clone(), b.norm->stats.running_var.clone()}};
        }
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace

int NetConfig::depth() const { return std::countr_zero(unsigned(patch_size)); }

std::vector<int> NetConfig::channels() const {
    std::vector<int> ch;
    for (int i = 0; i < depth(); ++i) ch.push_back(base_channels * (1 << std::min(i, 3)));
    return ch;
}

void NetConfig::validate() const {
    if (patch_size < 16 || !std::has_single_bit(unsigned(patch_size))) {
        throw std::invalid_argument("patch_size must be a power of two >= 16, got " + std::to_string(patch_size));
    }
    if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
}

std::vector<NamedTensor> parameters(TANetParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.content, prefix + ".content", &out, nullptr);
    collect(p.style, prefix + ".style", &out, nullptr);
    collect(p.decoder, prefix + ".decoder", &out, nullptr);
    return out;
}

std::vector<NamedTensor> parameters(BiNetParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.encoder, prefix + ".encoder", &out, nullptr);
    collect(p.decoder, prefix + ".decoder", &out, nullptr);
    return out;
}

std::vector<NamedTensor> parameters(DiscParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.blocks, prefix + ".blocks", &out, nullptr);
    return out;
}

std::vector<NamedTensor> buffers(TANetParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.content, prefix + ".content", nullptr, &out);
    collect(p.style, prefix + ".style", nullptr, &out);
    collect(p.decoder, prefix + ".decoder", nullptr, &out);
    return out;
}

std::vector<NamedTensor> buffers(BiNetParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.encoder, prefix + ".encoder", nullptr, &out);
    collect(p.decoder, prefix + ".decoder", nullptr, &out);
    return out;
}

std::vector<NamedTensor> buffers(DiscParams& p, const std::string& prefix) {
    std::vector<NamedTensor> out;
    collect(p.blocks, prefix + ".blocks", nullptr, &out);
    return out;
}

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named) {
    std::vector<Tensor> out;
    out.reserve(named.size());
    for (const auto& n : named) out.push_back(n.tensor);
    return out;
}

TANetParams init_tanet(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init{std::mt19937_64(seed)};
    TANetParams p{config, {}, {}, {}};
    p.content = make_encoder(init, config);
    p.style = make_encoder(init, config);
    p.decoder = make_decoder(init, config, 2 * config.channels().back());
    return p;
}

BiNetParams init_binet(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init{std::mt19937_64(seed)};
    BiNetParams p{config, {}, {}};
    p.encoder = make_encoder(init, config);
    p.decoder = make_decoder(init, config, config.channels().back());
    return p;
}

DiscParams init_disc(const NetConfig& config, std::uint64_t seed) {
    config.validate();
    Initializer init{std::mt19937_64(seed)};
    const int b = config.base_channels;
    const int ch[] = {b, 2 * b, 4 * b, 8 * b, 1};
    DiscParams p{config, {}};
    int in = 1;
    for (int i = 0; i < 5; ++i) {
        p.blocks.push_back(init.conv(in, ch[i], i > 0 && i < 4));
        in = ch[i];
    }
    return p;
}

Tensor tanet_forward(TANetParams& params, const Tensor& clean, const Tensor& reference, Mode mode) {
    check_image_input(clean, params.config, "tanet_forward(clean)");
    check_image_input(reference, params.config, "tanet_forward(reference)");
    if (clean.dim(0) != reference.dim(0)) throw ShapeError("tanet_forward: clean/reference batch sizes differ");
    auto content = run_encoder(params.content, clean, mode);
    auto style = run_encoder(params.style, reference, mode);
    // Both latents are 1x1; the mixed representation is their channel concat.
    auto mixed = concat_channels(content.back(), style.back());
    return run_decoder(params.decoder, mixed, content, mode);
}

Tensor binet_forward(BiNetParams& params, const Tensor& noisy, Mode mode) {
    check_image_input(noisy, params.config, "binet_forward");
    auto feats = run_encoder(params.encoder, noisy, mode);
    return run_decoder(params.decoder, feats.back(), feats, mode);
}

Tensor disc_forward(DiscParams& params, const Tensor& image, Mode mode) {
    check_image_input(image, params.config, "disc_forward");
    static constexpr int kStrides[] = {2, 2, 2, 1, 1};
    Tensor h = image;
    for (std::size_t i = 0; i < params.blocks.size(); ++i) {
        auto& b = params.blocks[i];
        h = apply_norm(b, conv2d(h, b.weight, b.bias, {kStrides[i], kPad}), mode);
        h = i + 1 < params.blocks.size() ? leaky_relu(h) : sigmoid(h);
    }
    return h;
}

TANetParams clone(const TANetParams& p) {
    return {p.config, clone_blocks(p.content), clone_blocks(p.style), clone_blocks(p.decoder)};
}

BiNetParams clone(const BiNetParams& p) { return {p.config, clone_blocks(p.encoder), clone_blocks(p.decoder)}; }

DiscParams clone(const DiscParams& p) { return {p.config, clone_blocks(p.blocks)}; }

}  // namespace docbin
