#pragma once

// Texture augmentation network (two encoders, skip-connected decoder), the
// U-Net binarization generator, and the patch discriminator.

#include "docbin/ops.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace docbin {

struct NetConfig {
    int patch_size = 256;
    int base_channels = 64;

    /// log2(patch_size): number of stride-2 blocks that reduce a patch to 1x1.
    int depth() const;
    /// Encoder out-channels per block: base * {1,2,4,8,8,8,...}.
    std::vector<int> channels() const;
    /// Throws std::invalid_argument unless patch_size is a power of two >= 16.
    void validate() const;
};

struct Norm {
    Tensor gamma;
    Tensor beta;
    BatchNormStats stats;
};

struct ConvBlock {
    Tensor weight;
    Tensor bias;
    std::optional<Norm> norm;
};

struct TANetParams {
    NetConfig config;
    std::vector<ConvBlock> content;
    std::vector<ConvBlock> style;
    std::vector<ConvBlock> decoder;
};

struct BiNetParams {
    NetConfig config;
    std::vector<ConvBlock> encoder;
    std::vector<ConvBlock> decoder;
};

struct DiscParams {
    NetConfig config;
    std::vector<ConvBlock> blocks;
};

/// Trainable tensors (weights, biases, gamma, beta) in a fixed order.
std::vector<NamedTensor> parameters(TANetParams& p, const std::string& prefix = "tanet");
std::vector<NamedTensor> parameters(BiNetParams& p, const std::string& prefix = "binet");
std::vector<NamedTensor> parameters(DiscParams& p, const std::string& prefix = "disc");
/// Batch-norm running statistics.
std::vector<NamedTensor> buffers(TANetParams& p, const std::string& prefix = "tanet");
std::vector<NamedTensor> buffers(BiNetParams& p, const std::string& prefix = "binet");
std::vector<NamedTensor> buffers(DiscParams& p, const std::string& prefix = "disc");

std::vector<Tensor> tensors_of(const std::vector<NamedTensor>& named);

template <class Params>
void set_trainable(Params& p, bool on) {
    for (auto& nt : parameters(p)) nt.tensor.set_requires_grad(on);
}

/// Weights ~ N(0, 0.02), biases 0, gamma 1, beta 0. Deterministic in `seed`.
TANetParams init_tanet(const NetConfig& config, std::uint64_t seed);
BiNetParams init_binet(const NetConfig& config, std::uint64_t seed);
DiscParams init_disc(const NetConfig& config, std::uint64_t seed);

/// I_g = G(I_c, I_r). Inputs [N,1,s,s] in [-1,1]; output in (-1,1).
Tensor tanet_forward(TANetParams& params, const Tensor& clean, const Tensor& reference, Mode mode);

/// I_b = F(I_g). Input [N,1,s,s]; output in (-1,1), ink towards -1.
Tensor binet_forward(BiNetParams& params, const Tensor& noisy, Mode mode);

/// Per-location real/fake probabilities [N,1,h,w]; h = w = s/8 for strides 2,2,2,1,1.
Tensor disc_forward(DiscParams& params, const Tensor& image, Mode mode);

/// Deep copy (fresh storage) of a parameter set.
TANetParams clone(const TANetParams& p);
BiNetParams clone(const BiNetParams& p);
DiscParams clone(const DiscParams& p);

}  // namespace docbin
