#pragma once

#include "docbin/ops.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace docbin {

/// Frozen convolutional feature stack whose per-stage activations feed the
/// gram-matrix texture loss. The default is five random-weight 3x3 stages
/// (64,128,256,512,512 channels, stride 2 between stages) standing in for
/// conv1_1..conv5_1; real weights can be loaded from a checkpoint file.
class FeatureExtractor {
public:
    static constexpr std::uint64_t kDefaultSeed = 0xD1BC0;
    static std::vector<int> default_channels() { return {64, 128, 256, 512, 512}; }

    explicit FeatureExtractor(std::vector<int> channels = default_channels(), std::uint64_t seed = kDefaultSeed,
                              int in_channels = 1);

    /// Explicit weights, stage i: weight [C_i, C_{i-1}, k, k], bias [C_i].
    FeatureExtractor(std::vector<Tensor> weights, std::vector<Tensor> biases);

    /// Reads tensors named "extractor.<i>.weight" / "extractor.<i>.bias" from a
    /// checkpoint-format file.
    static FeatureExtractor from_checkpoint(const std::string& path);

    /// One feature map per stage, in order.
    std::vector<Tensor> features(const Tensor& image) const;

    std::size_t stages() const { return weights_.size(); }
    const Tensor& weight(std::size_t i) const { return weights_.at(i); }
    const Tensor& bias(std::size_t i) const { return biases_.at(i); }

private:
    std::vector<Tensor> weights_;
    std::vector<Tensor> biases_;
};

struct LossWeights {
    double lambda_s = 0.5;
    double lambda_c = 10.0;
    double lambda_l2 = 100.0;
    void validate() const;
};

/// [N,C,H,W] -> [N,C,C], G_ij = sum_k F_ik F_jk / (C*H*W).
Tensor gram_matrix(const Tensor& features);

/// Sum over extractor stages of the mean squared gram-matrix difference.
Tensor style_loss(const FeatureExtractor& extractor, const Tensor& generated, const Tensor& reference);

struct MaskedLoss {
    Tensor value;
    /// True when the mask selected no pixel; value is then 0.
    bool empty_mask = false;
};

/// sum((M*clean - M*generated)^2) / numel. Mask values in {0,1}.
MaskedLoss content_loss_masked(const Tensor& clean, const Tensor& generated, const Tensor& mask);

/// -mean log(d_real + eps) - mean log(1 - d_fake + eps).
Tensor gan_loss_discriminator(const Tensor& d_real, const Tensor& d_fake);

/// Non-saturating generator term: -mean log(d_fake + eps).
Tensor gan_loss_generator(const Tensor& d_fake);

/// Mean squared pixel difference.
Tensor l2_loss(const Tensor& target, const Tensor& prediction);

Tensor tanet_total(const Tensor& adv, const Tensor& style, const Tensor& content, const LossWeights& w);
Tensor binet_total(const Tensor& adv, const Tensor& l2, const LossWeights& w);

}  // namespace docbin
