#include "docbin/losses.hpp"

#include "docbin/checkpoint.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace docbin {

FeatureExtractor::FeatureExtractor(std::vector<int> channels, std::uint64_t seed, int in_channels) {
    if (channels.empty()) throw std::invalid_argument("FeatureExtractor needs at least one stage");
    std::mt19937_64 rng(seed);
    int in = in_channels;
    for (int out : channels) {
        // He-scaled so activations keep their magnitude through the ReLU stack.
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / (in * 9.0)));
        std::vector<Scalar> w(std::size_t(out) * std::size_t(in) * 9);
        for (auto& v : w) v = Scalar(normal(rng));
        weights_.push_back(Tensor::from_data({out, in, 3, 3}, std::move(w)));
        biases_.push_back(Tensor::zeros({out}));
        in = out;
    }
}

FeatureExtractor::FeatureExtractor(std::vector<Tensor> weights, std::vector<Tensor> biases)
    : weights_(std::move(weights)), biases_(std::move(biases)) {
    if (weights_.empty() || weights_.size() != biases_.size()) {
        throw std::invalid_argument("FeatureExtractor: need matching, non-empty weight and bias lists");
    }
    for (auto& w : weights_) w = w.detach();
    for (auto& b : biases_) b = b.detach();
}

FeatureExtractor FeatureExtractor::from_checkpoint(const std::string& path) {
    auto file = read_tensor_file(path);
    std::vector<Tensor> ws, bs;
    for (std::size_t i = 0;; ++i) {
        const std::string p = "extractor." + std::to_string(i) + ".";
        auto w = file.find(p + "weight");
        auto b = file.find(p + "bias");
        if (!w || !b) break;
        ws.push_back(*w);
        bs.push_back(*b);
    }
    if (ws.empty()) throw std::runtime_error("no extractor.<i>.weight tensors in " + path);
    return FeatureExtractor(std::move(ws), std::move(bs));
}

std::vector<Tensor> FeatureExtractor::features(const Tensor& image) const {
    std::vector<Tensor> out;
    Tensor h = image;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
        const int k = int(weights_[i].dim(2));
        h = relu(conv2d(h, weights_[i], biases_[i], {i == 0 ? 1 : 2, k / 2}));
        out.push_back(h);
    }
    return out;
}

void LossWeights::validate() const {
    if (lambda_s < 0 || lambda_c < 0 || lambda_l2 < 0) throw std::invalid_argument("loss weights must be >= 0");
}

Tensor gram_matrix(const Tensor& features) {
    if (features.ndim() != 4) throw ShapeError("gram_matrix: expected [N,C,H,W], got " + shape_str(features.shape()));
    const auto n = features.dim(0), c = features.dim(1), hw = features.dim(2) * features.dim(3);
    if (hw < 1) throw ShapeError("gram_matrix: empty spatial extent");
    auto v = reshape(features, {n, c, hw});
    return mul_scalar(matmul(v, transpose_last2(v)), Scalar(1.0 / double(c * hw)));
}

Tensor style_loss(const FeatureExtractor& extractor, const Tensor& generated, const Tensor& reference) {
    if (generated.shape() != reference.shape()) {
        throw ShapeError("style_loss: shape mismatch " + shape_str(generated.shape()) + " vs " +
                         shape_str(reference.shape()));
    }
    auto fg = extractor.features(generated);
    auto fr = extractor.features(reference);
    Tensor total;
    for (std::size_t l = 0; l < fg.size(); ++l) {
        auto term = mean(square(sub(gram_matrix(fg[l]), gram_matrix(fr[l]))));
        total = total.defined() ? add(total, term) : term;
    }
    return total;
}

MaskedLoss content_loss_masked(const Tensor& clean, const Tensor& generated, const Tensor& mask) {
    if (clean.shape() != generated.shape() || clean.shape() != mask.shape()) {
        throw ShapeError("content_loss_masked: shapes differ " + shape_str(clean.shape()) + ", " +
                         shape_str(generated.shape()) + ", " + shape_str(mask.shape()));
    }
    bool any = false;
    for (auto m : mask.data()) {
        if (m != 0 && m != 1) throw std::invalid_argument("content_loss_masked: mask values must be 0 or 1");
        any = any || m == 1;
    }
    auto diff = sub(mul(mask, clean), mul(mask, generated));
    return {mean(square(diff)), !any};
}

Tensor gan_loss_discriminator(const Tensor& d_real, const Tensor& d_fake) {
    auto real_term = mean(log_eps(d_real));
    auto fake_term = mean(log_eps(add_scalar(mul_scalar(d_fake, -1), 1)));
    return mul_scalar(add(real_term, fake_term), -1);
}

Tensor gan_loss_generator(const Tensor& d_fake) { return mul_scalar(mean(log_eps(d_fake)), -1); }

Tensor l2_loss(const Tensor& target, const Tensor& prediction) {
    if (target.shape() != prediction.shape()) {
        throw ShapeError("l2_loss: shape mismatch " + shape_str(target.shape()) + " vs " +
                         shape_str(prediction.shape()));
    }
    return mean(square(sub(target, prediction)));
}

Tensor tanet_total(const Tensor& adv, const Tensor& style, const Tensor& content, const LossWeights& w) {
    w.validate();
    return add(adv, add(mul_scalar(style, Scalar(w.lambda_s)), mul_scalar(content, Scalar(w.lambda_c))));
}

Tensor binet_total(const Tensor& adv, const Tensor& l2, const LossWeights& w) {
    w.validate();
    return add(adv, mul_scalar(l2, Scalar(w.lambda_l2)));
}

}  // namespace docbin
