#pragma once

// Differentiable operators over docbin::Tensor. Image tensors follow the
// N,C,H,W convention.

#include "docbin/tensor.hpp"

namespace docbin {

struct Conv2dOptions {
    int stride = 1;
    int padding = 0;
};

struct ConvTranspose2dOptions {
    int stride = 1;
    int padding = 0;
    /// Extra rows/columns added on the bottom/right of the output, < stride.
    int output_padding = 0;
};

/// weight [Cout,Cin,k,k], bias [Cout] (may be undefined).
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt = {});

/// weight [Cin,Cout,k,k], bias [Cout] (may be undefined).
/// H' = (H-1)*stride - 2*padding + k + output_padding.
Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        ConvTranspose2dOptions opt = {});

/// Running statistics owned by a batch-norm layer. Updated in place during
/// training-mode forward passes.
struct BatchNormStats {
    Tensor running_mean;
    Tensor running_var;
    static BatchNormStats init(std::int64_t channels);
};

enum class Mode { Train, Eval };

inline constexpr Scalar kBatchNormEps = Scalar(1e-5);
inline constexpr Scalar kBatchNormMomentum = Scalar(0.1);

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  Mode mode, Scalar momentum = kBatchNormMomentum, Scalar eps = kBatchNormEps);

inline constexpr Scalar kLeakySlope = Scalar(0.2);

Tensor leaky_relu(const Tensor& x, Scalar slope = kLeakySlope);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor slice_channels(const Tensor& x, std::int64_t start, std::int64_t count);

/// 2-D [m,k]x[k,n] or batched 3-D [b,m,k]x[b,k,n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose_last2(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& x, Scalar s);
Tensor mul_scalar(const Tensor& x, Scalar s);
Tensor square(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline constexpr Scalar kLogEps = Scalar(1e-8);
/// log(x + eps).
Tensor log_eps(const Tensor& x, Scalar eps = kLogEps);

/// Throws NumericError naming `what` if any value is NaN or infinite.
void check_finite(const Tensor& t, const char* what);

}  // namespace docbin
