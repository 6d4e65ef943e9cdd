#include "docbin/ops.hpp"

// Tiny products would otherwise take Eigen's coefficient-wise path, whose
// reductions depend on buffer alignment; the packed GEMM kernel does not.
#define EIGEN_GEMM_TO_COEFFBASED_THRESHOLD 1
#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace docbin {

namespace {

using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

void require_rank(const Tensor& t, int rank, const char* op, const char* name) {
    if (t.ndim() != rank) {
        throw ShapeError(std::string(op) + ": " + name + " must be rank " + std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

// Patch geometry shared by im2col/col2im. The "image" is the larger side of a
// strided convolution and the "grid" the smaller one.
struct PatchGeometry {
    int channels, height, width, kernel, stride, pad, grid_h, grid_w;
    std::int64_t rows() const { return std::int64_t(channels) * kernel * kernel; }
    std::int64_t cols() const { return std::int64_t(grid_h) * grid_w; }
};

void im2col(const Scalar* img, const PatchGeometry& g, Scalar* col) {
    const std::int64_t ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        const Scalar* plane = img + std::int64_t(c) * g.height * g.width;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                Scalar* row = col + ((std::int64_t(c) * g.kernel + ki) * g.kernel + kj) * ncols;
                for (int oy = 0; oy < g.grid_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    Scalar* dst = row + std::int64_t(oy) * g.grid_w;
                    if (iy < 0 || iy >= g.height) {
                        std::fill(dst, dst + g.grid_w, Scalar(0));
                        continue;
                    }
                    const Scalar* src = plane + std::int64_t(iy) * g.width;
                    for (int ox = 0; ox < g.grid_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : Scalar(0);
                    }
                }
            }
        }
    }
}

void col2im_add(const Scalar* col, const PatchGeometry& g, Scalar* img) {
    const std::int64_t ncols = g.cols();
    for (int c = 0; c < g.channels; ++c) {
        Scalar* plane = img + std::int64_t(c) * g.height * g.width;
        for (int ki = 0; ki < g.kernel; ++ki) {
            for (int kj = 0; kj < g.kernel; ++kj) {
                const Scalar* row = col + ((std::int64_t(c) * g.kernel + ki) * g.kernel + kj) * ncols;
                for (int oy = 0; oy < g.grid_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ki;
                    if (iy < 0 || iy >= g.height) continue;
                    const Scalar* src = row + std::int64_t(oy) * g.grid_w;
                    Scalar* dst = plane + std::int64_t(iy) * g.width;
                    for (int ox = 0; ox < g.grid_w; ++ox) {
                        const int ix = ox * g.stride - g.pad + kj;
                        if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
    auto in = x.data();
    std::vector<Scalar> out(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
    auto y = std::make_shared<std::vector<Scalar>>(out);
    return Tensor::make_result(x.shape(), std::move(out), {x}, [x, y, df](std::span<const Scalar> g) {
        auto gx = x.grad_buffer();
        auto xv = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * df(xv[i], (*y)[i]);
    });
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, Conv2dOptions opt) {
    require_rank(input, 4, "conv2d", "input");
    require_rank(weight, 4, "conv2d", "weight");
    const auto n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto cout = weight.dim(0), k = weight.dim(2);
    require(weight.dim(1) == cin, "conv2d: weight in-channels " + std::to_string(weight.dim(1)) +
                                      " != input channels " + std::to_string(cin));
    require(weight.dim(3) == k, "conv2d: kernel must be square, got " + shape_str(weight.shape()));
    require(opt.stride >= 1, "conv2d: stride must be >= 1");
    require(opt.padding >= 0, "conv2d: padding must be >= 0");
    require(h + 2 * opt.padding >= k && w + 2 * opt.padding >= k,
            "conv2d: input " + shape_str(input.shape()) + " smaller than kernel " + std::to_string(k) +
                " with padding " + std::to_string(opt.padding));
    if (bias.defined()) {
        require(bias.ndim() == 1 && bias.dim(0) == cout,
                "conv2d: bias " + shape_str(bias.shape()) + " does not match out-channels " + std::to_string(cout));
    }
    const int ho = int((h + 2 * opt.padding - k) / opt.stride + 1);
    const int wo = int((w + 2 * opt.padding - k) / opt.stride + 1);
    const PatchGeometry geo{int(cin), int(h), int(w), int(k), opt.stride, opt.padding, ho, wo};
    const std::int64_t kk = geo.rows(), p = geo.cols();

    std::vector<Scalar> out(std::size_t(n * cout * p));
    std::vector<Scalar> col(std::size_t(kk * p));
    ConstMatMap wm(weight.data().data(), cout, kk);
    const Scalar* x = input.data().data();
    for (std::int64_t b = 0; b < n; ++b) {
        im2col(x + b * cin * h * w, geo, col.data());
        MatMap o(out.data() + b * cout * p, cout, p);
        o.noalias() = wm * ConstMatMap(col.data(), kk, p);
        if (bias.defined()) {
            for (std::int64_t c = 0; c < cout; ++c) o.row(c).array() += bias.data()[std::size_t(c)];
        }
    }

    return Tensor::make_result(
        {n, cout, ho, wo}, std::move(out), {input, weight, bias},
        [input, weight, bias, geo, n, cout, kk, p](std::span<const Scalar> g) {
            const std::int64_t in_stride = std::int64_t(geo.channels) * geo.height * geo.width;
            ConstMatMap wm(weight.data().data(), cout, kk);
            std::vector<Scalar> col(std::size_t(kk * p));
            if (input.requires_grad()) {
                auto gx = input.grad_buffer();
                for (std::int64_t b = 0; b < n; ++b) {
                    ConstMatMap go(g.data() + b * cout * p, cout, p);
                    MatMap(col.data(), kk, p).noalias() = wm.transpose() * go;
                    col2im_add(col.data(), geo, gx.data() + b * in_stride);
                }
            }
            if (weight.requires_grad()) {
                MatMap gw(weight.grad_buffer().data(), cout, kk);
                for (std::int64_t b = 0; b < n; ++b) {
                    im2col(input.data().data() + b * in_stride, geo, col.data());
                    ConstMatMap go(g.data() + b * cout * p, cout, p);
                    gw.noalias() += go * ConstMatMap(col.data(), kk, p).transpose();
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad_buffer();
                for (std::int64_t b = 0; b < n; ++b) {
                    for (std::int64_t c = 0; c < cout; ++c) {
                        // plain loop: Eigen's vectorized sum peels by address, which breaks bitwise repeatability
                        const Scalar* gp = g.data() + b * cout * p + c * p;
                        Scalar s = 0;
                        for (std::int64_t i = 0; i < p; ++i) s += gp[i];
                        gb[std::size_t(c)] += s;
                    }
                }
            }
        });
}

Tensor conv_transpose2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
                        ConvTranspose2dOptions opt) {
    require_rank(input, 4, "conv_transpose2d", "input");
    require_rank(weight, 4, "conv_transpose2d", "weight");
    const auto n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
    const auto cout = weight.dim(1), k = weight.dim(2);
    require(weight.dim(0) == cin, "conv_transpose2d: weight in-channels " + std::to_string(weight.dim(0)) +
                                      " != input channels " + std::to_string(cin));
    require(weight.dim(3) == k, "conv_transpose2d: kernel must be square, got " + shape_str(weight.shape()));
    require(opt.stride >= 1, "conv_transpose2d: stride must be >= 1");
    require(opt.padding >= 0, "conv_transpose2d: padding must be >= 0");
    require(opt.output_padding >= 0 && opt.output_padding < opt.stride,
            "conv_transpose2d: output_padding must be in [0, stride)");
    if (bias.defined()) {
        require(bias.ndim() == 1 && bias.dim(0) == cout, "conv_transpose2d: bias " + shape_str(bias.shape()) +
                                                             " does not match out-channels " + std::to_string(cout));
    }
    const auto ho = (h - 1) * opt.stride - 2 * opt.padding + k + opt.output_padding;
    const auto wo = (w - 1) * opt.stride - 2 * opt.padding + k + opt.output_padding;
    require(ho >= 1 && wo >= 1, "conv_transpose2d: empty output for input " + shape_str(input.shape()));
    // Adjoint of conv2d from the [cout,ho,wo] image onto the [cin,h,w] grid.
    const PatchGeometry geo{int(cout), int(ho), int(wo), int(k), opt.stride, opt.padding, int(h), int(w)};
    const std::int64_t kk = geo.rows(), p = geo.cols();
    const std::int64_t out_stride = cout * ho * wo;

    std::vector<Scalar> out(std::size_t(n * out_stride), Scalar(0));
    std::vector<Scalar> col(std::size_t(kk * p));
    ConstMatMap wt(weight.data().data(), cin, kk);
    for (std::int64_t b = 0; b < n; ++b) {
        ConstMatMap xb(input.data().data() + b * cin * p, cin, p);
        MatMap(col.data(), kk, p).noalias() = wt.transpose() * xb;
        Scalar* ob = out.data() + b * out_stride;
        col2im_add(col.data(), geo, ob);
        if (bias.defined()) {
            for (std::int64_t c = 0; c < cout; ++c) {
                const Scalar bv = bias.data()[std::size_t(c)];
                for (std::int64_t i = 0; i < ho * wo; ++i) ob[c * ho * wo + i] += bv;
            }
        }
    }

    return Tensor::make_result(
        {n, cout, ho, wo}, std::move(out), {input, weight, bias},
        [input, weight, bias, geo, n, cin, cout, kk, p, out_stride](std::span<const Scalar> g) {
            ConstMatMap wt(weight.data().data(), cin, kk);
            std::vector<Scalar> col(std::size_t(kk * p));
            const bool need_x = input.requires_grad();
            const bool need_w = weight.requires_grad();
            if (need_x || need_w) {
                for (std::int64_t b = 0; b < n; ++b) {
                    im2col(g.data() + b * out_stride, geo, col.data());
                    ConstMatMap gc(col.data(), kk, p);
                    if (need_x) {
                        MatMap gx(input.grad_buffer().data() + b * cin * p, cin, p);
                        gx.noalias() += wt * gc;
                    }
                    if (need_w) {
                        MatMap gw(weight.grad_buffer().data(), cin, kk);
                        ConstMatMap xb(input.data().data() + b * cin * p, cin, p);
                        gw.noalias() += xb * gc.transpose();
                    }
                }
            }
            if (bias.defined() && bias.requires_grad()) {
                auto gb = bias.grad_buffer();
                const std::int64_t plane = out_stride / cout;
                for (std::int64_t b = 0; b < n; ++b) {
                    for (std::int64_t c = 0; c < cout; ++c) {
                        const Scalar* gp = g.data() + b * out_stride + c * plane;
                        Scalar s = 0;
                        for (std::int64_t i = 0; i < plane; ++i) s += gp[i];
                        gb[std::size_t(c)] += s;
                    }
                }
            }
        });
}

BatchNormStats BatchNormStats::init(std::int64_t channels) {
    return {Tensor::zeros({channels}), Tensor::full({channels}, Scalar(1))};
}

Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats,
                  Mode mode, Scalar momentum, Scalar eps) {
    require_rank(input, 4, "batch_norm", "input");
    const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    require(gamma.numel() == c && beta.numel() == c,
            "batch_norm: gamma/beta length must equal channels " + std::to_string(c));
    require(stats.running_mean.numel() == c && stats.running_var.numel() == c,
            "batch_norm: running stats length must equal channels " + std::to_string(c));
    const std::int64_t m = n * hw;
    require(m >= 1, "batch_norm: N*H*W must be >= 1");

    auto x = input.data();
    auto xhat = std::make_shared<std::vector<Scalar>>(x.size());
    auto invstd = std::make_shared<std::vector<Scalar>>(std::size_t(c));
    std::vector<Scalar> out(x.size());

    for (std::int64_t ch = 0; ch < c; ++ch) {
        double mu, var;
        if (mode == Mode::Train) {
            double s = 0;
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t i = 0; i < hw; ++i) s += x[std::size_t((b * c + ch) * hw + i)];
            mu = s / double(m);
            double ss = 0;
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double d = x[std::size_t((b * c + ch) * hw + i)] - mu;
                    ss += d * d;
                }
            var = ss / double(m);
            const double unbiased = m > 1 ? ss / double(m - 1) : var;
            auto rm = stats.running_mean.mutable_data();
            auto rv = stats.running_var.mutable_data();
            rm[std::size_t(ch)] = Scalar((1 - momentum) * rm[std::size_t(ch)] + momentum * mu);
            rv[std::size_t(ch)] = Scalar((1 - momentum) * rv[std::size_t(ch)] + momentum * unbiased);
        } else {
            mu = stats.running_mean.data()[std::size_t(ch)];
            var = stats.running_var.data()[std::size_t(ch)];
        }
        const Scalar is = Scalar(1.0 / std::sqrt(var + double(eps)));
        (*invstd)[std::size_t(ch)] = is;
        const Scalar gm = gamma.data()[std::size_t(ch)], bt = beta.data()[std::size_t(ch)];
        for (std::int64_t b = 0; b < n; ++b) {
            for (std::int64_t i = 0; i < hw; ++i) {
                const auto idx = std::size_t((b * c + ch) * hw + i);
                const Scalar xh = Scalar((x[idx] - mu) * is);
                (*xhat)[idx] = xh;
                out[idx] = gm * xh + bt;
            }
        }
    }

    const bool train = mode == Mode::Train;
    return Tensor::make_result(
        input.shape(), std::move(out), {input, gamma, beta},
        [input, gamma, beta, xhat, invstd, n, c, hw, m, train](std::span<const Scalar> g) {
            std::vector<double> sum_g(std::size_t(c), 0.0), sum_gx(std::size_t(c), 0.0);
            for (std::int64_t b = 0; b < n; ++b)
                for (std::int64_t ch = 0; ch < c; ++ch)
                    for (std::int64_t i = 0; i < hw; ++i) {
                        const auto idx = std::size_t((b * c + ch) * hw + i);
                        sum_g[std::size_t(ch)] += g[idx];
                        sum_gx[std::size_t(ch)] += double(g[idx]) * (*xhat)[idx];
                    }
            if (gamma.requires_grad()) {
                auto gg = gamma.grad_buffer();
                for (std::int64_t ch = 0; ch < c; ++ch) gg[std::size_t(ch)] += Scalar(sum_gx[std::size_t(ch)]);
            }
            if (beta.requires_grad()) {
                auto gb = beta.grad_buffer();
                for (std::int64_t ch = 0; ch < c; ++ch) gb[std::size_t(ch)] += Scalar(sum_g[std::size_t(ch)]);
            }
            if (input.requires_grad()) {
                auto gx = input.grad_buffer();
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    const double scale = double(gamma.data()[std::size_t(ch)]) * (*invstd)[std::size_t(ch)];
                    const double mg = sum_g[std::size_t(ch)] / double(m);
                    const double mgx = sum_gx[std::size_t(ch)] / double(m);
                    for (std::int64_t b = 0; b < n; ++b)
                        for (std::int64_t i = 0; i < hw; ++i) {
                            const auto idx = std::size_t((b * c + ch) * hw + i);
                            const double gi = train ? (g[idx] - mg - (*xhat)[idx] * mgx) : double(g[idx]);
                            gx[idx] += Scalar(scale * gi);
                        }
                }
            }
        });
}

Tensor leaky_relu(const Tensor& x, Scalar slope) {
    return unary(
        x, [slope](Scalar v) { return v >= 0 ? v : slope * v; },
        [slope](Scalar v, Scalar) { return v >= 0 ? Scalar(1) : slope; });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, Scalar(0)); }

Tensor tanh(const Tensor& x) {
    return unary(
        x, [](Scalar v) { return std::tanh(v); }, [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor sigmoid(const Tensor& x) {
    return unary(
        x,
        [](Scalar v) {
            if (v >= 0) return Scalar(1) / (Scalar(1) + std::exp(-v));
            const Scalar e = std::exp(v);
            return e / (Scalar(1) + e);
        },
        [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_rank(a, 4, "concat_channels", "a");
    require_rank(b, 4, "concat_channels", "b");
    require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
            "concat_channels: N,H,W must match, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const auto n = a.dim(0), ca = a.dim(1), cb = b.dim(1), hw = a.dim(2) * a.dim(3);
    std::vector<Scalar> out(std::size_t(n * (ca + cb) * hw));
    for (std::int64_t i = 0; i < n; ++i) {
        auto da = a.data().subspan(std::size_t(i * ca * hw), std::size_t(ca * hw));
        auto db = b.data().subspan(std::size_t(i * cb * hw), std::size_t(cb * hw));
        auto dst = out.begin() + i * (ca + cb) * hw;
        std::copy(da.begin(), da.end(), dst);
        std::copy(db.begin(), db.end(), dst + ca * hw);
    }
    return Tensor::make_result({n, ca + cb, a.dim(2), a.dim(3)}, std::move(out), {a, b},
                               [a, b, n, ca, cb, hw](std::span<const Scalar> g) {
                                   for (std::int64_t i = 0; i < n; ++i) {
                                       auto src = g.subspan(std::size_t(i * (ca + cb) * hw));
                                       if (a.requires_grad()) {
                                           auto ga = a.grad_buffer();
                                           for (std::int64_t j = 0; j < ca * hw; ++j)
                                               ga[std::size_t(i * ca * hw + j)] += src[std::size_t(j)];
                                       }
                                       if (b.requires_grad()) {
                                           auto gb = b.grad_buffer();
                                           for (std::int64_t j = 0; j < cb * hw; ++j)
                                               gb[std::size_t(i * cb * hw + j)] += src[std::size_t(ca * hw + j)];
                                       }
                                   }
                               });
}

Tensor slice_channels(const Tensor& x, std::int64_t start, std::int64_t count) {
    require_rank(x, 4, "slice_channels", "x");
    const auto n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    require(start >= 0 && count >= 0 && start + count <= c,
            "slice_channels: range [" + std::to_string(start) + "," + std::to_string(start + count) +
                ") outside channels " + std::to_string(c));
    std::vector<Scalar> out(std::size_t(n * count * hw));
    for (std::int64_t i = 0; i < n; ++i) {
        auto src = x.data().subspan(std::size_t((i * c + start) * hw), std::size_t(count * hw));
        std::copy(src.begin(), src.end(), out.begin() + i * count * hw);
    }
    return Tensor::make_result({n, count, x.dim(2), x.dim(3)}, std::move(out), {x},
                               [x, n, c, hw, start, count](std::span<const Scalar> g) {
                                   auto gx = x.grad_buffer();
                                   for (std::int64_t i = 0; i < n; ++i)
                                       for (std::int64_t j = 0; j < count * hw; ++j)
                                           gx[std::size_t((i * c + start) * hw + j)] += g[std::size_t(i * count * hw + j)];
                               });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.ndim() == b.ndim() && (a.ndim() == 2 || a.ndim() == 3),
            "matmul: operands must both be rank 2 or rank 3, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    const bool batched = a.ndim() == 3;
    const std::int64_t batch = batched ? a.dim(0) : 1;
    if (batched) require(b.dim(0) == batch, "matmul: batch mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto m = a.dim(-2), k = a.dim(-1), nn = b.dim(-1);
    require(b.dim(-2) == k, "matmul: inner dimension " + std::to_string(k) + " vs " + std::to_string(b.dim(-2)));
    std::vector<Scalar> out(std::size_t(batch * m * nn));
    for (std::int64_t i = 0; i < batch; ++i) {
        MatMap(out.data() + i * m * nn, m, nn).noalias() =
            ConstMatMap(a.data().data() + i * m * k, m, k) * ConstMatMap(b.data().data() + i * k * nn, k, nn);
    }
    Shape shape = batched ? Shape{batch, m, nn} : Shape{m, nn};
    return Tensor::make_result(shape, std::move(out), {a, b}, [a, b, batch, m, k, nn](std::span<const Scalar> g) {
        for (std::int64_t i = 0; i < batch; ++i) {
            ConstMatMap go(g.data() + i * m * nn, m, nn);
            if (a.requires_grad()) {
                MatMap(a.grad_buffer().data() + i * m * k, m, k).noalias() +=
                    go * ConstMatMap(b.data().data() + i * k * nn, k, nn).transpose();
            }
            if (b.requires_grad()) {
                MatMap(b.grad_buffer().data() + i * k * nn, k, nn).noalias() +=
                    ConstMatMap(a.data().data() + i * m * k, m, k).transpose() * go;
            }
        }
    });
}

Tensor transpose_last2(const Tensor& x) {
    require(x.ndim() >= 2, "transpose_last2: rank must be >= 2, got " + shape_str(x.shape()));
    const auto r = x.dim(-2), c = x.dim(-1);
    const auto batch = x.numel() / (r * c);
    std::vector<Scalar> out(x.data().size());
    for (std::int64_t i = 0; i < batch; ++i)
        MatMap(out.data() + i * r * c, c, r) = ConstMatMap(x.data().data() + i * r * c, r, c).transpose();
    Shape shape = x.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    return Tensor::make_result(shape, std::move(out), {x}, [x, batch, r, c](std::span<const Scalar> g) {
        auto gx = x.grad_buffer();
        for (std::int64_t i = 0; i < batch; ++i)
            MatMap(gx.data() + i * r * c, r, c) += ConstMatMap(g.data() + i * r * c, c, r).transpose();
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(shape_numel(shape) == x.numel(),
            "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    return Tensor::make_result(std::move(shape), x.to_vector(), {x},
                               [x](std::span<const Scalar> g) { x.accumulate_grad(g); });
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto da = a.data(), db = b.data();
    std::vector<Scalar> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const Scalar> g) {
        if (a.requires_grad()) a.accumulate_grad(g);
        if (b.requires_grad()) b.accumulate_grad(g);
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto da = a.data(), db = b.data();
    std::vector<Scalar> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const Scalar> g) {
        if (a.requires_grad()) a.accumulate_grad(g);
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto da = a.data(), db = b.data();
    std::vector<Scalar> out(da.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    return Tensor::make_result(a.shape(), std::move(out), {a, b}, [a, b](std::span<const Scalar> g) {
        if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            auto db = b.data();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * db[i];
        }
        if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            auto da = a.data();
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * da[i];
        }
    });
}

Tensor add_scalar(const Tensor& x, Scalar s) {
    return unary(
        x, [s](Scalar v) { return v + s; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor mul_scalar(const Tensor& x, Scalar s) {
    return unary(
        x, [s](Scalar v) { return v * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor square(const Tensor& x) {
    return unary(
        x, [](Scalar v) { return v * v; }, [](Scalar v, Scalar) { return 2 * v; });
}

Tensor sum(const Tensor& x) {
    double s = 0;
    for (auto v : x.data()) s += v;
    return Tensor::make_result({}, {Scalar(s)}, {x}, [x](std::span<const Scalar> g) {
        auto gx = x.grad_buffer();
        for (auto& v : gx) v += g[0];
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
    double s = 0;
    for (auto v : x.data()) s += v;
    const auto n = double(x.numel());
    return Tensor::make_result({}, {Scalar(s / n)}, {x}, [x, n](std::span<const Scalar> g) {
        auto gx = x.grad_buffer();
        const Scalar gv = Scalar(g[0] / n);
        for (auto& v : gx) v += gv;
    });
}

Tensor log_eps(const Tensor& x, Scalar eps) {
    return unary(
        x, [eps](Scalar v) { return std::log(v + eps); }, [eps](Scalar v, Scalar) { return Scalar(1) / (v + eps); });
}

void check_finite(const Tensor& t, const char* what) {
    for (auto v : t.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
    }
}

}  // namespace docbin
