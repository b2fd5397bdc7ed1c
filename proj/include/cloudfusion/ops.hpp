#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "cloudfusion/error.hpp"
#include "cloudfusion/tensor.hpp"

namespace cloudfusion {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

inline void require_same_shape(const Shape& a, const Shape& b, const char* op) {
    if (a == b) return;
    std::string msg = std::string(op) + ": shape mismatch on axes";
    const char* names[] = {"batch", "channels", "height", "width"};
    std::size_t av[] = {a.n, a.c, a.h, a.w};
    std::size_t bv[] = {b.n, b.c, b.h, b.w};
    for (int i = 0; i < 4; ++i) {
        if (av[i] != bv[i]) {
            msg += std::string(" ") + names[i] + "(" + std::to_string(av[i]) + " vs " +
                   std::to_string(bv[i]) + ")";
        }
    }
    throw DimensionError(msg);
}

template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
    std::vector<T> out(x.numel());
    auto xs = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xs[i]);
    return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [x, df](Node<T>& self) mutable {
        if (!x.requires_grad()) return;
        auto g = x.grad();
        auto xs = x.data();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * df(xs[i], self.data[i]);
    });
}

/// Convolution geometry of one image: C x H x W input, kernel kh x kw, output grid Ho x Wo.
struct ConvGeom {
    std::size_t c, h, w, kh, kw, stride, pad, ho, wo;
    std::size_t rows() const { return c * kh * kw; }
    std::size_t cols() const { return ho * wo; }
};

template <typename T>
void im2col(const T* img, const ConvGeom& g, T* cols) {
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    const std::size_t ncol = g.cols();
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                T* row = cols + ((c * g.kh + ki) * g.kw + kj) * ncol;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                    T* dst = row + oy * g.wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + g.wo, T(0));
                        continue;
                    }
                    const T* src = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                            static_cast<std::ptrdiff_t>(g.pad);
                        dst[ox] = (ix < 0 || ix >= W) ? T(0) : src[ix];
                    }
                }
            }
        }
    }
}

/// Adjoint of im2col: scatters (accumulates) columns back into the image.
template <typename T>
void col2im(const T* cols, const ConvGeom& g, T* img) {
    const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
    const std::size_t ncol = g.cols();
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const T* row = cols + ((c * g.kh + ki) * g.kw + kj) * ncol;
                for (std::size_t oy = 0; oy < g.ho; ++oy) {
                    std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                                        static_cast<std::ptrdiff_t>(g.pad);
                    if (iy < 0 || iy >= H) continue;
                    const T* src = row + oy * g.wo;
                    T* dst = img + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
                    for (std::size_t ox = 0; ox < g.wo; ++ox) {
                        std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                                            static_cast<std::ptrdiff_t>(g.pad);
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t channels, const char* op) {
    if (bias.defined() && bias.numel() != channels) {
        throw DimensionError(std::string(op) + ": bias has " + std::to_string(bias.numel()) +
                             " values but output channels (axis 1) = " + std::to_string(channels));
    }
}

}  // namespace detail

// ---- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "add");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                  [a, b](detail::Node<T>& self) mutable {
                                      for (const Tensor<T>* t : {&a, &b}) {
                                          if (!t->requires_grad()) continue;
                                          auto g = t->grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "sub");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                  [a, b](detail::Node<T>& self) mutable {
                                      if (a.requires_grad()) {
                                          auto g = a.grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                                      }
                                      if (b.requires_grad()) {
                                          auto g = b.grad();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape(a.shape(), b.shape(), "mul");
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return Tensor<T>::make_result(a.shape(), std::move(out), {a, b},
                                  [a, b](detail::Node<T>& self) mutable {
                                      if (a.requires_grad()) {
                                          auto g = a.grad();
                                          auto bv = b.data();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
                                      }
                                      if (b.requires_grad()) {
                                          auto g = b.grad();
                                          auto av = a.data();
                                          for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
                                      }
                                  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T s) {
    return detail::unary(x, [s](T v) { return v * s; }, [s](T, T) { return s; });
}

/// 1 - x, used for mask complements.
template <typename T>
Tensor<T> one_minus(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return T(1) - v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return v > T(0) ? v : T(0); },
                         [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
    return detail::unary(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                         [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary(
        x, [](T v) { return T(1) / (T(1) + std::exp(-v)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return std::abs(v); },
                         [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
    return detail::unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// atanh of x clipped to [-(1-eps), 1-eps]; zero gradient where clipping is active.
template <typename T>
Tensor<T> atanh_clamped(const Tensor<T>& x, T eps = T(1e-6)) {
    const T hi = T(1) - eps;
    return detail::unary(
        x, [hi](T v) { return std::atanh(std::clamp(v, -hi, hi)); },
        [hi](T v, T) { return (v > -hi && v < hi) ? T(1) / (T(1) - v * v) : T(0); });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.data()) total += v;
    return Tensor<T>::make_result(Shape{1, 1, 1, 1}, {total}, {x}, [x](detail::Node<T>& self) mutable {
        if (!x.requires_grad()) return;
        for (T& g : x.grad()) g += self.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw ContractError("mean of empty tensor");
    T total = T(0);
    for (T v : x.data()) total += v;
    const T inv = T(1) / static_cast<T>(x.numel());
    return Tensor<T>::make_result(Shape{1, 1, 1, 1}, {total * inv}, {x},
                                  [x, inv](detail::Node<T>& self) mutable {
                                      if (!x.requires_grad()) return;
                                      for (T& g : x.grad()) g += self.grad[0] * inv;
                                  });
}

// ---- channel plumbing ------------------------------------------------------

/// Repeats a single-channel tensor across `channels` channels.
template <typename T>
Tensor<T> broadcast_channels(const Tensor<T>& x, std::size_t channels) {
    const Shape s = x.shape();
    if (s.c != 1) {
        throw DimensionError("broadcast_channels: channels (axis 1) must be 1, got " +
                             std::to_string(s.c));
    }
    Shape out_shape{s.n, channels, s.h, s.w};
    std::vector<T> out(out_shape.numel());
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t c = 0; c < channels; ++c)
            std::copy_n(x.data().begin() + n * plane, plane, out.begin() + (n * channels + c) * plane);
    return Tensor<T>::make_result(out_shape, std::move(out), {x},
                                  [x, channels, plane, s](detail::Node<T>& self) mutable {
                                      if (!x.requires_grad()) return;
                                      auto g = x.grad();
                                      for (std::size_t n = 0; n < s.n; ++n)
                                          for (std::size_t c = 0; c < channels; ++c)
                                              for (std::size_t i = 0; i < plane; ++i)
                                                  g[n * plane + i] += self.grad[(n * channels + c) * plane + i];
                                  });
}

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("concat_channels: no inputs");
    Shape s = parts[0].shape();
    std::size_t total_c = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
            detail::require_same_shape(Shape{ps.n, s.c, ps.h, ps.w}, s, "concat_channels");
        }
        total_c += ps.c;
    }
    Shape out_shape{s.n, total_c, s.h, s.w};
    std::vector<T> out(out_shape.numel());
    const std::size_t plane = s.plane();
    for (std::size_t n = 0; n < s.n; ++n) {
        std::size_t offset = 0;
        for (const auto& p : parts) {
            const std::size_t block = p.shape().c * plane;
            std::copy_n(p.data().begin() + n * block, block,
                        out.begin() + (n * total_c) * plane + offset);
            offset += block;
        }
    }
    return Tensor<T>::make_result(out_shape, std::move(out), parts,
                                  [parts, total_c, plane, s](detail::Node<T>& self) mutable {
                                      for (std::size_t n = 0; n < s.n; ++n) {
                                          std::size_t offset = 0;
                                          for (auto& p : parts) {
                                              const std::size_t block = p.shape().c * plane;
                                              if (p.requires_grad()) {
                                                  auto g = p.grad();
                                                  const T* src = self.grad.data() + n * total_c * plane + offset;
                                                  for (std::size_t i = 0; i < block; ++i) g[n * block + i] += src[i];
                                              }
                                              offset += block;
                                          }
                                      }
                                  });
}

// ---- convolutions ----------------------------------------------------------

/// Zero-padded 2-D convolution. weight: (out_ch, in_ch, kh, kw); bias: out_ch values or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
    const Shape xs = x.shape(), ws = weight.shape();
    if (stride < 1) throw ParameterError("conv2d: stride must be >= 1");
    if (xs.c != ws.c) {
        throw DimensionError("conv2d: input channels (x axis 1) = " + std::to_string(xs.c) +
                             " but weight in_channels (weight axis 1) = " + std::to_string(ws.c));
    }
    if (xs.h + 2 * pad < ws.h || xs.w + 2 * pad < ws.w) {
        throw DimensionError("conv2d: padded input " + std::to_string(xs.h + 2 * pad) + "x" +
                             std::to_string(xs.w + 2 * pad) + " (axes 2,3) smaller than kernel " +
                             std::to_string(ws.h) + "x" + std::to_string(ws.w));
    }
    detail::check_bias(bias, ws.n, "conv2d");

    detail::ConvGeom g{xs.c, xs.h, xs.w, ws.h, ws.w, stride, pad,
                       (xs.h + 2 * pad - ws.h) / stride + 1, (xs.w + 2 * pad - ws.w) / stride + 1};
    const std::size_t out_c = ws.n;
    Shape out_shape{xs.n, out_c, g.ho, g.wo};
    std::vector<T> out(out_shape.numel());
    std::vector<T> cols(xs.n * g.rows() * g.cols());

    detail::ConstMatMap<T> wm(weight.data().data(), out_c, g.rows());
    for (std::size_t n = 0; n < xs.n; ++n) {
        T* cn = cols.data() + n * g.rows() * g.cols();
        detail::im2col(x.data().data() + n * xs.c * xs.h * xs.w, g, cn);
        detail::MatMap<T> ym(out.data() + n * out_c * g.cols(), out_c, g.cols());
        ym.noalias() = wm * detail::ConstMatMap<T>(cn, g.rows(), g.cols());
        if (bias.defined()) {
            for (std::size_t o = 0; o < out_c; ++o) ym.row(o).array() += bias.data()[o];
        }
    }

    return Tensor<T>::make_result(
        out_shape, std::move(out), {x, weight, bias},
        [x, weight, bias, g, out_c, cols = std::move(cols)](detail::Node<T>& self) mutable {
            const Shape xs = x.shape();
            detail::ConstMatMap<T> wm(weight.data().data(), out_c, g.rows());
            std::vector<T> dcols(weight.requires_grad() || x.requires_grad() ? g.rows() * g.cols() : 0);
            for (std::size_t n = 0; n < xs.n; ++n) {
                detail::ConstMatMap<T> dy(self.grad.data() + n * out_c * g.cols(), out_c, g.cols());
                detail::ConstMatMap<T> cn(cols.data() + n * g.rows() * g.cols(), g.rows(), g.cols());
                if (weight.requires_grad()) {
                    detail::MatMap<T> dw(weight.grad().data(), out_c, g.rows());
                    dw.noalias() += dy * cn.transpose();
                }
                if (bias.defined() && bias.requires_grad()) {
                    auto db = bias.grad();
                    for (std::size_t o = 0; o < out_c; ++o) db[o] += dy.row(o).sum();
                }
                if (x.requires_grad()) {
                    detail::MatMap<T> dc(dcols.data(), g.rows(), g.cols());
                    dc.noalias() = wm.transpose() * dy;
                    detail::col2im(dcols.data(), g, x.grad().data() + n * xs.c * xs.h * xs.w);
                }
            }
        });
}

/// Transposed convolution (adjoint of conv2d w.r.t. its input).
/// weight: (in_ch, out_ch, kh, kw); output size (H-1)*stride - 2*pad + kh + out_pad.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                            std::size_t stride, std::size_t pad, std::size_t out_pad) {
    const Shape xs = x.shape(), ws = weight.shape();
    if (stride < 1) throw ParameterError("transposed_conv2d: stride must be >= 1");
    if (out_pad >= stride) {
        throw ParameterError("transposed_conv2d: out_pad (" + std::to_string(out_pad) +
                             ") must be smaller than stride (" + std::to_string(stride) + ")");
    }
    if (xs.c != ws.n) {
        throw DimensionError("transposed_conv2d: input channels (x axis 1) = " + std::to_string(xs.c) +
                             " but weight in_channels (weight axis 0) = " + std::to_string(ws.n));
    }
    const std::ptrdiff_t ho = static_cast<std::ptrdiff_t>((xs.h - 1) * stride + ws.h + out_pad) -
                              static_cast<std::ptrdiff_t>(2 * pad);
    const std::ptrdiff_t wo = static_cast<std::ptrdiff_t>((xs.w - 1) * stride + ws.w + out_pad) -
                              static_cast<std::ptrdiff_t>(2 * pad);
    if (xs.h == 0 || xs.w == 0 || ho <= 0 || wo <= 0) {
        throw DimensionError("transposed_conv2d: empty output for input " + xs.str());
    }
    const std::size_t out_c = ws.c;
    detail::check_bias(bias, out_c, "transposed_conv2d");

    // geometry of the *output* image seen as a conv input; its grid is the input's H x W
    detail::ConvGeom g{out_c, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo), ws.h, ws.w,
                       stride, pad, xs.h, xs.w};
    Shape out_shape{xs.n, out_c, g.h, g.w};
    std::vector<T> out(out_shape.numel(), T(0));
    std::vector<T> cols(g.rows() * g.cols());
    detail::ConstMatMap<T> wm(weight.data().data(), xs.c, g.rows());
    for (std::size_t n = 0; n < xs.n; ++n) {
        detail::ConstMatMap<T> xm(x.data().data() + n * xs.c * g.cols(), xs.c, g.cols());
        detail::MatMap<T> cm(cols.data(), g.rows(), g.cols());
        cm.noalias() = wm.transpose() * xm;
        T* on = out.data() + n * out_c * g.h * g.w;
        detail::col2im(cols.data(), g, on);
        if (bias.defined()) {
            for (std::size_t o = 0; o < out_c; ++o)
                for (std::size_t i = 0; i < g.h * g.w; ++i) on[o * g.h * g.w + i] += bias.data()[o];
        }
    }

    return Tensor<T>::make_result(
        out_shape, std::move(out), {x, weight, bias},
        [x, weight, bias, g, out_c](detail::Node<T>& self) mutable {
            const Shape xs = x.shape();
            detail::ConstMatMap<T> wm(weight.data().data(), xs.c, g.rows());
            std::vector<T> dcols(g.rows() * g.cols());
            for (std::size_t n = 0; n < xs.n; ++n) {
                const T* dy = self.grad.data() + n * out_c * g.h * g.w;
                if (bias.defined() && bias.requires_grad()) {
                    auto db = bias.grad();
                    for (std::size_t o = 0; o < out_c; ++o)
                        for (std::size_t i = 0; i < g.h * g.w; ++i) db[o] += dy[o * g.h * g.w + i];
                }
                if (!x.requires_grad() && !weight.requires_grad()) continue;
                detail::im2col(dy, g, dcols.data());
                detail::ConstMatMap<T> dc(dcols.data(), g.rows(), g.cols());
                if (x.requires_grad()) {
                    detail::MatMap<T> dx(x.grad().data() + n * xs.c * g.cols(), xs.c, g.cols());
                    dx.noalias() += wm * dc;
                }
                if (weight.requires_grad()) {
                    detail::ConstMatMap<T> xm(x.data().data() + n * xs.c * g.cols(), xs.c, g.cols());
                    detail::MatMap<T> dw(weight.grad().data(), xs.c, g.rows());
                    dw.noalias() += xm * dc.transpose();
                }
            }
        });
}

// ---- normalization ---------------------------------------------------------

/// Per-(sample, channel) standardization over the spatial plane, population
/// variance, followed by a per-channel affine map. gamma/beta: one value per channel.
template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                        T eps = T(1e-5)) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    if (plane < 2) {
        throw DimensionError("instance_norm: spatial plane H*W (axes 2,3) = " + std::to_string(plane) +
                             " gives degenerate statistics");
    }
    if (gamma.numel() != s.c || beta.numel() != s.c) {
        throw DimensionError("instance_norm: gamma/beta need " + std::to_string(s.c) +
                             " values (channels, axis 1)");
    }
    std::vector<T> out(s.numel());
    std::vector<T> xhat(s.numel());
    std::vector<T> inv_std(s.n * s.c);
    for (std::size_t n = 0; n < s.n; ++n) {
        for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = (n * s.c + c) * plane;
            const T* xp = x.data().data() + base;
            T mu = T(0);
            for (std::size_t i = 0; i < plane; ++i) mu += xp[i];
            mu /= static_cast<T>(plane);
            T var = T(0);
            for (std::size_t i = 0; i < plane; ++i) var += (xp[i] - mu) * (xp[i] - mu);
            var /= static_cast<T>(plane);
            const T is = T(1) / std::sqrt(var + eps);
            inv_std[n * s.c + c] = is;
            for (std::size_t i = 0; i < plane; ++i) {
                xhat[base + i] = (xp[i] - mu) * is;
                out[base + i] = gamma.data()[c] * xhat[base + i] + beta.data()[c];
            }
        }
    }
    return Tensor<T>::make_result(
        s, std::move(out), {x, gamma, beta},
        [x, gamma, beta, s, plane, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](detail::Node<T>& self) mutable {
            for (std::size_t n = 0; n < s.n; ++n) {
                for (std::size_t c = 0; c < s.c; ++c) {
                    const std::size_t base = (n * s.c + c) * plane;
                    const T* dy = self.grad.data() + base;
                    const T* xh = xhat.data() + base;
                    T sum_dy = T(0), sum_dy_xh = T(0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        sum_dy += dy[i];
                        sum_dy_xh += dy[i] * xh[i];
                    }
                    if (beta.requires_grad()) beta.grad()[c] += sum_dy;
                    if (gamma.requires_grad()) gamma.grad()[c] += sum_dy_xh;
                    if (x.requires_grad()) {
                        const T gm = gamma.data()[c];
                        const T k = gm * inv_std[n * s.c + c] / static_cast<T>(plane);
                        auto gx = x.grad();
                        for (std::size_t i = 0; i < plane; ++i) {
                            gx[base + i] += k * (static_cast<T>(plane) * dy[i] - sum_dy - xh[i] * sum_dy_xh);
                        }
                    }
                }
            }
        });
}

/// Inverted dropout: survivors are scaled by 1/(1-p) at train time; identity otherwise.
template <typename T, typename Rng>
Tensor<T> dropout(const Tensor<T>& x, double p, bool train, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ParameterError("dropout: p must lie in [0, 1)");
    if (!train || p == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - p);
    const T scale = T(1) / static_cast<T>(1.0 - p);
    std::vector<T> mask(x.numel());
    for (T& m : mask) m = keep(rng) ? scale : T(0);
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    return Tensor<T>::make_result(x.shape(), std::move(out), {x},
                                  [x, mask = std::move(mask)](detail::Node<T>& self) mutable {
                                      if (!x.requires_grad()) return;
                                      auto g = x.grad();
                                      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
                                  });
}

/// Gram matrices of feature maps: (N,C,H,W) -> (N,1,C,C), normalized by C*H*W.
template <typename T>
Tensor<T> gram(const Tensor<T>& x) {
    const Shape s = x.shape();
    const std::size_t plane = s.plane();
    const T norm = T(1) / static_cast<T>(s.c * plane);
    Shape out_shape{s.n, 1, s.c, s.c};
    std::vector<T> out(out_shape.numel());
    for (std::size_t n = 0; n < s.n; ++n) {
        detail::ConstMatMap<T> f(x.data().data() + n * s.c * plane, s.c, plane);
        detail::MatMap<T> gm(out.data() + n * s.c * s.c, s.c, s.c);
        gm.noalias() = (f * f.transpose()) * norm;
    }
    return Tensor<T>::make_result(out_shape, std::move(out), {x},
                                  [x, s, plane, norm](detail::Node<T>& self) mutable {
                                      if (!x.requires_grad()) return;
                                      for (std::size_t n = 0; n < s.n; ++n) {
                                          detail::ConstMatMap<T> f(x.data().data() + n * s.c * plane, s.c, plane);
                                          detail::ConstMatMap<T> dg(self.grad.data() + n * s.c * s.c, s.c, s.c);
                                          detail::MatMap<T> dx(x.grad().data() + n * s.c * plane, s.c, plane);
                                          dx.noalias() += ((dg + dg.transpose()) * f) * norm;
                                      }
                                  });
}

// ---- spectral normalization ------------------------------------------------

template <typename T>
struct SpectralNormResult {
    Tensor<T> weight;     // W / sigma (or W itself when zero_norm)
    std::vector<T> u;     // updated left singular vector estimate
    T sigma = T(0);       // estimated top singular value
    bool zero_norm = false;
};

/// Divides a weight, viewed as an (out_ch, rest) matrix, by a power-iteration
/// estimate of its largest singular value. `u` is the persistent left vector
/// (length out_ch, unit norm). The gradient treats u and v as constants.
template <typename T>
SpectralNormResult<T> spectral_normalize(const Tensor<T>& weight, std::vector<T> u, int power_iters) {
    const std::size_t rows = weight.shape().n;
    if (rows == 0) throw DimensionError("spectral_normalize: empty weight");
    const std::size_t cols = weight.numel() / rows;
    if (u.size() != rows) {
        throw DimensionError("spectral_normalize: u has length " + std::to_string(u.size()) +
                             " but weight out_ch (axis 0) = " + std::to_string(rows));
    }
    if (power_iters < 0) throw ParameterError("spectral_normalize: power_iters must be >= 0");

    using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1>;
    Eigen::MatrixXd w = detail::ConstMatMap<T>(weight.data().data(), rows, cols).template cast<double>();
    Vec uv = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(u.data(), rows).template cast<double>();

    SpectralNormResult<T> res;
    auto finish_zero = [&] {
        res.weight = weight;
        res.u = std::move(u);
        res.sigma = T(0);
        res.zero_norm = true;
        return res;
    };
    Vec v;
    for (int it = 0; it < power_iters; ++it) {
        v = w.transpose() * uv;
        double nv = v.norm();
        if (nv == 0.0) return finish_zero();
        v /= nv;
        uv = w * v;
        double nu = uv.norm();
        if (nu == 0.0) return finish_zero();
        uv /= nu;
    }
    v = w.transpose() * uv;
    const double sigma = v.norm();
    if (sigma == 0.0 || !std::isfinite(sigma)) return finish_zero();
    v /= sigma;

    std::vector<T> out(weight.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(weight.data()[i] / sigma);
    std::vector<T> uvec(rows), vvec(cols);
    for (std::size_t i = 0; i < rows; ++i) uvec[i] = static_cast<T>(uv[i]);
    for (std::size_t j = 0; j < cols; ++j) vvec[j] = static_cast<T>(v[j]);
    const T sig = static_cast<T>(sigma);

    res.weight = Tensor<T>::make_result(
        weight.shape(), std::move(out), {weight},
        [weight, uvec, vvec, sig, rows, cols](detail::Node<T>& self) mutable {
            if (!weight.requires_grad()) return;
            // dW = (G - <G, W_sn> u v^T) / sigma
            T inner = T(0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) inner += self.grad[i] * self.data[i];
            auto g = weight.grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c)
                    g[r * cols + c] += (self.grad[r * cols + c] - inner * uvec[r] * vvec[c]) / sig;
        });
    res.u = std::move(uvec);
    res.sigma = sig;
    return res;
}

// ---- operators for readability in loss code --------------------------------

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& a) { return mul_scalar(a, s); }

}  // namespace cloudfusion
