#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fedstress/errors.hpp"
#include "fedstress/tensor.hpp"

namespace fedstress {

enum class Mode { Train, Eval };

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// ---------------------------------------------------------------------------
// conv2d, same padding, stride 1, odd kernel. Lowered to one GEMM per sample
// through an im2col buffer.
// ---------------------------------------------------------------------------

template <typename T>
void im2col(const T* in, int C, int H, int W, int k, T* col) {
    const int pad = k / 2;
    const int HW = H * W;
    T* out = col;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int dy = ky - pad, dx = kx - pad;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) {
                        for (int x = 0; x < W; ++x) *out++ = T(0);
                        continue;
                    }
                    const T* row = in + (static_cast<size_t>(c) * H + sy) * W;
                    for (int x = 0; x < W; ++x) {
                        const int sx = x + dx;
                        *out++ = (sx < 0 || sx >= W) ? T(0) : row[sx];
                    }
                }
            }
        }
    }
    (void)HW;
}

// Scatter-add the column buffer back onto the (padded) image grid.
template <typename T>
void col2im_acc(const T* col, int C, int H, int W, int k, T* in_grad) {
    const int pad = k / 2;
    const T* src = col;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int dy = ky - pad, dx = kx - pad;
                for (int y = 0; y < H; ++y) {
                    const int sy = y + dy;
                    if (sy < 0 || sy >= H) {
                        src += W;
                        continue;
                    }
                    T* row = in_grad + (static_cast<size_t>(c) * H + sy) * W;
                    for (int x = 0; x < W; ++x) {
                        const int sx = x + dx;
                        if (sx >= 0 && sx < W) row[sx] += src[x];
                    }
                    src += W;
                }
            }
        }
    }
}

template <typename T>
void conv2d_check(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
    if (input.shape.size() != 4) throw ShapeError("conv2d input must be [N,C,H,W], got " + shape_str(input.shape));
    if (kernel.shape.size() != 4)
        throw ShapeError("conv2d kernel must be [Cout,Cin,kH,kW], got " + shape_str(kernel.shape));
    if (kernel.shape[2] != kernel.shape[3]) throw ConfigError("conv2d kernel must be square");
    if (kernel.shape[2] % 2 == 0)
        throw ConfigError("conv2d kernel size must be odd, got " + std::to_string(kernel.shape[2]));
    if (input.shape[1] != kernel.shape[1])
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(input.shape[1]) +
                         ", kernel expects " + std::to_string(kernel.shape[1]));
    if (bias.shape != std::vector<int>{kernel.shape[0]})
        throw ShapeError("conv2d bias must be [Cout]=" + std::to_string(kernel.shape[0]) + ", got " +
                         shape_str(bias.shape));
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias) {
    conv2d_check(input, kernel, bias);
    const int N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    const int Cout = kernel.shape[0], k = kernel.shape[2];
    const int HW = H * W, K = C * k * k;

    Tensor<T> out({N, Cout, H, W});
    ConstMatMap<T> Kmat(kernel.data.data(), Cout, K);
    std::vector<T> col;
    if (k > 1) col.resize(static_cast<size_t>(K) * HW);

    for (int n = 0; n < N; ++n) {
        const T* in_n = input.data.data() + static_cast<size_t>(n) * C * HW;
        MatMap<T> Out(out.data.data() + static_cast<size_t>(n) * Cout * HW, Cout, HW);
        if (k == 1) {
            ConstMatMap<T> Col(in_n, C, HW);
            Out.noalias() = Kmat * Col;
        } else {
            im2col(in_n, C, H, W, k, col.data());
            ConstMatMap<T> Col(col.data(), K, HW);
            Out.noalias() = Kmat * Col;
        }
        for (int co = 0; co < Cout; ++co) Out.row(co).array() += bias.data[co];
    }
    return out;
}

// Gradients accumulate (+=) into grad_kernel/grad_bias; grad_input, when
// requested, is overwritten.
template <typename T>
void conv2d_backward_acc(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& grad_out,
                         Tensor<T>* grad_input, std::vector<T>* grad_kernel,
                         std::vector<T>* grad_bias) {
    const int N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    const int Cout = kernel.shape[0], k = kernel.shape[2];
    const int HW = H * W, K = C * k * k;

    ConstMatMap<T> Kmat(kernel.data.data(), Cout, K);
    std::vector<T> col((k > 1) ? static_cast<size_t>(K) * HW : 0);
    std::vector<T> dcol((k > 1 && grad_input) ? static_cast<size_t>(K) * HW : 0);
    if (grad_input) {
        grad_input->shape = input.shape;
        grad_input->data.assign(input.numel(), T(0));
    }

    for (int n = 0; n < N; ++n) {
        const T* in_n = input.data.data() + static_cast<size_t>(n) * C * HW;
        ConstMatMap<T> dOut(grad_out.data.data() + static_cast<size_t>(n) * Cout * HW, Cout, HW);

        if (grad_kernel) {
            MatMap<T> dK(grad_kernel->data(), Cout, K);
            if (k == 1) {
                ConstMatMap<T> Col(in_n, C, HW);
                dK.noalias() += dOut * Col.transpose();
            } else {
                im2col(in_n, C, H, W, k, col.data());
                ConstMatMap<T> Col(col.data(), K, HW);
                dK.noalias() += dOut * Col.transpose();
            }
        }
        if (grad_bias) {
            for (int co = 0; co < Cout; ++co) {
                T s = T(0);
                const T* row = grad_out.data.data() + (static_cast<size_t>(n) * Cout + co) * HW;
                for (int i = 0; i < HW; ++i) s += row[i];
                (*grad_bias)[co] += s;
            }
        }
        if (grad_input) {
            T* din_n = grad_input->data.data() + static_cast<size_t>(n) * C * HW;
            if (k == 1) {
                MatMap<T> dIn(din_n, C, HW);
                dIn.noalias() += Kmat.transpose() * dOut;
            } else {
                MatMap<T> dCol(dcol.data(), K, HW);
                dCol.noalias() = Kmat.transpose() * dOut;
                col2im_acc(dcol.data(), C, H, W, k, din_n);
            }
        }
    }
}

template <typename T>
struct Conv2dGrads {
    Tensor<T> input, kernel, bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               const Tensor<T>& grad_out) {
    Conv2dGrads<T> g;
    g.kernel = Tensor<T>(kernel.shape);
    g.bias = Tensor<T>({kernel.shape[0]});
    conv2d_backward_acc(input, kernel, grad_out, &g.input, &g.kernel.data, &g.bias.data);
    return g;
}

// ---------------------------------------------------------------------------
// Batch normalization over [N,C,H,W], statistics per channel.
// ---------------------------------------------------------------------------

template <typename T>
struct BnCache {
    std::vector<T> xhat;     // normalized activations, pre-affine
    std::vector<T> inv_std;  // per channel
    int N = 0, C = 0, H = 0, W = 0;
};

template <typename T>
struct BatchNormState {
    Tensor<T> scale, shift, running_mean, running_var;
    T momentum = T(0.1);
    T epsilon = T(1e-5);

    explicit BatchNormState(int channels = 0)
        : scale({channels}), shift({channels}), running_mean({channels}), running_var({channels}) {
        for (auto& v : scale.data) v = T(1);
        for (auto& v : running_var.data) v = T(1);
    }

    void validate() const {
        const int c = scale.shape.empty() ? 0 : scale.shape[0];
        for (const Tensor<T>* t : {&shift, &running_mean, &running_var})
            if (t->shape != std::vector<int>{c})
                throw ShapeError("batch norm state vectors must share one channel length");
        for (const T& v : running_var.data)
            if (v < T(0)) throw PreconditionError("running_var must be nonnegative");
        if (!(momentum > T(0) && momentum < T(1)))
            throw ConfigError("batch norm momentum must be in (0,1)");
        if (!(epsilon > T(0))) throw ConfigError("batch norm epsilon must be positive");
    }
};

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, const Tensor<T>& scale, const Tensor<T>& shift,
                     Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, T eps, Mode mode,
                     BnCache<T>* cache = nullptr) {
    if (input.shape.size() != 4)
        throw ShapeError("batch_norm input must be [N,C,H,W], got " + shape_str(input.shape));
    const int N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    if (scale.shape != std::vector<int>{C})
        throw ShapeError("batch_norm channel mismatch: input C=" + std::to_string(C) + ", state C=" +
                         shape_str(scale.shape));
    const size_t HW = static_cast<size_t>(H) * W;
    const size_t count = static_cast<size_t>(N) * HW;  // elements per channel

    Tensor<T> out(input.shape);
    if (cache) {
        cache->xhat.resize(input.numel());
        cache->inv_std.assign(C, T(0));
        cache->N = N;
        cache->C = C;
        cache->H = H;
        cache->W = W;
    }

    for (int c = 0; c < C; ++c) {
        T mean, var;
        if (mode == Mode::Train) {
            if (count < 2)
                throw PreconditionError("batch_norm train mode needs N*H*W >= 2 per channel, got " +
                                        std::to_string(count) + " (degenerate variance)");
            T sum = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = input.data.data() + (static_cast<size_t>(n) * C + c) * HW;
                for (size_t i = 0; i < HW; ++i) sum += p[i];
            }
            mean = sum / static_cast<T>(count);
            T sq = T(0);
            for (int n = 0; n < N; ++n) {
                const T* p = input.data.data() + (static_cast<size_t>(n) * C + c) * HW;
                for (size_t i = 0; i < HW; ++i) {
                    const T d = p[i] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<T>(count);  // biased, used for normalization
            const T var_unbiased = sq / static_cast<T>(count - 1);
            running_mean.data[c] = (T(1) - momentum) * running_mean.data[c] + momentum * mean;
            running_var.data[c] = (T(1) - momentum) * running_var.data[c] + momentum * var_unbiased;
        } else {
            mean = running_mean.data[c];
            var = running_var.data[c];
        }

        const T inv_std = T(1) / std::sqrt(var + eps);
        const T g = scale.data[c], b = shift.data[c];
        if (cache) cache->inv_std[c] = inv_std;
        for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            const T* p = input.data.data() + base;
            T* q = out.data.data() + base;
            if (cache) {
                T* xh = cache->xhat.data() + base;
                for (size_t i = 0; i < HW; ++i) {
                    const T x = (p[i] - mean) * inv_std;
                    xh[i] = x;
                    q[i] = g * x + b;
                }
            } else {
                for (size_t i = 0; i < HW; ++i) q[i] = g * ((p[i] - mean) * inv_std) + b;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormState<T>& state, Mode mode,
                     BnCache<T>* cache = nullptr) {
    state.validate();
    return batch_norm(input, state.scale, state.shift, state.running_mean, state.running_var,
                      state.momentum, state.epsilon, mode, cache);
}

// Train-mode backward through the batch statistics.
template <typename T>
void batch_norm_backward_acc(const BnCache<T>& cache, const Tensor<T>& scale,
                             const Tensor<T>& grad_out, Tensor<T>* grad_input,
                             std::vector<T>* grad_scale, std::vector<T>* grad_shift) {
    const int N = cache.N, C = cache.C;
    const size_t HW = static_cast<size_t>(cache.H) * cache.W;
    const T count = static_cast<T>(static_cast<size_t>(N) * HW);

    if (grad_input) {
        grad_input->shape = {N, C, cache.H, cache.W};
        grad_input->data.assign(cache.xhat.size(), T(0));
    }

    for (int c = 0; c < C; ++c) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int n = 0; n < N; ++n) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            const T* dy = grad_out.data.data() + base;
            const T* xh = cache.xhat.data() + base;
            for (size_t i = 0; i < HW; ++i) {
                sum_dy += dy[i];
                sum_dy_xhat += dy[i] * xh[i];
            }
        }
        if (grad_scale) (*grad_scale)[c] += sum_dy_xhat;
        if (grad_shift) (*grad_shift)[c] += sum_dy;
        if (grad_input) {
            const T g = scale.data[c] * cache.inv_std[c];
            const T mean_dy = sum_dy / count;
            const T mean_dy_xhat = sum_dy_xhat / count;
            for (int n = 0; n < N; ++n) {
                const size_t base = (static_cast<size_t>(n) * C + c) * HW;
                const T* dy = grad_out.data.data() + base;
                const T* xh = cache.xhat.data() + base;
                T* dx = grad_input->data.data() + base;
                for (size_t i = 0; i < HW; ++i)
                    dx[i] = g * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities and resampling.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
    Tensor<T> out(input.shape);
    for (size_t i = 0; i < input.data.size(); ++i) out.data[i] = input.data[i] > T(0) ? input.data[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& output, const Tensor<T>& grad_out) {
    Tensor<T> g(grad_out.shape);
    for (size_t i = 0; i < grad_out.data.size(); ++i)
        g.data[i] = output.data[i] > T(0) ? grad_out.data[i] : T(0);
    return g;
}

template <typename T>
T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
    Tensor<T> out(input.shape);
    for (size_t i = 0; i < input.data.size(); ++i) out.data[i] = sigmoid_scalar(input.data[i]);
    return out;
}

// Grid index of the winning element per output cell; ties resolve to the
// first index in row-major order so runs are reproducible everywhere.
template <typename T>
struct PoolCache {
    std::vector<int32_t> argmax;  // flat index into the input tensor
    std::vector<int> in_shape;
};

template <typename T>
Tensor<T> max_pool2(const Tensor<T>& input, PoolCache<T>* cache = nullptr) {
    if (input.shape.size() != 4)
        throw ShapeError("max_pool2 input must be [N,C,H,W], got " + shape_str(input.shape));
    const int N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    if (H % 2 != 0 || W % 2 != 0)
        throw ShapeError("max_pool2 needs even spatial dims, got " + shape_str(input.shape));
    const int Ho = H / 2, Wo = W / 2;
    Tensor<T> out({N, C, Ho, Wo});
    if (cache) {
        cache->argmax.resize(out.numel());
        cache->in_shape = input.shape;
    }
    size_t o = 0;
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t plane = (static_cast<size_t>(n) * C + c) * H * W;
            for (int y = 0; y < Ho; ++y) {
                for (int x = 0; x < Wo; ++x, ++o) {
                    T best = -std::numeric_limits<T>::infinity();
                    size_t best_idx = 0;
                    for (int dy = 0; dy < 2; ++dy) {
                        const size_t row = plane + static_cast<size_t>(2 * y + dy) * W + 2 * x;
                        for (int dx = 0; dx < 2; ++dx) {
                            const T v = input.data[row + dx];
                            if (v > best) {
                                best = v;
                                best_idx = row + dx;
                            }
                        }
                    }
                    out.data[o] = best;
                    if (cache) cache->argmax[o] = static_cast<int32_t>(best_idx);
                }
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> max_pool2_backward(const PoolCache<T>& cache, const Tensor<T>& grad_out) {
    Tensor<T> g(cache.in_shape);
    for (size_t o = 0; o < grad_out.data.size(); ++o)
        g.data[static_cast<size_t>(cache.argmax[o])] += grad_out.data[o];
    return g;
}

// Nearest-neighbor 2x upsampling.
template <typename T>
Tensor<T> upsample2(const Tensor<T>& input) {
    if (input.shape.size() != 4)
        throw ShapeError("upsample2 input must be [N,C,H,W], got " + shape_str(input.shape));
    const int N = input.shape[0], C = input.shape[1], H = input.shape[2], W = input.shape[3];
    Tensor<T> out({N, C, 2 * H, 2 * W});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = input.data.data() + static_cast<size_t>(nc) * H * W;
        T* dst = out.data.data() + static_cast<size_t>(nc) * 4 * H * W;
        for (int y = 0; y < H; ++y) {
            T* r0 = dst + static_cast<size_t>(2 * y) * 2 * W;
            T* r1 = r0 + 2 * W;
            for (int x = 0; x < W; ++x) {
                const T v = src[static_cast<size_t>(y) * W + x];
                r0[2 * x] = r0[2 * x + 1] = r1[2 * x] = r1[2 * x + 1] = v;
            }
        }
    }
    return out;
}

template <typename T>
Tensor<T> upsample2_backward(const Tensor<T>& grad_out) {
    const int N = grad_out.shape[0], C = grad_out.shape[1];
    const int H = grad_out.shape[2] / 2, W = grad_out.shape[3] / 2;
    Tensor<T> g({N, C, H, W});
    for (int nc = 0; nc < N * C; ++nc) {
        const T* src = grad_out.data.data() + static_cast<size_t>(nc) * 4 * H * W;
        T* dst = g.data.data() + static_cast<size_t>(nc) * H * W;
        for (int y = 0; y < H; ++y) {
            const T* r0 = src + static_cast<size_t>(2 * y) * 2 * W;
            const T* r1 = r0 + 2 * W;
            for (int x = 0; x < W; ++x)
                dst[static_cast<size_t>(y) * W + x] = r0[2 * x] + r0[2 * x + 1] + r1[2 * x] + r1[2 * x + 1];
        }
    }
    return g;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape.size() != 4 || b.shape.size() != 4 || a.shape[0] != b.shape[0] ||
        a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3])
        throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape) + " and " +
                         shape_str(b.shape));
    const int N = a.shape[0], Ca = a.shape[1], Cb = b.shape[1], H = a.shape[2], W = a.shape[3];
    const size_t plane = static_cast<size_t>(H) * W;
    Tensor<T> out({N, Ca + Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(a.data.data() + static_cast<size_t>(n) * Ca * plane, Ca * plane,
                    out.data.data() + static_cast<size_t>(n) * (Ca + Cb) * plane);
        std::copy_n(b.data.data() + static_cast<size_t>(n) * Cb * plane, Cb * plane,
                    out.data.data() + (static_cast<size_t>(n) * (Ca + Cb) + Ca) * plane);
    }
    return out;
}

template <typename T>
void split_channels(const Tensor<T>& grad_out, int Ca, Tensor<T>* ga, Tensor<T>* gb) {
    const int N = grad_out.shape[0], C = grad_out.shape[1], H = grad_out.shape[2], W = grad_out.shape[3];
    const int Cb = C - Ca;
    const size_t plane = static_cast<size_t>(H) * W;
    *ga = Tensor<T>({N, Ca, H, W});
    *gb = Tensor<T>({N, Cb, H, W});
    for (int n = 0; n < N; ++n) {
        std::copy_n(grad_out.data.data() + static_cast<size_t>(n) * C * plane, Ca * plane,
                    ga->data.data() + static_cast<size_t>(n) * Ca * plane);
        std::copy_n(grad_out.data.data() + (static_cast<size_t>(n) * C + Ca) * plane, Cb * plane,
                    gb->data.data() + static_cast<size_t>(n) * Cb * plane);
    }
}

}  // namespace fedstress
