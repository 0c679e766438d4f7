#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fedstress/adamw.hpp"
#include "fedstress/errors.hpp"
#include "fedstress/ops.hpp"
#include "fedstress/param_set.hpp"
#include "fedstress/rng.hpp"
#include "fedstress/tensor.hpp"

namespace fedstress {

struct ModelConfig {
    int in_channels = 4;   // T1, T1ce, T2, FLAIR
    int out_channels = 3;  // WT, TC, ET
    int depth = 3;
    int base_channels = 16;
    int slice_size = 64;
    double dice_smooth = 1.0;
    double bn_momentum = 0.1;
    double bn_epsilon = 1e-5;

    void validate() const {
        if (depth < 1) throw ConfigError("model depth must be >= 1");
        if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
        if (in_channels < 1 || out_channels < 1) throw ConfigError("channel counts must be >= 1");
        const int div = 1 << depth;
        if (slice_size < div || slice_size % div != 0)
            throw ConfigError("slice_size " + std::to_string(slice_size) +
                              " must be a multiple of 2^depth = " + std::to_string(div));
        if (dice_smooth <= 0) throw ConfigError("dice_smooth must be positive");
    }
};

template <typename T>
struct DoubleConvCache {
    Tensor<T> in1;    // conv1 input
    BnCache<T> bn1;
    Tensor<T> relu1;  // conv2 input
    BnCache<T> bn2;
    Tensor<T> relu2;  // block output
};

template <typename T>
struct UnetCache {
    Mode mode = Mode::Train;
    std::vector<DoubleConvCache<T>> enc;
    std::vector<PoolCache<T>> pool;
    DoubleConvCache<T> bottleneck;
    std::vector<DoubleConvCache<T>> dec;  // indexed by encoder level
};

// Encoder-decoder segmentation network with skip connections: `depth` levels
// of double-conv blocks (3x3 conv + batch norm + relu, twice), 2x max-pool
// between levels, nearest-neighbor upsampling and channel concatenation on
// the way back up, and a 1x1 head emitting one logit map per subregion.
template <typename T>
class Unet {
public:
    explicit Unet(ModelConfig cfg) : cfg_(cfg) { cfg_.validate(); }

    const ModelConfig& config() const { return cfg_; }

    int enc_out_channels(int level) const { return cfg_.base_channels << level; }
    int bottleneck_channels() const { return cfg_.base_channels << cfg_.depth; }
    int dec_in_channels(int level) const {
        const int up = (level == cfg_.depth - 1) ? bottleneck_channels() : enc_out_channels(level + 1);
        return up + enc_out_channels(level);
    }

    ParameterSet<T> build_params(uint64_t seed) const {
        ParameterSet<T> params;
        int in_ch = cfg_.in_channels;
        for (int i = 0; i < cfg_.depth; ++i) {
            add_double_conv(params, seed, "enc" + std::to_string(i), in_ch, enc_out_channels(i));
            in_ch = enc_out_channels(i);
        }
        add_double_conv(params, seed, "bottleneck", in_ch, bottleneck_channels());
        for (int i = cfg_.depth - 1; i >= 0; --i)
            add_double_conv(params, seed, "dec" + std::to_string(i), dec_in_channels(i),
                            enc_out_channels(i));
        add_conv(params, seed, "head", cfg_.out_channels, cfg_.base_channels, 1);
        return params;
    }

    Tensor<T> forward(ParameterSet<T>& params, const Tensor<T>& batch, Mode mode,
                      UnetCache<T>* cache = nullptr) const {
        if (batch.shape.size() != 4 || batch.shape[1] != cfg_.in_channels ||
            batch.shape[2] != cfg_.slice_size || batch.shape[3] != cfg_.slice_size)
            throw ShapeError("forward expects [N," + std::to_string(cfg_.in_channels) + "," +
                             std::to_string(cfg_.slice_size) + "," + std::to_string(cfg_.slice_size) +
                             "], got " + shape_str(batch.shape));
        if (cache) {
            cache->mode = mode;
            cache->enc.resize(cfg_.depth);
            cache->pool.resize(cfg_.depth);
            cache->dec.resize(cfg_.depth);
        }

        std::vector<Tensor<T>> enc_outs(cfg_.depth);
        Tensor<T> cur = batch;
        for (int i = 0; i < cfg_.depth; ++i) {
            enc_outs[i] = double_conv(params, "enc" + std::to_string(i), cur, mode,
                                      cache ? &cache->enc[i] : nullptr);
            cur = max_pool2(enc_outs[i], cache ? &cache->pool[i] : nullptr);
        }
        cur = double_conv(params, "bottleneck", cur, mode, cache ? &cache->bottleneck : nullptr);
        for (int i = cfg_.depth - 1; i >= 0; --i) {
            Tensor<T> cat = concat_channels(upsample2(cur), enc_outs[i]);
            cur = double_conv(params, "dec" + std::to_string(i), cat, mode,
                              cache ? &cache->dec[i] : nullptr);
        }
        return conv2d(cur, params.tensor("head.weight"), params.tensor("head.bias"));
    }

    // Accumulates parameter gradients for the forward pass recorded in
    // `cache`. Train-mode caches only; eval-mode statistics are constants
    // the stored intermediates do not describe.
    void backward(ParameterSet<T>& params, const UnetCache<T>& cache,
                  const Tensor<T>& grad_logits) const {
        if (cache.mode != Mode::Train)
            throw PreconditionError("backward requires a train-mode forward cache");

        auto& head_w = params.at("head.weight");
        auto& head_b = params.at("head.bias");
        Tensor<T> g_cur;
        conv2d_backward_acc(cache.dec[0].relu2, head_w.tensor, grad_logits, &g_cur,
                            &head_w.tensor.grad, &head_b.tensor.grad);

        std::vector<Tensor<T>> g_skip(cfg_.depth);
        for (int i = 0; i < cfg_.depth; ++i) {
            Tensor<T> g_cat =
                double_conv_backward(params, "dec" + std::to_string(i), cache.dec[i], g_cur);
            const int up_ch = g_cat.shape[1] - enc_out_channels(i);
            Tensor<T> g_up;
            split_channels(g_cat, up_ch, &g_up, &g_skip[i]);
            g_cur = upsample2_backward(g_up);
        }
        g_cur = double_conv_backward(params, "bottleneck", cache.bottleneck, g_cur);
        for (int i = cfg_.depth - 1; i >= 0; --i) {
            Tensor<T> g = max_pool2_backward(cache.pool[i], g_cur);
            for (size_t j = 0; j < g.data.size(); ++j) g.data[j] += g_skip[i].data[j];
            g_cur = double_conv_backward(params, "enc" + std::to_string(i), cache.enc[i], g);
        }
    }

private:
    void add_conv(ParameterSet<T>& params, uint64_t seed, const std::string& name, int out_ch,
                  int in_ch, int k) const {
        Tensor<T> w({out_ch, in_ch, k, k});
        Rng rng(mix_seed(seed, "init", name));
        const double std_dev = std::sqrt(2.0 / (static_cast<double>(in_ch) * k * k));
        for (auto& v : w.data) v = static_cast<T>(rng.normal(0.0, std_dev));
        params.add(name + ".weight", std::move(w), ParamTag::Aggregatable, true);
        params.add(name + ".bias", Tensor<T>({out_ch}), ParamTag::Aggregatable, true);
    }

    void add_bn(ParameterSet<T>& params, const std::string& prefix, int ch) const {
        Tensor<T> ones({ch});
        for (auto& v : ones.data) v = T(1);
        params.add(prefix + ".scale", ones, ParamTag::NormLocal, true);
        params.add(prefix + ".shift", Tensor<T>({ch}), ParamTag::NormLocal, true);
        params.add(prefix + ".running_mean", Tensor<T>({ch}), ParamTag::NormLocal, false);
        Tensor<T> var_ones({ch});
        for (auto& v : var_ones.data) v = T(1);
        params.add(prefix + ".running_var", var_ones, ParamTag::NormLocal, false);
    }

    void add_double_conv(ParameterSet<T>& params, uint64_t seed, const std::string& prefix,
                         int in_ch, int out_ch) const {
        add_conv(params, seed, prefix + ".conv1", out_ch, in_ch, 3);
        add_bn(params, prefix + ".bn1", out_ch);
        add_conv(params, seed, prefix + ".conv2", out_ch, out_ch, 3);
        add_bn(params, prefix + ".bn2", out_ch);
    }

    Tensor<T> apply_bn(ParameterSet<T>& params, const std::string& prefix, const Tensor<T>& x,
                       Mode mode, BnCache<T>* cache) const {
        return batch_norm(x, params.tensor(prefix + ".scale"), params.tensor(prefix + ".shift"),
                          params.tensor(prefix + ".running_mean"),
                          params.tensor(prefix + ".running_var"), static_cast<T>(cfg_.bn_momentum),
                          static_cast<T>(cfg_.bn_epsilon), mode, cache);
    }

    Tensor<T> double_conv(ParameterSet<T>& params, const std::string& prefix, const Tensor<T>& in,
                          Mode mode, DoubleConvCache<T>* cache) const {
        Tensor<T> h = conv2d(in, params.tensor(prefix + ".conv1.weight"),
                             params.tensor(prefix + ".conv1.bias"));
        h = apply_bn(params, prefix + ".bn1", h, mode, cache ? &cache->bn1 : nullptr);
        Tensor<T> r1 = relu(h);
        h = conv2d(r1, params.tensor(prefix + ".conv2.weight"),
                   params.tensor(prefix + ".conv2.bias"));
        h = apply_bn(params, prefix + ".bn2", h, mode, cache ? &cache->bn2 : nullptr);
        Tensor<T> r2 = relu(h);
        if (cache) {
            cache->in1 = in;
            cache->relu1 = std::move(r1);
            cache->relu2 = r2;
        }
        return r2;
    }

    Tensor<T> double_conv_backward(ParameterSet<T>& params, const std::string& prefix,
                                   const DoubleConvCache<T>& cache, const Tensor<T>& grad_out) const {
        auto& w2 = params.at(prefix + ".conv2.weight");
        auto& b2 = params.at(prefix + ".conv2.bias");
        auto& scale2 = params.at(prefix + ".bn2.scale");
        auto& shift2 = params.at(prefix + ".bn2.shift");
        Tensor<T> g = relu_backward(cache.relu2, grad_out);
        Tensor<T> g_pre;
        batch_norm_backward_acc(cache.bn2, scale2.tensor, g, &g_pre, &scale2.tensor.grad,
                                &shift2.tensor.grad);
        Tensor<T> g_r1;
        conv2d_backward_acc(cache.relu1, w2.tensor, g_pre, &g_r1, &w2.tensor.grad, &b2.tensor.grad);

        auto& w1 = params.at(prefix + ".conv1.weight");
        auto& b1 = params.at(prefix + ".conv1.bias");
        auto& scale1 = params.at(prefix + ".bn1.scale");
        auto& shift1 = params.at(prefix + ".bn1.shift");
        g = relu_backward(cache.relu1, g_r1);
        batch_norm_backward_acc(cache.bn1, scale1.tensor, g, &g_pre, &scale1.tensor.grad,
                                &shift1.tensor.grad);
        Tensor<T> g_in;
        conv2d_backward_acc(cache.in1, w1.tensor, g_pre, &g_in, &w1.tensor.grad, &b1.tensor.grad);
        return g_in;
    }

    ModelConfig cfg_;
};

template <typename T>
ParameterSet<T> build_model(const ModelConfig& cfg, uint64_t seed) {
    return Unet<T>(cfg).build_params(seed);
}

// ---------------------------------------------------------------------------
// Composite loss: equal-weight BCE + soft Dice complement, per Eq. style
// L = 1/2 BCE + 1/2 (1 - dice). BCE averages over every pixel and channel;
// soft Dice is computed per channel across the whole batch, then averaged
// over channels.
// ---------------------------------------------------------------------------

struct LossResult {
    double total = 0;
    double bce = 0;
    double soft_dice = 0;  // mean over channels, in [0,1]
};

template <typename T>
void check_loss_inputs(const Tensor<T>& logits, const Tensor<T>& targets) {
    require_same_shape(logits, targets, "loss");
    if (logits.shape.size() != 4) throw ShapeError("loss expects [N,C,H,W] tensors");
    for (const T& v : logits.data)
        if (!std::isfinite(static_cast<double>(v))) throw RuntimeFailure("loss: non-finite logit");
    for (const T& v : targets.data)
        if (!(v == T(0) || v == T(1)))
            throw PreconditionError("loss: targets must be binary (0 or 1)");
}

template <typename T>
LossResult seg_loss(const Tensor<T>& logits, const Tensor<T>& targets, double smooth) {
    check_loss_inputs(logits, targets);
    const int N = logits.shape[0], C = logits.shape[1];
    const size_t HW = static_cast<size_t>(logits.shape[2]) * logits.shape[3];
    const double M = static_cast<double>(logits.numel());

    double bce = 0;
    std::vector<double> sum_pt(C, 0.0), sum_p(C, 0.0), sum_t(C, 0.0);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            for (size_t i = 0; i < HW; ++i) {
                const double z = static_cast<double>(logits.data[base + i]);
                const double t = static_cast<double>(targets.data[base + i]);
                bce += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
                const double p = sigmoid_scalar(z);
                sum_pt[c] += p * t;
                sum_p[c] += p;
                sum_t[c] += t;
            }
        }
    }
    bce /= M;

    double dice_mean = 0;
    for (int c = 0; c < C; ++c)
        dice_mean += (2.0 * sum_pt[c] + smooth) / (sum_p[c] + sum_t[c] + smooth);
    dice_mean /= C;

    LossResult r;
    r.bce = bce;
    r.soft_dice = dice_mean;
    r.total = 0.5 * bce + 0.5 * (1.0 - dice_mean);
    return r;
}

template <typename T>
Tensor<T> seg_loss_backward(const Tensor<T>& logits, const Tensor<T>& targets, double smooth) {
    check_loss_inputs(logits, targets);
    const int N = logits.shape[0], C = logits.shape[1];
    const size_t HW = static_cast<size_t>(logits.shape[2]) * logits.shape[3];
    const double M = static_cast<double>(logits.numel());

    std::vector<double> num(C, 0.0), den(C, 0.0);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            for (size_t i = 0; i < HW; ++i) {
                const double p = sigmoid_scalar(static_cast<double>(logits.data[base + i]));
                const double t = static_cast<double>(targets.data[base + i]);
                num[c] += 2.0 * p * t;
                den[c] += p + t;
            }
        }
    }
    for (int c = 0; c < C; ++c) {
        num[c] += smooth;
        den[c] += smooth;
    }

    Tensor<T> grad(logits.shape);
    for (int n = 0; n < N; ++n) {
        for (int c = 0; c < C; ++c) {
            const size_t base = (static_cast<size_t>(n) * C + c) * HW;
            const double inv_den = 1.0 / den[c];
            for (size_t i = 0; i < HW; ++i) {
                const double p = sigmoid_scalar(static_cast<double>(logits.data[base + i]));
                const double t = static_cast<double>(targets.data[base + i]);
                const double d_bce = (p - t) / M;
                const double d_dice_dp = (2.0 * t - num[c] * inv_den) * inv_den;
                const double d_dice = -(1.0 / C) * d_dice_dp * p * (1.0 - p);
                grad.data[base + i] = static_cast<T>(0.5 * d_bce + 0.5 * d_dice);
            }
        }
    }
    return grad;
}

}  // namespace fedstress
