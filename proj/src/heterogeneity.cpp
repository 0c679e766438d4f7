#include "fedstress/heterogeneity.hpp"

#include <cmath>
#include <vector>

#include "fedstress/errors.hpp"

namespace fedstress {

const char* level_name(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return "H0";
        case HeterogeneityLevel::H1: return "H1";
        case HeterogeneityLevel::H2: return "H2";
        case HeterogeneityLevel::H3: return "H3";
    }
    throw ConfigError("invalid heterogeneity level");
}

HeterogeneityLevel parse_level(const std::string& name) {
    if (name == "H0") return HeterogeneityLevel::H0;
    if (name == "H1") return HeterogeneityLevel::H1;
    if (name == "H2") return HeterogeneityLevel::H2;
    if (name == "H3") return HeterogeneityLevel::H3;
    throw ConfigError("unknown heterogeneity level '" + name + "' (expected H0..H3)");
}

const char* family_name(TransformFamily family) {
    switch (family) {
        case TransformFamily::None: return "none";
        case TransformFamily::Gamma: return "gamma";
        case TransformFamily::ScaleShift: return "scale_shift";
        case TransformFamily::NoiseBlur: return "noise_blur";
    }
    throw ConfigError("invalid transform family");
}

TransformFamily parse_family(const std::string& name) {
    if (name == "none") return TransformFamily::None;
    if (name == "gamma") return TransformFamily::Gamma;
    if (name == "scale_shift") return TransformFamily::ScaleShift;
    if (name == "noise_blur") return TransformFamily::NoiseBlur;
    throw ConfigError("unknown transform family '" + name + "'");
}

Range gamma_range(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return {1.0, 1.0};
        case HeterogeneityLevel::H1: return {0.8, 1.2};
        case HeterogeneityLevel::H2: return {0.6, 1.5};
        case HeterogeneityLevel::H3: return {0.5, 2.0};
    }
    throw ConfigError("invalid heterogeneity level");
}

Range alpha_range(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return {1.0, 1.0};
        case HeterogeneityLevel::H1: return {0.95, 1.05};
        case HeterogeneityLevel::H2: return {0.9, 1.1};
        case HeterogeneityLevel::H3: return {0.8, 1.2};
    }
    throw ConfigError("invalid heterogeneity level");
}

Range beta_range(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return {0.0, 0.0};
        case HeterogeneityLevel::H1: return {-0.03, 0.03};
        case HeterogeneityLevel::H2: return {-0.07, 0.07};
        case HeterogeneityLevel::H3: return {-0.1, 0.1};
    }
    throw ConfigError("invalid heterogeneity level");
}

double sigma_value(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return 0.0;
        case HeterogeneityLevel::H1: return 0.01;
        case HeterogeneityLevel::H2: return 0.03;
        case HeterogeneityLevel::H3: return 0.05;
    }
    throw ConfigError("invalid heterogeneity level");
}

Range kappa_range(HeterogeneityLevel level) {
    switch (level) {
        case HeterogeneityLevel::H0: return {0.0, 0.0};
        case HeterogeneityLevel::H1: return {1.0, 1.0};
        case HeterogeneityLevel::H2: return {2.0, 2.0};
        case HeterogeneityLevel::H3: return {3.0, 5.0};
    }
    throw ConfigError("invalid heterogeneity level");
}

TransformSpec spec_for(int client_id, HeterogeneityLevel level) {
    if (client_id < 1) throw PreconditionError("client_id must be >= 1");
    TransformSpec spec;
    spec.level = level;
    if (client_id == 1) {
        spec.family = TransformFamily::None;
        return spec;
    }
    switch ((client_id - 2) % 3) {
        case 0:
            spec.family = TransformFamily::Gamma;
            spec.gamma = gamma_range(level);
            break;
        case 1:
            spec.family = TransformFamily::ScaleShift;
            spec.alpha = alpha_range(level);
            spec.beta = beta_range(level);
            break;
        default:
            spec.family = TransformFamily::NoiseBlur;
            spec.sigma = sigma_value(level);
            spec.kappa = kappa_range(level);
            break;
    }
    return spec;
}

namespace {
double draw(const Range& r, Rng& rng) { return r.is_point() ? r.lo : rng.uniform(r.lo, r.hi); }
}  // namespace

SampledTransform sample(const TransformSpec& spec, Rng& rng) {
    SampledTransform t;
    t.family = spec.family;
    switch (spec.family) {
        case TransformFamily::None:
            break;
        case TransformFamily::Gamma:
            t.gamma = draw(spec.gamma, rng);
            break;
        case TransformFamily::ScaleShift:
            t.alpha = draw(spec.alpha, rng);
            t.beta = draw(spec.beta, rng);
            break;
        case TransformFamily::NoiseBlur:
            t.sigma = spec.sigma;
            t.kappa = draw(spec.kappa, rng);
            break;
    }
    return t;
}

bool is_identity(const SampledTransform& t) {
    switch (t.family) {
        case TransformFamily::None: return true;
        case TransformFamily::Gamma: return t.gamma == 1.0;
        case TransformFamily::ScaleShift: return t.alpha == 1.0 && t.beta == 0.0;
        case TransformFamily::NoiseBlur: return t.sigma == 0.0 && t.kappa == 0.0;
    }
    return true;
}

namespace {

void check_unit_range(const Tensor<float>& image) {
    for (float v : image.data)
        if (!(v >= 0.0f && v <= 1.0f))
            throw PreconditionError("transform input must lie in [0,1]");
}

inline float clip01(double v) {
    if (v < 0.0) return 0.0f;
    if (v > 1.0) return 1.0f;
    return static_cast<float>(v);
}

// Mirror index without repeating the border pixel (…3,2,1,0,1,2,3…).
inline int reflect(int idx, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    idx = ((idx % period) + period) % period;
    return idx < n ? idx : period - idx;
}

void gaussian_blur(Tensor<float>& image, double kappa) {
    const int C = image.shape[0], H = image.shape[1], W = image.shape[2];
    const int radius = static_cast<int>(std::floor(3.0 * kappa));
    if (radius < 1) return;
    std::vector<double> kernel(2 * radius + 1);
    double total = 0;
    for (int d = -radius; d <= radius; ++d) {
        kernel[d + radius] = std::exp(-(static_cast<double>(d) * d) / (2.0 * kappa * kappa));
        total += kernel[d + radius];
    }
    for (double& w : kernel) w /= total;

    std::vector<float> row_pass(static_cast<size_t>(H) * W);
    for (int c = 0; c < C; ++c) {
        float* plane = image.data.data() + static_cast<size_t>(c) * H * W;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0;
                for (int d = -radius; d <= radius; ++d)
                    acc += kernel[d + radius] * plane[y * W + reflect(x + d, W)];
                row_pass[static_cast<size_t>(y) * W + x] = static_cast<float>(acc);
            }
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                double acc = 0;
                for (int d = -radius; d <= radius; ++d)
                    acc += kernel[d + radius] * row_pass[static_cast<size_t>(reflect(y + d, H)) * W + x];
                plane[y * W + x] = static_cast<float>(acc);
            }
    }
}

}  // namespace

Tensor<float> apply(const Tensor<float>& image, const SampledTransform& t, Rng& rng) {
    if (image.shape.size() != 3) throw ShapeError("transform expects a [C,S,S] image");
    check_unit_range(image);
    if (is_identity(t)) return image;

    Tensor<float> out = image;
    switch (t.family) {
        case TransformFamily::None:
            break;
        case TransformFamily::Gamma:
            for (float& v : out.data)
                v = static_cast<float>(std::pow(static_cast<double>(v), t.gamma));
            break;
        case TransformFamily::ScaleShift:
            for (float& v : out.data) v = clip01(t.alpha * static_cast<double>(v) + t.beta);
            break;
        case TransformFamily::NoiseBlur:
            if (t.sigma > 0.0)
                for (float& v : out.data) v = static_cast<float>(v + rng.normal(0.0, t.sigma));
            if (t.kappa > 0.0) gaussian_blur(out, t.kappa);
            for (float& v : out.data) v = clip01(v);
            break;
    }
    return out;
}

Rng eval_stream(uint64_t experiment_seed, int client_id, const std::string& case_id,
                int slice_index) {
    return Rng(mix_seed(experiment_seed, "eval_transform", static_cast<uint64_t>(client_id),
                        fnv1a64(case_id), static_cast<uint64_t>(slice_index)));
}

SampledTransform eval_transform(const TransformSpec& spec, uint64_t experiment_seed, int client_id,
                                const std::string& case_id, int slice_index) {
    Rng rng = eval_stream(experiment_seed, client_id, case_id, slice_index);
    return sample(spec, rng);
}

}  // namespace fedstress
