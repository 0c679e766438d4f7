#pragma once

#include <cstdint>
#include <string>

#include "fedstress/rng.hpp"
#include "fedstress/tensor.hpp"

namespace fedstress {

enum class HeterogeneityLevel { H0 = 0, H1 = 1, H2 = 2, H3 = 3 };

const char* level_name(HeterogeneityLevel level);
HeterogeneityLevel parse_level(const std::string& name);

enum class TransformFamily { None, Gamma, ScaleShift, NoiseBlur };

const char* family_name(TransformFamily family);
TransformFamily parse_family(const std::string& name);

struct Range {
    double lo = 0;
    double hi = 0;
    bool is_point() const { return lo == hi; }
};

// Per-level parameter ranges for each appearance-shift family. Point ranges
// (lo == hi) are taken as-is without consuming a draw.
struct TransformSpec {
    TransformFamily family = TransformFamily::None;
    HeterogeneityLevel level = HeterogeneityLevel::H0;
    Range gamma{1.0, 1.0};
    Range alpha{1.0, 1.0};
    Range beta{0.0, 0.0};
    double sigma = 0.0;
    Range kappa{0.0, 0.0};
};

struct SampledTransform {
    TransformFamily family = TransformFamily::None;
    double gamma = 1.0;
    double alpha = 1.0;
    double beta = 0.0;
    double sigma = 0.0;
    double kappa = 0.0;
};

Range gamma_range(HeterogeneityLevel level);
Range alpha_range(HeterogeneityLevel level);
Range beta_range(HeterogeneityLevel level);
double sigma_value(HeterogeneityLevel level);
Range kappa_range(HeterogeneityLevel level);

// Client 1 is the clean reference; clients 2+ cycle through gamma,
// scale_shift, noise_blur.
TransformSpec spec_for(int client_id, HeterogeneityLevel level);

// One draw per training batch; all identity-parameter specs consume nothing
// from the stream.
SampledTransform sample(const TransformSpec& spec, Rng& rng);

bool is_identity(const SampledTransform& t);

// Applies the sampled shift to a [4,S,S] image in [0,1]. The rng supplies
// the per-pixel noise field for the noise_blur family; identity transforms
// return the input untouched and consume no draws. Labels are never passed
// through here.
Tensor<float> apply(const Tensor<float>& image, const SampledTransform& t, Rng& rng);

// Evaluation-time stream for one validation slice: fixed across rounds and
// strategies so every method sees the same shift on the same slice.
Rng eval_stream(uint64_t experiment_seed, int client_id, const std::string& case_id,
                int slice_index);

SampledTransform eval_transform(const TransformSpec& spec, uint64_t experiment_seed, int client_id,
                                const std::string& case_id, int slice_index);

}  // namespace fedstress
