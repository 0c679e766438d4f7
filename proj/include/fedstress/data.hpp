#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fedstress/heterogeneity.hpp"
#include "fedstress/tensor.hpp"

namespace fedstress {

struct SliceSample {
    Tensor<float> image;     // [4,S,S], values in [0,1]
    Tensor<uint8_t> labels;  // [3,S,S], binary; channels WT, TC, ET
};

struct Case {
    std::string case_id;
    std::vector<SliceSample> slices;
};

struct ClientDataset {
    int client_id = 0;
    std::vector<Case> cases;
    TransformSpec transform;
    size_t slice_count() const;
};

struct ValidationCase {
    int client_id = 0;  // origin client whose eval-time transform applies
    Case item;
};

struct ValidationSet {
    std::vector<ValidationCase> cases;
    size_t slice_count() const;
};

struct ModalityProfile {
    double background = 0;
    double wt = 0;
    double tc = 0;
    double et = 0;
};

struct SyntheticConfig {
    int case_count = 40;
    int slices_per_case = 4;
    int slice_size = 64;
    double wt_radius_min = 0.14;  // fractions of the slice side
    double wt_radius_max = 0.23;
    double tc_shrink_min = 0.55;
    double tc_shrink_max = 0.75;
    double et_shrink_min = 0.45;
    double et_shrink_max = 0.70;
    std::array<ModalityProfile, 4> profiles{
        ModalityProfile{0.35, 0.30, 0.45, 0.60},  // T1
        ModalityProfile{0.30, 0.35, 0.50, 0.85},  // T1ce
        ModalityProfile{0.40, 0.75, 0.60, 0.50},  // T2
        ModalityProfile{0.30, 0.80, 0.70, 0.55},  // FLAIR
    };
    double profile_jitter = 0.05;
    double background_wave_amp = 0.04;
    double texture_noise = 0.02;
    uint64_t master_seed = 1;

    void validate() const;
};

// Geometry constants the generator composes with the configured radius range.
inline constexpr double kCenterLo = 0.40;
inline constexpr double kCenterHi = 0.60;
inline constexpr double kAspectLo = 0.8;
inline constexpr double kAspectHi = 1.2;
inline constexpr double kSliceScaleLo = 0.85;
inline constexpr double kSliceScaleHi = 1.15;
inline constexpr double kSliceCenterJitter = 0.02;

Case generate_case(const SyntheticConfig& config, int case_index);
std::vector<Case> generate_dataset(const SyntheticConfig& config);

// Binary/nesting/range/shape checks shared by the generator tests and the
// bundle loader. Throws ValidationError naming the case and slice.
void validate_case(const Case& c);

// Seeded shuffle then round-robin assignment of whole cases to clients
// 1..K. Client case lists come back sorted by case_id; transforms are left
// at their default for the caller to assign.
std::vector<ClientDataset> partition_cases(std::vector<Case> cases, int client_count,
                                           uint64_t seed);

// Moves whole held-out cases from each client into a shared validation set
// tagged with the origin client. Every client keeps at least one training
// case and contributes at least one validation case.
ValidationSet build_validation_set(std::vector<ClientDataset>& clients, double fraction,
                                   uint64_t seed);

void save_slice_bundle(const std::vector<Case>& cases, const std::string& path);
std::vector<Case> load_slice_bundle(const std::string& path);

inline constexpr uint32_t kSliceBundleVersion = 1;

}  // namespace fedstress
