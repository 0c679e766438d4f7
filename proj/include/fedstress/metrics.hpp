#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedstress/tensor.hpp"

namespace fedstress {

double dice(const Tensor<uint8_t>& pred, const Tensor<uint8_t>& target, double eps);

inline constexpr double kDiceEps = 1.0;

struct ClientScore {
    double dice_wt = 0;
    double dice_tc = 0;
    double dice_et = 0;
    double mean_dice = 0;
};

struct RoundRecord {
    int round_index = 0;  // 1-based
    std::string strategy;
    std::map<int, ClientScore> per_client;
    double global_mean_dice = 0;  // slice-count-weighted over validation slices
    double mean_val_loss = 0;
};

struct RobustnessReport {
    int worst_client_id = 0;
    double worst = 0;
    int best_client_id = 0;
    double best = 0;
    double gap = 0;
    double mean = 0;
};

struct SubregionGaps {
    double wt_gap = 0;
    double tc_gap = 0;
    double et_gap = 0;
    double mean_gap = 0;       // mean of the three per-region gaps
    double mean_dice_gap = 0;  // gap of per-client mean Dice (reversed averaging order)
};

struct HeterogeneitySummary {
    double best_mean_dice = 0;
    int best_round = 0;                    // 1-based
    std::vector<int> rounds_to_threshold;  // kNotReached when never attained
};

inline constexpr int kNotReached = -1;  // rendered "--" in reports

RobustnessReport client_robustness(const std::map<int, double>& per_client_mean_dice);

SubregionGaps subregion_gaps(const std::map<int, ClientScore>& per_client);

HeterogeneitySummary heterogeneity_summary(std::vector<RoundRecord> records,
                                           const std::vector<double>& thresholds);

}  // namespace fedstress
