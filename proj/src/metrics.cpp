#include "fedstress/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedstress/errors.hpp"

namespace fedstress {

double dice(const Tensor<uint8_t>& pred, const Tensor<uint8_t>& target, double eps) {
    require_same_shape(pred, target, "dice");
    if (eps < 0) throw PreconditionError("dice eps must be >= 0");
    double inter = 0, p_sum = 0, t_sum = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        const uint8_t p = pred.data[i], t = target.data[i];
        if (p > 1 || t > 1) throw PreconditionError("dice expects binary masks");
        inter += p & t;
        p_sum += p;
        t_sum += t;
    }
    const double den = p_sum + t_sum + eps;
    if (den == 0) throw PreconditionError("dice undefined for empty masks with eps = 0");
    return (2.0 * inter + eps) / den;
}

RobustnessReport client_robustness(const std::map<int, double>& per_client_mean_dice) {
    if (per_client_mean_dice.size() < 2)
        throw PreconditionError("client robustness needs >= 2 clients");
    RobustnessReport r;
    r.worst = std::numeric_limits<double>::infinity();
    r.best = -std::numeric_limits<double>::infinity();
    double total = 0;
    for (const auto& [client_id, value] : per_client_mean_dice) {
        if (!std::isfinite(value))
            throw ValidationError("non-finite mean Dice for client " + std::to_string(client_id));
        if (value < r.worst) {
            r.worst = value;
            r.worst_client_id = client_id;
        }
        if (value > r.best) {
            r.best = value;
            r.best_client_id = client_id;
        }
        total += value;
    }
    r.gap = r.best - r.worst;
    r.mean = total / static_cast<double>(per_client_mean_dice.size());
    return r;
}

namespace {
double region_gap(const std::map<int, ClientScore>& per_client, double ClientScore::*field,
                  const char* region) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& [client_id, score] : per_client) {
        const double v = score.*field;
        if (!std::isfinite(v))
            throw ValidationError(std::string("missing ") + region + " Dice for client " +
                                  std::to_string(client_id));
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    return hi - lo;
}
}  // namespace

SubregionGaps subregion_gaps(const std::map<int, ClientScore>& per_client) {
    if (per_client.size() < 2) throw PreconditionError("subregion gaps need >= 2 clients");
    SubregionGaps g;
    g.wt_gap = region_gap(per_client, &ClientScore::dice_wt, "WT");
    g.tc_gap = region_gap(per_client, &ClientScore::dice_tc, "TC");
    g.et_gap = region_gap(per_client, &ClientScore::dice_et, "ET");
    g.mean_gap = (g.wt_gap + g.tc_gap + g.et_gap) / 3.0;
    g.mean_dice_gap = region_gap(per_client, &ClientScore::mean_dice, "mean");
    return g;
}

HeterogeneitySummary heterogeneity_summary(std::vector<RoundRecord> records,
                                           const std::vector<double>& thresholds) {
    if (records.empty()) throw PreconditionError("heterogeneity summary needs >= 1 round");
    std::sort(records.begin(), records.end(),
              [](const RoundRecord& a, const RoundRecord& b) { return a.round_index < b.round_index; });
    HeterogeneitySummary s;
    s.best_mean_dice = -std::numeric_limits<double>::infinity();
    for (const RoundRecord& rec : records) {
        if (rec.global_mean_dice > s.best_mean_dice) {
            s.best_mean_dice = rec.global_mean_dice;
            s.best_round = rec.round_index;
        }
    }
    s.rounds_to_threshold.assign(thresholds.size(), kNotReached);
    for (size_t i = 0; i < thresholds.size(); ++i) {
        for (const RoundRecord& rec : records) {
            if (rec.global_mean_dice >= thresholds[i]) {
                s.rounds_to_threshold[i] = rec.round_index;
                break;
            }
        }
    }
    return s;
}

}  // namespace fedstress
