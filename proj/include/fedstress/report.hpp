#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "fedstress/data.hpp"
#include "fedstress/fed_engine.hpp"
#include "fedstress/model.hpp"

namespace fedstress {

inline constexpr const char* kFedstressVersion = "1.0.0";

struct ExperimentConfig {
    std::string bundle_path;  // empty means synthetic
    SyntheticConfig synthetic;
    ModelConfig model;
    int clients = 4;
    std::vector<HeterogeneityLevel> levels{HeterogeneityLevel::H0};
    std::vector<Strategy> strategies{Strategy{}};
    RoundConfig round;
    double validation_fraction = 0.25;
    std::vector<uint64_t> seeds{1};
    std::vector<double> thresholds{0.78, 0.80};
    std::string out_dir = "out";

    void validate() const;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::string& path);

// Shortest round-trip decimal rendering, used for every CSV number.
std::string format_double(double v);

// FEDSTRESS_THREADS when set, hardware concurrency otherwise, at least 1.
int env_thread_cap();

// Executes every (level, strategy, seed) job, writes per-job convergence and
// slice tables plus checkpoints, then the merged report tables, and
// manifest.json last. Throws after flagging the manifest on any job failure.
void run_experiments(const ExperimentConfig& config, int max_threads);

// Merges robustness tables and prints worst/best/gap/mean per strategy,
// sorted by gap ascending; writes the same rows to out_csv.
void compare_reports(const std::vector<std::string>& paths, const std::string& out_csv,
                     std::ostream& out);

void generate_bundle(const ExperimentConfig& config, const std::string& out_path);

}  // namespace fedstress
