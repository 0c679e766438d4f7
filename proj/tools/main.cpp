#include <charconv>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedstress/errors.hpp"
#include "fedstress/report.hpp"

namespace {

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    std::vector<uint64_t> seeds;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t comma = text.find(',', pos);
        if (comma == std::string::npos) comma = text.size();
        const std::string item = text.substr(pos, comma - pos);
        uint64_t v = 0;
        const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
        if (item.empty() || res.ec != std::errc() || res.ptr != item.data() + item.size())
            throw fedstress::ConfigError("invalid seed '" + item + "' in --seeds");
        seeds.push_back(v);
        pos = comma + 1;
    }
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deterministic federated stress testing for 2D segmentation"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::string seeds_csv;
    std::string data_override;
    std::string bundle_out;
    std::string compare_out = "compare.csv";
    std::vector<std::string> report_paths;

    CLI::App* run = app.add_subcommand("run", "run the configured experiments");
    run->add_option("--config", config_path, "experiment config (JSON)")->required();
    run->add_option("--out", out_dir, "output directory (overrides the config)");
    run->add_option("--seeds", seeds_csv, "comma-separated seeds (overrides the config)");
    run->add_option("--data", data_override,
                    "'synthetic' or a slice-bundle path (overrides the config)");

    CLI::App* cmp = app.add_subcommand("compare", "merge robustness reports side by side");
    cmp->add_option("files", report_paths, "robustness.csv paths")->required()->expected(-1);
    cmp->add_option("--out", compare_out, "combined CSV output path");

    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic slice bundle");
    gen->add_option("--config", config_path, "config whose data section describes the bundle")
        ->required();
    gen->add_option("--out", bundle_out, "bundle output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            fedstress::ExperimentConfig cfg = fedstress::parse_config(config_path);
            if (!out_dir.empty()) cfg.out_dir = out_dir;
            if (!seeds_csv.empty()) cfg.seeds = parse_seed_list(seeds_csv);
            if (!data_override.empty())
                cfg.bundle_path = data_override == "synthetic" ? "" : data_override;
            cfg.validate();
            fedstress::run_experiments(cfg, fedstress::env_thread_cap());
        } else if (cmp->parsed()) {
            fedstress::compare_reports(report_paths, compare_out, std::cout);
        } else if (gen->parsed()) {
            fedstress::ExperimentConfig cfg = fedstress::parse_config(config_path);
            fedstress::generate_bundle(cfg, bundle_out);
        }
    } catch (const fedstress::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
