#include "fedstress/report.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "fedstress/errors.hpp"
#include "fedstress/metrics.hpp"

namespace fedstress {

namespace fs = std::filesystem;
using nlohmann::json;

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    if (res.ec != std::errc()) throw RuntimeFailure("number formatting failed");
    return std::string(buf, res.ptr);
}

int env_thread_cap() {
    if (const char* env = std::getenv("FEDSTRESS_THREADS")) {
        int v = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v < 1)
            throw ConfigError("FEDSTRESS_THREADS must be a positive integer, got '" + s + "'");
        return v;
    }
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<std::string_view> allowed) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool known = false;
        for (const auto& key : allowed)
            if (it.key() == key) {
                known = true;
                break;
            }
        if (!known)
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
}

double get_double(const json& obj, const std::string& key, double fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number()) throw ConfigError("'" + key + "' must be a number");
    return v.get<double>();
}

int get_int(const json& obj, const std::string& key, int fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_number_integer()) throw ConfigError("'" + key + "' must be an integer");
    return v.get<int>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    const json& v = obj.at(key);
    if (!v.is_string()) throw ConfigError("'" + key + "' must be a string");
    return v.get<std::string>();
}

uint64_t get_seed_value(const json& v) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<int64_t>() < 0))
        throw ConfigError("'seeds' entries must be non-negative integers");
    return v.get<uint64_t>();
}

Strategy parse_strategy_entry(const json& v) {
    Strategy s;
    if (v.is_string()) {
        s.kind = parse_strategy(v.get<std::string>());
        return s;
    }
    if (!v.is_object()) throw ConfigError("strategy entries must be strings or objects");
    check_keys(v, "strategy entry", {"kind", "mu"});
    if (!v.contains("kind")) throw ConfigError("strategy entry missing 'kind'");
    s.kind = parse_strategy(get_string(v, "kind", ""));
    s.mu = get_double(v, "mu", s.mu);
    if (s.mu < 0) throw ConfigError("'mu' must be >= 0, got " + format_double(s.mu));
    return s;
}

std::string strategy_display_label(const Strategy& s) {
    if (s.kind == StrategyKind::FedProx && s.mu != 0.01)
        return std::string(strategy_name(s.kind)) + "_mu" + format_double(s.mu);
    return strategy_name(s.kind);
}

ExperimentConfig parse_config_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    check_keys(j, "config",
               {"data", "model", "clients", "level", "levels", "strategy", "strategies", "rounds",
                "local_epochs", "batch_size", "lr", "weight_decay", "validation_fraction", "seeds",
                "thresholds", "out_dir"});

    ExperimentConfig cfg;
    if (j.contains("data")) {
        const json& d = j.at("data");
        if (!d.is_object()) throw ConfigError("'data' must be an object");
        check_keys(d, "data",
                   {"source", "case_count", "slices_per_case", "slice_size", "wt_radius_min",
                    "wt_radius_max", "tc_shrink_min", "tc_shrink_max", "et_shrink_min",
                    "et_shrink_max", "profile_jitter", "background_wave_amp", "texture_noise",
                    "master_seed"});
        const std::string source = get_string(d, "source", "synthetic");
        if (source != "synthetic") cfg.bundle_path = source;
        SyntheticConfig& s = cfg.synthetic;
        s.case_count = get_int(d, "case_count", s.case_count);
        s.slices_per_case = get_int(d, "slices_per_case", s.slices_per_case);
        s.slice_size = get_int(d, "slice_size", s.slice_size);
        s.wt_radius_min = get_double(d, "wt_radius_min", s.wt_radius_min);
        s.wt_radius_max = get_double(d, "wt_radius_max", s.wt_radius_max);
        s.tc_shrink_min = get_double(d, "tc_shrink_min", s.tc_shrink_min);
        s.tc_shrink_max = get_double(d, "tc_shrink_max", s.tc_shrink_max);
        s.et_shrink_min = get_double(d, "et_shrink_min", s.et_shrink_min);
        s.et_shrink_max = get_double(d, "et_shrink_max", s.et_shrink_max);
        s.profile_jitter = get_double(d, "profile_jitter", s.profile_jitter);
        s.background_wave_amp = get_double(d, "background_wave_amp", s.background_wave_amp);
        s.texture_noise = get_double(d, "texture_noise", s.texture_noise);
        if (d.contains("master_seed")) s.master_seed = get_seed_value(d.at("master_seed"));
    }
    if (j.contains("model")) {
        const json& m = j.at("model");
        if (!m.is_object()) throw ConfigError("'model' must be an object");
        check_keys(m, "model", {"depth", "base_channels"});
        cfg.model.depth = get_int(m, "depth", cfg.model.depth);
        cfg.model.base_channels = get_int(m, "base_channels", cfg.model.base_channels);
    }

    cfg.clients = get_int(j, "clients", cfg.clients);

    if (j.contains("level") && j.contains("levels"))
        throw ConfigError("specify either 'level' or 'levels', not both");
    if (j.contains("level")) cfg.levels = {parse_level(get_string(j, "level", ""))};
    if (j.contains("levels")) {
        const json& arr = j.at("levels");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("'levels' must be a non-empty array of level names");
        cfg.levels.clear();
        for (const json& v : arr) {
            if (!v.is_string()) throw ConfigError("'levels' entries must be strings");
            cfg.levels.push_back(parse_level(v.get<std::string>()));
        }
        std::set<HeterogeneityLevel> uniq(cfg.levels.begin(), cfg.levels.end());
        if (uniq.size() != cfg.levels.size()) throw ConfigError("'levels' contains duplicates");
    }

    if (j.contains("strategy") && j.contains("strategies"))
        throw ConfigError("specify either 'strategy' or 'strategies', not both");
    if (j.contains("strategy")) {
        cfg.strategies = {parse_strategy_entry(j.at("strategy"))};
    }
    if (j.contains("strategies")) {
        const json& arr = j.at("strategies");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("'strategies' must be a non-empty array");
        cfg.strategies.clear();
        for (const json& v : arr) cfg.strategies.push_back(parse_strategy_entry(v));
    }

    cfg.round.rounds = get_int(j, "rounds", cfg.round.rounds);
    cfg.round.local_epochs = get_int(j, "local_epochs", cfg.round.local_epochs);
    cfg.round.batch_size = get_int(j, "batch_size", cfg.round.batch_size);
    cfg.round.lr = get_double(j, "lr", cfg.round.lr);
    cfg.round.weight_decay = get_double(j, "weight_decay", cfg.round.weight_decay);
    cfg.validation_fraction = get_double(j, "validation_fraction", cfg.validation_fraction);

    if (j.contains("seeds")) {
        const json& arr = j.at("seeds");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("'seeds' must be a non-empty array of integers");
        cfg.seeds.clear();
        for (const json& v : arr) cfg.seeds.push_back(get_seed_value(v));
    }
    if (j.contains("thresholds")) {
        const json& arr = j.at("thresholds");
        if (!arr.is_array() || arr.empty())
            throw ConfigError("'thresholds' must be a non-empty array of numbers");
        cfg.thresholds.clear();
        for (const json& v : arr) {
            if (!v.is_number()) throw ConfigError("'thresholds' entries must be numbers");
            cfg.thresholds.push_back(v.get<double>());
        }
    }
    cfg.out_dir = get_string(j, "out_dir", cfg.out_dir);

    cfg.model.slice_size = cfg.synthetic.slice_size;
    cfg.validate();
    return cfg;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (clients < 1) throw ConfigError("'clients' must be >= 1, got " + std::to_string(clients));
    if (strategies.empty()) throw ConfigError("at least one strategy is required");
    for (const Strategy& s : strategies) s.validate();
    std::set<std::string> labels;
    for (const Strategy& s : strategies)
        if (!labels.insert(strategy_display_label(s)).second)
            throw ConfigError("duplicate strategy '" + strategy_display_label(s) + "'");
    if (levels.empty()) throw ConfigError("at least one heterogeneity level is required");
    if (seeds.empty()) throw ConfigError("'seeds' must be non-empty");
    {
        std::set<uint64_t> uniq(seeds.begin(), seeds.end());
        if (uniq.size() != seeds.size()) throw ConfigError("'seeds' contains duplicates");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0))
        throw ConfigError("'validation_fraction' must lie in (0,1), got " +
                          format_double(validation_fraction));
    for (double t : thresholds)
        if (!(t > 0.0 && t <= 1.0))
            throw ConfigError("'thresholds' entries must lie in (0,1], got " + format_double(t));
    round.validate();
    if (bundle_path.empty()) {
        synthetic.validate();
        ModelConfig m = model;
        m.slice_size = synthetic.slice_size;
        m.validate();
    }
    if (out_dir.empty()) throw ConfigError("'out_dir' must not be empty");
}

ExperimentConfig parse_config_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config_json(j);
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

// ---------------------------------------------------------------------------
// Report emission
// ---------------------------------------------------------------------------

namespace {

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeFailure("cannot open '" + path.string() + "' for writing");
    out << content;
    out.close();
    if (!out) throw RuntimeFailure("write to '" + path.string() + "' failed");
}

std::string convergence_csv(const std::vector<RoundRecord>& rounds) {
    std::ostringstream out;
    std::vector<int> client_ids;
    for (const auto& [cid, score] : rounds.front().per_client) client_ids.push_back(cid);
    out << "round";
    for (int cid : client_ids)
        out << ",client" << cid << "_wt,client" << cid << "_tc,client" << cid << "_et,client"
            << cid << "_mean";
    out << ",global_mean_dice,mean_val_loss\n";
    for (const RoundRecord& rec : rounds) {
        out << rec.round_index;
        for (int cid : client_ids) {
            const ClientScore& s = rec.per_client.at(cid);
            out << ',' << format_double(s.dice_wt) << ',' << format_double(s.dice_tc) << ','
                << format_double(s.dice_et) << ',' << format_double(s.mean_dice);
        }
        out << ',' << format_double(rec.global_mean_dice) << ','
            << format_double(rec.mean_val_loss) << '\n';
    }
    return out.str();
}

std::string slices_csv(const std::vector<SliceRow>& rows) {
    std::ostringstream out;
    out << "round,client_id,case_id,slice_index,dice_wt,dice_tc,dice_et,mean_dice\n";
    for (const SliceRow& r : rows)
        out << r.round << ',' << r.client_id << ',' << r.case_id << ',' << r.slice_index << ','
            << format_double(r.dice_wt) << ',' << format_double(r.dice_tc) << ','
            << format_double(r.dice_et) << ',' << format_double(r.mean_dice) << '\n';
    return out.str();
}

struct JobSpec {
    HeterogeneityLevel level = HeterogeneityLevel::H0;
    Strategy strategy;
    std::string label;
    uint64_t seed = 0;
    std::string dir_name;
};

struct JobOutput {
    std::vector<RoundRecord> rounds;
    bool has_reports = false;
    RobustnessReport robustness;
    SubregionGaps gaps;
    double seconds = 0;
    std::vector<std::string> files;
    bool done = false;
};

json config_echo(const ExperimentConfig& cfg, const ModelConfig& resolved_model) {
    json j;
    json data;
    data["source"] = cfg.bundle_path.empty() ? std::string("synthetic") : cfg.bundle_path;
    if (cfg.bundle_path.empty()) {
        data["case_count"] = cfg.synthetic.case_count;
        data["slices_per_case"] = cfg.synthetic.slices_per_case;
        data["slice_size"] = cfg.synthetic.slice_size;
        data["wt_radius_min"] = cfg.synthetic.wt_radius_min;
        data["wt_radius_max"] = cfg.synthetic.wt_radius_max;
        data["tc_shrink_min"] = cfg.synthetic.tc_shrink_min;
        data["tc_shrink_max"] = cfg.synthetic.tc_shrink_max;
        data["et_shrink_min"] = cfg.synthetic.et_shrink_min;
        data["et_shrink_max"] = cfg.synthetic.et_shrink_max;
        data["profile_jitter"] = cfg.synthetic.profile_jitter;
        data["background_wave_amp"] = cfg.synthetic.background_wave_amp;
        data["texture_noise"] = cfg.synthetic.texture_noise;
    }
    j["data"] = data;
    j["model"] = {{"depth", resolved_model.depth},
                  {"base_channels", resolved_model.base_channels},
                  {"slice_size", resolved_model.slice_size}};
    j["clients"] = cfg.clients;
    json levels = json::array();
    for (auto lv : cfg.levels) levels.push_back(level_name(lv));
    j["levels"] = levels;
    json strategies = json::array();
    for (const Strategy& s : cfg.strategies) {
        json e;
        e["kind"] = strategy_name(s.kind);
        if (s.kind == StrategyKind::FedProx) e["mu"] = s.mu;
        strategies.push_back(e);
    }
    j["strategies"] = strategies;
    j["rounds"] = cfg.round.rounds;
    j["local_epochs"] = cfg.round.local_epochs;
    j["batch_size"] = cfg.round.batch_size;
    j["lr"] = cfg.round.lr;
    j["weight_decay"] = cfg.round.weight_decay;
    j["validation_fraction"] = cfg.validation_fraction;
    j["seeds"] = cfg.seeds;
    j["thresholds"] = cfg.thresholds;
    j["out_dir"] = cfg.out_dir;
    return j;
}

}  // namespace

void run_experiments(const ExperimentConfig& cfg, int max_threads) {
    cfg.validate();
    if (max_threads < 1) throw ConfigError("thread cap must be >= 1");
    fs::create_directories(cfg.out_dir);

    ModelConfig mc = cfg.model;
    std::vector<Case> bundle_cases;
    std::map<uint64_t, std::vector<Case>> cases_by_seed;
    if (!cfg.bundle_path.empty()) {
        bundle_cases = load_slice_bundle(cfg.bundle_path);
        if (bundle_cases.empty()) throw ValidationError("bundle contains no cases");
        const int S = bundle_cases.front().slices.front().image.shape[1];
        for (const Case& c : bundle_cases)
            if (c.slices.front().image.shape[1] != S)
                throw ValidationError("bundle mixes slice sizes; case " + c.case_id +
                                      " differs from " + std::to_string(S));
        mc.slice_size = S;
    } else {
        for (uint64_t seed : cfg.seeds) {
            SyntheticConfig sc = cfg.synthetic;
            sc.master_seed = seed;
            cases_by_seed.emplace(seed, generate_dataset(sc));
        }
        mc.slice_size = cfg.synthetic.slice_size;
    }
    mc.validate();

    std::vector<JobSpec> jobs;
    for (HeterogeneityLevel level : cfg.levels)
        for (const Strategy& strategy : cfg.strategies)
            for (uint64_t seed : cfg.seeds) {
                JobSpec spec;
                spec.level = level;
                spec.strategy = strategy;
                spec.label = strategy_display_label(strategy);
                spec.seed = seed;
                spec.dir_name = std::string(level_name(level)) + "_" + spec.label + "_seed" +
                                std::to_string(seed);
                jobs.push_back(std::move(spec));
            }

    const int job_count = static_cast<int>(jobs.size());
    const int job_threads = job_count > 1 ? max_threads : 1;
    const int client_threads = job_count > 1 ? 1 : max_threads;

    std::vector<JobOutput> outputs(jobs.size());
    const auto run_job = [&](int idx) {
        const JobSpec& spec = jobs[static_cast<size_t>(idx)];
        JobOutput& out = outputs[static_cast<size_t>(idx)];
        const auto t0 = std::chrono::steady_clock::now();

        const std::vector<Case>& source =
            cfg.bundle_path.empty() ? cases_by_seed.at(spec.seed) : bundle_cases;
        std::vector<ClientDataset> clients = partition_cases(source, cfg.clients, spec.seed);
        const ValidationSet val =
            build_validation_set(clients, cfg.validation_fraction, spec.seed);

        RoundConfig rc = cfg.round;
        rc.level = spec.level;
        rc.experiment_seed = spec.seed;
        ExperimentResult<float> res = run_experiment<float>(spec.strategy, rc, mc,
                                                            std::move(clients), val, client_threads);

        const fs::path dir = fs::path(cfg.out_dir) / spec.dir_name;
        fs::create_directories(dir);
        write_text_file(dir / "convergence.csv", convergence_csv(res.rounds));
        write_text_file(dir / "slices.csv", slices_csv(res.slice_rows));
        save_param_set(res.global, (dir / "checkpoint.fstp").string());
        out.files = {spec.dir_name + "/convergence.csv", spec.dir_name + "/slices.csv",
                     spec.dir_name + "/checkpoint.fstp"};
        for (const auto& [cid, params] : res.final_client_params) {
            const std::string name = "client" + std::to_string(cid) + "_norm.fstp";
            save_param_set(norm_subset(params), (dir / name).string());
            out.files.push_back(spec.dir_name + "/" + name);
        }

        out.rounds = std::move(res.rounds);
        if (cfg.clients >= 2) {
            const RoundRecord& last = out.rounds.back();
            std::map<int, double> mean_dice;
            for (const auto& [cid, score] : last.per_client) mean_dice[cid] = score.mean_dice;
            out.robustness = client_robustness(mean_dice);
            out.gaps = subregion_gaps(last.per_client);
            out.has_reports = true;
        }
        out.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        out.done = true;
    };

    std::string failure;
    try {
        run_parallel(job_count, job_threads, run_job);
    } catch (const std::exception& e) {
        failure = e.what();
    }

    std::vector<std::string> merged_files;
    if (failure.empty()) {
        {
            std::ostringstream out;
            out << "level,strategy,seed,client_count,worst_client,worst,best_client,best,gap,mean\n";
            for (size_t i = 0; i < jobs.size(); ++i) {
                if (!outputs[i].has_reports) continue;
                const RobustnessReport& r = outputs[i].robustness;
                out << level_name(jobs[i].level) << ',' << jobs[i].label << ',' << jobs[i].seed
                    << ',' << cfg.clients << ',' << r.worst_client_id << ','
                    << format_double(r.worst) << ',' << r.best_client_id << ','
                    << format_double(r.best) << ',' << format_double(r.gap) << ','
                    << format_double(r.mean) << '\n';
            }
            write_text_file(fs::path(cfg.out_dir) / "robustness.csv", out.str());
            merged_files.push_back("robustness.csv");
        }
        {
            std::ostringstream out;
            out << "level,strategy,seed,wt_gap,tc_gap,et_gap,mean_gap,mean_dice_gap\n";
            for (size_t i = 0; i < jobs.size(); ++i) {
                if (!outputs[i].has_reports) continue;
                const SubregionGaps& g = outputs[i].gaps;
                out << level_name(jobs[i].level) << ',' << jobs[i].label << ',' << jobs[i].seed
                    << ',' << format_double(g.wt_gap) << ',' << format_double(g.tc_gap) << ','
                    << format_double(g.et_gap) << ',' << format_double(g.mean_gap) << ','
                    << format_double(g.mean_dice_gap) << '\n';
            }
            write_text_file(fs::path(cfg.out_dir) / "subregion_gaps.csv", out.str());
            merged_files.push_back("subregion_gaps.csv");
        }
        if (cfg.levels.size() > 1) {
            std::ostringstream out;
            out << "level,strategy,seed,best_mean_dice,best_round";
            for (double t : cfg.thresholds) out << ",rounds_to_" << format_double(t);
            out << '\n';
            for (size_t i = 0; i < jobs.size(); ++i) {
                const HeterogeneitySummary s =
                    heterogeneity_summary(outputs[i].rounds, cfg.thresholds);
                out << level_name(jobs[i].level) << ',' << jobs[i].label << ',' << jobs[i].seed
                    << ',' << format_double(s.best_mean_dice) << ',' << s.best_round;
                for (int r : s.rounds_to_threshold) {
                    if (r == kNotReached)
                        out << ",--";
                    else
                        out << ',' << r;
                }
                out << '\n';
            }
            write_text_file(fs::path(cfg.out_dir) / "heterogeneity_summary.csv", out.str());
            merged_files.push_back("heterogeneity_summary.csv");
        }
        if (cfg.clients >= 2) {
            std::ostringstream out;
            out << "level,strategy,metric,mean,min,max\n";
            for (HeterogeneityLevel level : cfg.levels) {
                for (const Strategy& strategy : cfg.strategies) {
                    const std::string label = strategy_display_label(strategy);
                    std::vector<const RobustnessReport*> reports;
                    for (size_t i = 0; i < jobs.size(); ++i)
                        if (jobs[i].level == level && jobs[i].label == label &&
                            outputs[i].has_reports)
                            reports.push_back(&outputs[i].robustness);
                    if (reports.empty()) continue;
                    const struct {
                        const char* name;
                        double RobustnessReport::*field;
                    } metrics[] = {{"worst", &RobustnessReport::worst},
                                   {"best", &RobustnessReport::best},
                                   {"gap", &RobustnessReport::gap},
                                   {"mean", &RobustnessReport::mean}};
                    for (const auto& m : metrics) {
                        double sum = 0, lo = reports[0]->*(m.field), hi = lo;
                        for (const auto* r : reports) {
                            const double v = r->*(m.field);
                            sum += v;
                            lo = std::min(lo, v);
                            hi = std::max(hi, v);
                        }
                        out << level_name(level) << ',' << label << ',' << m.name << ','
                            << format_double(sum / static_cast<double>(reports.size())) << ','
                            << format_double(lo) << ',' << format_double(hi) << '\n';
                    }
                }
            }
            write_text_file(fs::path(cfg.out_dir) / "seed_summary.csv", out.str());
            merged_files.push_back("seed_summary.csv");
        }
    }

    json manifest;
    manifest["version"] = kFedstressVersion;
    manifest["config"] = config_echo(cfg, mc);
    manifest["complete"] = failure.empty();
    if (!failure.empty()) manifest["error"] = failure;
    json job_list = json::array();
    for (size_t i = 0; i < jobs.size(); ++i) {
        json e;
        e["level"] = level_name(jobs[i].level);
        e["strategy"] = jobs[i].label;
        e["seed"] = jobs[i].seed;
        e["dir"] = jobs[i].dir_name;
        e["complete"] = outputs[i].done;
        e["seconds"] = outputs[i].seconds;
        e["files"] = outputs[i].files;
        job_list.push_back(e);
    }
    manifest["jobs"] = job_list;
    manifest["reports"] = merged_files;
    write_text_file(fs::path(cfg.out_dir) / "manifest.json", manifest.dump(2) + "\n");

    if (!failure.empty()) throw RuntimeFailure(failure);
}

// ---------------------------------------------------------------------------
// compare
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_double_field(const std::string& s, const std::string& path) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw FormatError("non-numeric field '" + s + "' in " + path, 0);
    return v;
}

}  // namespace

void compare_reports(const std::vector<std::string>& paths, const std::string& out_csv,
                     std::ostream& out) {
    if (paths.empty()) throw PreconditionError("compare needs at least one report");

    struct Accum {
        double worst = 0, best = 0, gap = 0, mean = 0;
        size_t rows = 0;
    };
    std::map<std::string, Accum> by_strategy;
    int client_count = -1;

    for (const std::string& path : paths) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw RuntimeFailure("cannot open report '" + path + "'");
        std::string line;
        if (!std::getline(in, line)) throw FormatError("empty report '" + path + "'", 0);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const std::vector<std::string> header = split_csv_line(line);
        auto col = [&](const std::string& name) {
            for (size_t i = 0; i < header.size(); ++i)
                if (header[i] == name) return i;
            throw FormatError("report '" + path + "' lacks column '" + name + "'", 0);
        };
        const size_t c_strategy = col("strategy");
        const size_t c_count = col("client_count");
        const size_t c_worst = col("worst");
        const size_t c_best = col("best");
        const size_t c_gap = col("gap");
        const size_t c_mean = col("mean");

        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty()) continue;
            const std::vector<std::string> f = split_csv_line(line);
            if (f.size() != header.size())
                throw FormatError("malformed row in '" + path + "'", 0);
            const int count = static_cast<int>(parse_double_field(f[c_count], path));
            if (client_count == -1)
                client_count = count;
            else if (client_count != count)
                throw ValidationError("reports disagree on client count (" +
                                      std::to_string(client_count) + " vs " +
                                      std::to_string(count) + ")");
            Accum& a = by_strategy[f[c_strategy]];
            a.worst += parse_double_field(f[c_worst], path);
            a.best += parse_double_field(f[c_best], path);
            a.gap += parse_double_field(f[c_gap], path);
            a.mean += parse_double_field(f[c_mean], path);
            a.rows += 1;
        }
    }
    if (by_strategy.empty()) throw ValidationError("no robustness rows found in the given reports");

    struct Row {
        std::string strategy;
        double worst, best, gap, mean;
        size_t rows;
    };
    std::vector<Row> rows;
    for (const auto& [label, a] : by_strategy) {
        const double n = static_cast<double>(a.rows);
        rows.push_back(Row{label, a.worst / n, a.best / n, a.gap / n, a.mean / n, a.rows});
    }
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        return a.gap != b.gap ? a.gap < b.gap : a.strategy < b.strategy;
    });

    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %8s %8s %8s %8s %6s\n", "strategy", "worst", "best",
                  "gap", "mean", "runs");
    out << buf;
    std::ostringstream csv;
    csv << "strategy,client_count,runs,worst,best,gap,mean\n";
    for (const Row& r : rows) {
        std::snprintf(buf, sizeof buf, "%-16s %8.4f %8.4f %8.4f %8.4f %6zu\n", r.strategy.c_str(),
                      r.worst, r.best, r.gap, r.mean, r.rows);
        out << buf;
        csv << r.strategy << ',' << client_count << ',' << r.rows << ',' << format_double(r.worst)
            << ',' << format_double(r.best) << ',' << format_double(r.gap) << ','
            << format_double(r.mean) << '\n';
    }
    write_text_file(out_csv, csv.str());
}

void generate_bundle(const ExperimentConfig& cfg, const std::string& out_path) {
    if (!cfg.bundle_path.empty())
        throw ConfigError("gen-data requires a synthetic data source");
    const std::vector<Case> cases = generate_dataset(cfg.synthetic);
    save_slice_bundle(cases, out_path);
}

}  // namespace fedstress
