// Acceptance gate: one pass/fail line per criterion. Modes:
//   acceptance fast   <fedstress-binary>   criteria 1,2,3,4,7,8,9,10
//   acceptance trends <fedstress-binary>   criteria 5,6 (full-scale sweeps)
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedstress/fed_engine.hpp"
#include "fedstress/grad_check.hpp"
#include "fedstress/report.hpp"

using namespace fedstress;
namespace fs = std::filesystem;

namespace {

bool g_all_ok = true;

void verdict(int criterion, bool ok, const std::string& detail) {
    if (!ok) g_all_ok = false;
    std::printf("[%s] criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    std::fflush(stdout);
}

void run_criterion(int n, const std::function<void()>& body) {
    try {
        body();
    } catch (const std::exception& e) {
        verdict(n, false, std::string("exception: ") + e.what());
    }
}

std::string fmt4(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double median3(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw RuntimeFailure("cannot open " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct Csv {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    size_t col(const std::string& name) const {
        for (size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw RuntimeFailure("missing column '" + name + "'");
    }
};

Csv load_csv(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw RuntimeFailure("cannot open " + p.string());
    Csv csv;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
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
        if (first) {
            csv.header = std::move(fields);
            first = false;
        } else {
            csv.rows.push_back(std::move(fields));
        }
    }
    return csv;
}

template <typename V>
bool bits_equal(const std::vector<V>& a, const std::vector<V>& b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(V)) == 0);
}

template <typename T>
bool params_bits_equal(const ParameterSet<T>& a, const ParameterSet<T>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].name != b[i].name) return false;
        if (!bits_equal(a[i].tensor.data, b[i].tensor.data)) return false;
    }
    return true;
}

bool records_match(const std::vector<RoundRecord>& a, const std::vector<RoundRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i].round_index != b[i].round_index) return false;
        if (a[i].global_mean_dice != b[i].global_mean_dice) return false;
        if (a[i].mean_val_loss != b[i].mean_val_loss) return false;
        if (a[i].per_client.size() != b[i].per_client.size()) return false;
        for (const auto& [id, s] : a[i].per_client) {
            const auto it = b[i].per_client.find(id);
            if (it == b[i].per_client.end()) return false;
            if (s.dice_wt != it->second.dice_wt || s.dice_tc != it->second.dice_tc ||
                s.dice_et != it->second.dice_et || s.mean_dice != it->second.mean_dice)
                return false;
        }
    }
    return true;
}

ModelConfig small_model() {
    ModelConfig mc;
    mc.depth = 2;
    mc.base_channels = 4;
    mc.slice_size = 16;
    return mc;
}

std::vector<Case> small_cases(int count, uint64_t seed) {
    SyntheticConfig sc;
    sc.case_count = count;
    sc.slices_per_case = 2;
    sc.slice_size = 16;
    sc.master_seed = seed;
    return generate_dataset(sc);
}

// --- criterion 1: full-model gradient check -------------------------------

void criterion_gradients() {
    ModelConfig mc;
    mc.slice_size = 16;
    const Unet<double> net(mc);
    ParameterSet<double> params = net.build_params(11);

    Rng rng(mix_seed(2024, "acceptance", "gradcheck"));
    Tensor<double> batch({2, mc.in_channels, 16, 16});
    for (auto& v : batch.data) v = rng.uniform01();
    Tensor<double> targets({2, mc.out_channels, 16, 16});
    for (auto& v : targets.data) v = rng.uniform01() < 0.3 ? 1.0 : 0.0;

    UnetCache<double> cache;
    const Tensor<double> logits = net.forward(params, batch, Mode::Train, &cache);
    const Tensor<double> grad_logits = seg_loss_backward(logits, targets, mc.dice_smooth);
    params.zero_grads();
    net.backward(params, cache, grad_logits);

    const std::function<double(ParameterSet<double>&)> loss_fn = [&](ParameterSet<double>& p) {
        UnetCache<double> c;
        const Tensor<double> lg = net.forward(p, batch, Mode::Train, &c);
        return seg_loss(lg, targets, mc.dice_smooth).total;
    };
    const double rel = grad_check<double>(loss_fn, params, 50, 1e-6, 31);
    verdict(1, rel < 1e-3,
            "finite-difference gradient check on the full model: max relative error " +
                format_double(rel) + " over 50 probes (gate 1e-3)");
}

// --- criterion 2: aggregation vs brute-force oracle ------------------------

void criterion_aggregation() {
    Rng rng(mix_seed(2024, "acceptance", "aggregate"));
    double worst = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int K = 1 + static_cast<int>(rng.bounded(6));
        const int n = 4 + static_cast<int>(rng.bounded(24));
        std::vector<ClientUpdate<double>> updates(static_cast<size_t>(K));
        for (int k = 0; k < K; ++k) {
            auto& u = updates[static_cast<size_t>(k)];
            u.client_id = k + 1;
            u.sample_count = 1 + rng.bounded(40);
            Tensor<double> w({n});
            for (auto& v : w.data) v = rng.uniform(-3.0, 3.0);
            Tensor<double> stat({3});
            for (auto& v : stat.data) v = rng.uniform(0.0, 1.0);
            u.params.add("w", std::move(w), ParamTag::Aggregatable, true);
            u.params.add("bn.running_mean", std::move(stat), ParamTag::NormLocal, false);
        }
        const ParameterSet<double> merged = aggregate(updates, Strategy{});

        double total = 0;
        for (const auto& u : updates) total += static_cast<double>(u.sample_count);
        for (size_t e = 0; e < merged.size(); ++e) {
            for (size_t i = 0; i < merged[e].tensor.data.size(); ++i) {
                double oracle = 0;
                for (const auto& u : updates)
                    oracle += static_cast<double>(u.sample_count) / total * u.params[e].tensor.data[i];
                worst = std::max(worst, std::abs(merged[e].tensor.data[i] - oracle));
            }
        }
    }
    verdict(2, worst <= 1e-12,
            "sample-weighted aggregation vs per-coordinate oracle: max abs error " +
                format_double(worst) + " over 100 random parameter sets (gate 1e-12)");
}

// --- criterion 3: client-local norm statistics -----------------------------

void criterion_norm_locality() {
    const std::vector<Case> cases = small_cases(12, 5);
    const ModelConfig mc = small_model();
    RoundConfig rc;
    rc.rounds = 3;
    rc.batch_size = 4;
    rc.lr = 1e-3;
    rc.level = HeterogeneityLevel::H2;
    rc.experiment_seed = 5;
    const Strategy fedbn{StrategyKind::FedBn, 0.01};

    std::vector<ClientDataset> clients = partition_cases(cases, 4, 5);
    const ValidationSet val = build_validation_set(clients, 0.25, 5);
    const auto base = run_experiment<float>(fedbn, rc, mc, clients, val, 1);

    std::vector<int> ids;
    for (const auto& [id, p] : base.final_client_params) ids.push_back(id);

    bool norm_diverged = true;
    std::string same_entry;
    for (size_t i = 0; i < ids.size() && norm_diverged; ++i) {
        for (size_t j = i + 1; j < ids.size() && norm_diverged; ++j) {
            const auto& a = base.final_client_params.at(ids[i]);
            const auto& b = base.final_client_params.at(ids[j]);
            for (const auto& e : a) {
                if (e.tag != ParamTag::NormLocal) continue;
                if (bits_equal(e.tensor.data, b.at(e.name).tensor.data)) {
                    norm_diverged = false;
                    same_entry = e.name + " identical for clients " + std::to_string(ids[i]) +
                                 "/" + std::to_string(ids[j]);
                    break;
                }
            }
        }
    }

    bool shared_identical = true;
    std::vector<ParameterSet<float>> merged;
    for (int id : ids) {
        ParameterSet<float> p = base.global;
        for (auto& e : p)
            if (e.tag == ParamTag::NormLocal)
                e.tensor.data = base.final_client_params.at(id).at(e.name).tensor.data;
        merged.push_back(std::move(p));
    }
    for (size_t i = 1; i < merged.size() && shared_identical; ++i)
        for (size_t e = 0; e < merged[0].size(); ++e) {
            if (merged[0][e].tag == ParamTag::NormLocal) continue;
            if (!bits_equal(merged[0][e].tensor.data, merged[i][e].tensor.data)) {
                shared_identical = false;
                break;
            }
        }

    std::vector<ClientDataset> permuted = partition_cases(cases, 4, 5);
    ValidationSet val2 = build_validation_set(permuted, 0.25, 5);
    for (auto& c : permuted)
        if (c.client_id == 3) std::reverse(c.cases.begin(), c.cases.end());
    const auto rerun = run_experiment<float>(fedbn, rc, mc, permuted, val2, 1);
    bool peers_untouched = true;
    for (int id : {1, 2, 4}) {
        const auto& a = base.final_client_params.at(id);
        const auto& b = rerun.final_client_params.at(id);
        for (const auto& e : a)
            if (e.tag == ParamTag::NormLocal && !bits_equal(e.tensor.data, b.at(e.name).tensor.data))
                peers_untouched = false;
    }

    const bool ok = norm_diverged && shared_identical && peers_untouched;
    std::string detail = "after 3 rounds at level H2: norm-local entries " +
                         std::string(norm_diverged ? "all differ" : "FAILED (" + same_entry + ")") +
                         " across 4 clients; shared entries post-merge " +
                         std::string(shared_identical ? "identical" : "DIFFER") +
                         "; permuting client 3's case order left peers " +
                         std::string(peers_untouched ? "bit-identical" : "CHANGED");
    verdict(3, ok, detail);
}

// --- criterion 4: metric pipeline regression -------------------------------

void criterion_metric_regression() {
    bool ok = true;
    std::ostringstream detail;

    struct Ref {
        const char* label;
        std::map<int, double> per_client;
        const char* worst;
        const char* best;
        const char* gap;
    };
    const std::vector<Ref> refs = {
        {"fedavg", {{1, 0.7309}, {2, 0.7802}, {3, 0.8025}, {4, 0.8159}}, "0.7309", "0.8159",
         "0.0850"},
        {"fedprox", {{1, 0.7421}, {2, 0.7788}, {3, 0.7912}, {4, 0.8085}}, "0.7421", "0.8085",
         "0.0664"},
        {"fedbn", {{1, 0.7656}, {2, 0.7904}, {3, 0.8023}, {4, 0.8159}}, "0.7656", "0.8159",
         "0.0503"},
    };
    detail << "gaps";
    for (const Ref& r : refs) {
        const RobustnessReport rep = client_robustness(r.per_client);
        const bool row_ok = fmt4(rep.worst) == r.worst && fmt4(rep.best) == r.best &&
                            fmt4(rep.gap) == r.gap && rep.worst_client_id == 1;
        ok = ok && row_ok;
        detail << ' ' << r.label << '=' << fmt4(rep.gap) << (row_ok ? "" : "(MISMATCH)");
    }

    auto curve_records = [](const std::vector<double>& curve) {
        std::vector<RoundRecord> recs;
        for (size_t i = 0; i < curve.size(); ++i) {
            RoundRecord r;
            r.round_index = static_cast<int>(i) + 1;
            r.global_mean_dice = curve[i];
            r.per_client[1] = ClientScore{curve[i], curve[i], curve[i], curve[i]};
            recs.push_back(std::move(r));
        }
        return recs;
    };
    const HeterogeneitySummary h0 = heterogeneity_summary(
        curve_records({0.70, 0.74, 0.76, 0.772, 0.781, 0.801, 0.805, 0.810, 0.818, 0.816}),
        {0.78, 0.80});
    const bool h0_ok = h0.best_mean_dice == 0.818 && h0.best_round == 9 &&
                       h0.rounds_to_threshold == std::vector<int>{5, 6};
    const HeterogeneitySummary h3 = heterogeneity_summary(
        curve_records({0.70, 0.72, 0.74, 0.75, 0.76, 0.77, 0.775, 0.782, 0.792, 0.790}),
        {0.78, 0.80});
    const bool h3_ok = h3.best_mean_dice == 0.792 && h3.best_round == 9 &&
                       h3.rounds_to_threshold[0] == 8 && h3.rounds_to_threshold[1] == kNotReached;
    ok = ok && h0_ok && h3_ok;
    detail << "; convergence summary best " << format_double(h0.best_mean_dice) << " @ round "
           << h0.best_round << ", thresholds at rounds " << h0.rounds_to_threshold[0] << "/"
           << h0.rounds_to_threshold[1] << (h0_ok ? "" : " (MISMATCH)")
           << "; unreached threshold sentinel " << (h3_ok ? "held" : "FAILED");
    verdict(4, ok, detail.str());
}

// --- criteria 5 and 6: full-scale trend reproduction -----------------------

std::string trends_config(const std::string& bundle, const std::string& levels,
                          const std::string& strategies, const std::string& out_dir) {
    return std::string(R"({
        "data": {"source": ")") +
           bundle + R"("},
        "model": {"depth": 2, "base_channels": 16},
        "clients": 4,
        "levels": [)" +
           levels + R"(], "strategies": [)" + strategies + R"(],
        "rounds": 10, "batch_size": 8, "lr": 0.003,
        "seeds": [1, 2, 3], "out_dir": ")" + out_dir + "\"}";
}

void criteria_trends() {
    const fs::path base = fs::absolute("acceptance_trends_tmp");
    fs::remove_all(base);
    fs::create_directories(base);
    const int threads = env_thread_cap();

    // One fixed 40-case dataset shared by every sweep; seeds then vary only the
    // client split, initialization, shuffling, and sampled transforms.
    const std::string bundle = (base / "task.fssb").string();
    const ExperimentConfig gen = parse_config_text(
        R"({"data": {"case_count": 40, "slices_per_case": 4, "slice_size": 64, "master_seed": 1}})");
    generate_bundle(gen, bundle);

    run_criterion(5, [&]() {
        ExperimentConfig sweep_avg = parse_config_text(trends_config(
            bundle, R"("H0", "H1", "H2", "H3")", R"("fedavg")", (base / "fedavg").string()));
        run_experiments(sweep_avg, threads);

        const Csv summary = load_csv(base / "fedavg" / "heterogeneity_summary.csv");
        const size_t c_level = summary.col("level");
        const size_t c_best = summary.col("best_mean_dice");
        std::map<std::string, std::vector<double>> best_by_level;
        for (const auto& row : summary.rows)
            best_by_level[row[c_level]].push_back(std::strtod(row[c_best].c_str(), nullptr));

        std::vector<double> med;
        std::ostringstream d5;
        d5 << "median best dice over 3 seeds:";
        for (const char* lvl : {"H0", "H1", "H2", "H3"}) {
            med.push_back(median3(best_by_level.at(lvl)));
            d5 << ' ' << lvl << '=' << fmt4(med.back());
        }
        bool ok5 = true;
        for (size_t i = 1; i < med.size(); ++i) ok5 = ok5 && med[i] <= med[i - 1] + 0.005;
        d5 << " (non-increasing within 0.005)";
        verdict(5, ok5, d5.str());
    });

    run_criterion(6, [&]() {
        ExperimentConfig sweep_alt = parse_config_text(trends_config(
            bundle, R"("H3")", R"("fedprox", "fedbn")", (base / "alt").string()));
        run_experiments(sweep_alt, threads);

        auto collect = [](const fs::path& p, const std::string& strategy, const char* field) {
            const Csv csv = load_csv(p);
            const size_t c_level = csv.col("level");
            const size_t c_strategy = csv.col("strategy");
            const size_t c_field = csv.col(field);
            std::vector<double> out;
            for (const auto& row : csv.rows)
                if (row[c_level] == "H3" && row[c_strategy] == strategy)
                    out.push_back(std::strtod(row[c_field].c_str(), nullptr));
            if (out.size() != 3) throw RuntimeFailure("expected 3 seed rows for " + strategy);
            return out;
        };
        const fs::path avg_csv = base / "fedavg" / "robustness.csv";
        const fs::path alt_csv = base / "alt" / "robustness.csv";
        const double gap_avg = median3(collect(avg_csv, "fedavg", "gap"));
        const double worst_avg = median3(collect(avg_csv, "fedavg", "worst"));
        const double gap_bn = median3(collect(alt_csv, "fedbn", "gap"));
        const double worst_bn = median3(collect(alt_csv, "fedbn", "worst"));
        const double gap_prox = median3(collect(alt_csv, "fedprox", "gap"));
        const double worst_prox = median3(collect(alt_csv, "fedprox", "worst"));

        const bool ok = gap_bn < gap_avg && worst_bn > worst_avg;
        std::ostringstream d;
        d << "H3 medians: gap fedbn=" << fmt4(gap_bn) << " vs fedavg=" << fmt4(gap_avg)
          << ", worst fedbn=" << fmt4(worst_bn) << " vs fedavg=" << fmt4(worst_avg)
          << " (fedprox gap=" << fmt4(gap_prox) << " worst=" << fmt4(worst_prox) << ")";
        verdict(6, ok, d.str());
    });
}

// --- criterion 7: degenerate equivalences ----------------------------------

void criterion_equivalences() {
    const ModelConfig mc = small_model();
    RoundConfig rc;
    rc.rounds = 2;
    rc.batch_size = 4;
    rc.lr = 1e-3;
    rc.level = HeterogeneityLevel::H1;
    rc.experiment_seed = 7;
    const std::vector<Case> cases = small_cases(8, 7);

    std::vector<ClientDataset> clients = partition_cases(cases, 2, 7);
    const ValidationSet val = build_validation_set(clients, 0.25, 7);
    const auto res_avg = run_experiment<float>(Strategy{StrategyKind::FedAvg, 0.01}, rc, mc,
                                               clients, val, 1);
    const auto res_mu0 = run_experiment<float>(Strategy{StrategyKind::FedProx, 0.0}, rc, mc,
                                               clients, val, 1);
    const bool prox_ok = params_bits_equal(res_avg.global, res_mu0.global) &&
                         records_match(res_avg.rounds, res_mu0.rounds);

    std::vector<ClientDataset> solo = partition_cases(cases, 1, 7);
    const ValidationSet solo_val = build_validation_set(solo, 0.25, 7);
    const ClientDataset all_data = solo[0];
    const auto res_k1 = run_experiment<float>(Strategy{StrategyKind::FedAvg, 0.01}, rc, mc, solo,
                                              solo_val, 1);
    const auto res_cen = run_centralized<float>(rc, mc, all_data, solo_val);
    const bool central_ok = params_bits_equal(res_k1.global, res_cen.global) &&
                            records_match(res_k1.rounds, res_cen.rounds);

    RoundConfig rc0 = rc;
    rc0.level = HeterogeneityLevel::H0;
    rc0.experiment_seed = 9;
    ClientDataset twin_a, twin_b;
    twin_a.client_id = 1;
    twin_b.client_id = 2;
    for (int i = 0; i < 6; ++i) {
        twin_a.cases.push_back(cases[static_cast<size_t>(i)]);
        twin_b.cases.push_back(cases[static_cast<size_t>(i)]);
    }
    ValidationSet twin_val;
    for (int i = 6; i < 8; ++i) {
        twin_val.cases.push_back(ValidationCase{1, cases[static_cast<size_t>(i)]});
        twin_val.cases.push_back(ValidationCase{2, cases[static_cast<size_t>(i)]});
    }
    const auto twin_avg = run_experiment<float>(Strategy{StrategyKind::FedAvg, 0.01}, rc0, mc,
                                                {twin_a, twin_b}, twin_val, 1);
    const auto twin_bn = run_experiment<float>(Strategy{StrategyKind::FedBn, 0.01}, rc0, mc,
                                               {twin_a, twin_b}, twin_val, 1);
    double max_diff = 0;
    for (size_t r = 0; r < twin_avg.rounds.size(); ++r) {
        max_diff = std::max(max_diff, std::abs(twin_avg.rounds[r].global_mean_dice -
                                               twin_bn.rounds[r].global_mean_dice));
        for (const auto& [id, s] : twin_avg.rounds[r].per_client)
            max_diff = std::max(max_diff,
                                std::abs(s.mean_dice - twin_bn.rounds[r].per_client.at(id).mean_dice));
    }
    const bool twin_ok = max_diff < 1e-6;

    verdict(7, prox_ok && central_ok && twin_ok,
            std::string("zero-strength proximal run ") + (prox_ok ? "matches" : "DIVERGES FROM") +
                " plain averaging bitwise; single-client federation " +
                (central_ok ? "matches" : "DIVERGES FROM") +
                " centralized training bitwise; identical-data norm-local vs plain dice diff " +
                format_double(max_diff) + " (gate 1e-6)");
}

// --- criterion 8: transform protocol ---------------------------------------

void criterion_transforms() {
    Rng img_rng(mix_seed(2024, "acceptance", "transform_image"));
    Tensor<float> image({4, 16, 16});
    for (auto& v : image.data) v = static_cast<float>(img_rng.uniform01());

    bool identity_ok = true;
    for (int cid = 1; cid <= 7; ++cid) {
        const TransformSpec spec = spec_for(cid, HeterogeneityLevel::H0);
        Rng stream(55);
        const SampledTransform t = sample(spec, stream);
        const Tensor<float> out = apply(image, t, stream);
        identity_ok = identity_ok && is_identity(t) && bits_equal(out.data, image.data);
    }

    bool ranges_ok = true;
    const auto check_range = [&](Range have, double lo, double hi) {
        ranges_ok = ranges_ok && have.lo == lo && have.hi == hi;
    };
    check_range(gamma_range(HeterogeneityLevel::H0), 1.0, 1.0);
    check_range(gamma_range(HeterogeneityLevel::H1), 0.8, 1.2);
    check_range(gamma_range(HeterogeneityLevel::H2), 0.6, 1.5);
    check_range(gamma_range(HeterogeneityLevel::H3), 0.5, 2.0);
    check_range(alpha_range(HeterogeneityLevel::H1), 0.95, 1.05);
    check_range(alpha_range(HeterogeneityLevel::H2), 0.9, 1.1);
    check_range(alpha_range(HeterogeneityLevel::H3), 0.8, 1.2);
    check_range(beta_range(HeterogeneityLevel::H1), -0.03, 0.03);
    check_range(beta_range(HeterogeneityLevel::H2), -0.07, 0.07);
    check_range(beta_range(HeterogeneityLevel::H3), -0.1, 0.1);
    ranges_ok = ranges_ok && sigma_value(HeterogeneityLevel::H0) == 0.0 &&
                sigma_value(HeterogeneityLevel::H1) == 0.01 &&
                sigma_value(HeterogeneityLevel::H2) == 0.03 &&
                sigma_value(HeterogeneityLevel::H3) == 0.05;
    check_range(kappa_range(HeterogeneityLevel::H1), 1.0, 1.0);
    check_range(kappa_range(HeterogeneityLevel::H2), 2.0, 2.0);
    check_range(kappa_range(HeterogeneityLevel::H3), 3.0, 5.0);

    bool sampler_ok = true;
    const auto mc_check = [&](int cid, HeterogeneityLevel level,
                              const std::function<double(const SampledTransform&)>& field,
                              Range bounds) {
        const TransformSpec spec = spec_for(cid, level);
        Rng rng(mix_seed(2024, "acceptance", "mc", static_cast<uint64_t>(cid),
                         static_cast<uint64_t>(level)));
        double lo = 1e300, hi = -1e300;
        for (int i = 0; i < 10000; ++i) {
            const SampledTransform t = sample(spec, rng);
            const double v = field(t);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (bounds.is_point()) {
            sampler_ok = sampler_ok && lo == bounds.lo && hi == bounds.lo;
        } else {
            const double range = bounds.hi - bounds.lo;
            sampler_ok = sampler_ok && lo >= bounds.lo && hi <= bounds.hi &&
                         lo <= bounds.lo + 0.01 * range && hi >= bounds.hi - 0.01 * range;
        }
    };
    for (HeterogeneityLevel level :
         {HeterogeneityLevel::H1, HeterogeneityLevel::H2, HeterogeneityLevel::H3}) {
        mc_check(2, level, [](const SampledTransform& t) { return t.gamma; }, gamma_range(level));
        mc_check(3, level, [](const SampledTransform& t) { return t.alpha; }, alpha_range(level));
        mc_check(3, level, [](const SampledTransform& t) { return t.beta; }, beta_range(level));
        mc_check(4, level, [](const SampledTransform& t) { return t.sigma; },
                 Range{sigma_value(level), sigma_value(level)});
        mc_check(4, level, [](const SampledTransform& t) { return t.kappa; }, kappa_range(level));
    }

    SyntheticConfig sc;
    sc.case_count = 6;
    sc.slices_per_case = 2;
    sc.slice_size = 32;
    sc.master_seed = 13;
    const std::vector<Case> cases = generate_dataset(sc);
    bool monotone_ok = true;
    std::ostringstream mono;
    for (int cid : {2, 3, 4}) {
        std::vector<double> dist;
        for (int l = 0; l <= 3; ++l) {
            const auto level = static_cast<HeterogeneityLevel>(l);
            const TransformSpec spec = spec_for(cid, level);
            Rng rng(mix_seed(2024, "acceptance", "distortion", static_cast<uint64_t>(cid),
                             static_cast<uint64_t>(l)));
            double sum = 0;
            size_t count = 0;
            for (const Case& c : cases)
                for (const SliceSample& s : c.slices) {
                    const SampledTransform t = sample(spec, rng);
                    const Tensor<float> out = apply(s.image, t, rng);
                    for (size_t i = 0; i < out.data.size(); ++i)
                        sum += std::abs(static_cast<double>(out.data[i]) - s.image.data[i]);
                    count += out.data.size();
                }
            dist.push_back(sum / static_cast<double>(count));
        }
        for (size_t i = 1; i < dist.size(); ++i) monotone_ok = monotone_ok && dist[i] > dist[i - 1];
        mono << ' ' << family_name(spec_for(cid, HeterogeneityLevel::H1).family) << '='
             << fmt4(dist[1]) << '/' << fmt4(dist[2]) << '/' << fmt4(dist[3]);
    }

    verdict(8, identity_ok && ranges_ok && sampler_ok && monotone_ok,
            std::string("level-0 identity ") + (identity_ok ? "bit-exact" : "VIOLATED") +
                "; declared ranges " + (ranges_ok ? "correct" : "WRONG") +
                "; 10k-draw min/max " + (sampler_ok ? "inside bounds with edge coverage" : "OUT OF BOUNDS") +
                "; distortion strictly increasing per family:" + mono.str());
}

// --- criterion 9: CLI determinism across thread counts ---------------------

void criterion_cli_determinism(const std::string& binary) {
    if (binary.empty()) {
        verdict(9, false, "no fedstress binary path supplied on the command line");
        return;
    }
    const fs::path base = fs::absolute("acceptance_cli_tmp");
    fs::remove_all(base);
    fs::create_directories(base);

    const fs::path cfg_path = base / "config.json";
    {
        std::ofstream cfg(cfg_path);
        cfg << R"({
            "data": {"case_count": 8, "slices_per_case": 2, "slice_size": 16},
            "model": {"depth": 2, "base_channels": 4},
            "clients": 2,
            "levels": ["H0", "H1"],
            "strategies": ["fedavg", "fedbn"],
            "rounds": 2,
            "batch_size": 4,
            "lr": 0.003,
            "seeds": [1]
        })";
    }
    const auto run_once = [&](const char* threads, const char* out) {
        const std::string cmd = std::string("FEDSTRESS_THREADS=") + threads + " '" + binary +
                                "' run --config '" + cfg_path.string() + "' --out '" +
                                (base / out).string() + "' > /dev/null 2>&1";
        return std::system(cmd.c_str());
    };
    const int rc_a = run_once("1", "runA");
    const int rc_b = run_once("4", "runB");
    if (rc_a != 0 || rc_b != 0) {
        verdict(9, false, "fedstress run exited nonzero (" + std::to_string(rc_a) + ", " +
                              std::to_string(rc_b) + ")");
        return;
    }

    std::vector<std::string> rel_paths;
    for (const auto& entry : fs::recursive_directory_iterator(base / "runA"))
        if (entry.is_regular_file() && entry.path().filename() != "manifest.json")
            rel_paths.push_back(fs::relative(entry.path(), base / "runA").string());
    std::sort(rel_paths.begin(), rel_paths.end());

    bool equal = !rel_paths.empty();
    std::string first_diff;
    for (const std::string& rel : rel_paths) {
        if (!fs::exists(base / "runB" / rel) ||
            read_bytes(base / "runA" / rel) != read_bytes(base / "runB" / rel)) {
            equal = false;
            first_diff = rel;
            break;
        }
    }
    verdict(9, equal,
            equal ? std::to_string(rel_paths.size()) +
                        " output files byte-identical across FEDSTRESS_THREADS=1 and =4 "
                        "(manifest timing excluded)"
                  : "outputs differ at " + first_diff);
}

// --- criterion 10: data invariants -----------------------------------------

void criterion_data_invariants() {
    SyntheticConfig sc;
    sc.case_count = 250;
    size_t slices = 0;
    for (int i = 0; i < sc.case_count; ++i) {
        const Case c = generate_case(sc, i);
        validate_case(c);
        slices += c.slices.size();
    }
    const bool nesting_ok = slices >= 1000;

    SyntheticConfig part_sc;
    part_sc.case_count = 40;
    part_sc.slices_per_case = 1;
    part_sc.slice_size = 16;
    const std::vector<Case> cases = generate_dataset(part_sc);
    std::vector<std::string> all_ids;
    for (const Case& c : cases) all_ids.push_back(c.case_id);
    std::sort(all_ids.begin(), all_ids.end());

    bool partition_ok = true;
    for (int k : {1, 2, 3, 4, 7}) {
        const std::vector<ClientDataset> clients =
            partition_cases(cases, k, static_cast<uint64_t>(k));
        std::vector<std::string> seen;
        for (const ClientDataset& cd : clients)
            for (const Case& c : cd.cases) seen.push_back(c.case_id);
        std::sort(seen.begin(), seen.end());
        partition_ok = partition_ok && seen == all_ids;
    }

    const std::vector<Case> bundle_cases = small_cases(6, 21);
    const fs::path path = fs::absolute("acceptance_bundle_tmp.fssb");
    save_slice_bundle(bundle_cases, path.string());
    const std::vector<Case> loaded = load_slice_bundle(path.string());
    bool bundle_ok = loaded.size() == bundle_cases.size();
    for (size_t i = 0; bundle_ok && i < loaded.size(); ++i) {
        bundle_ok = loaded[i].case_id == bundle_cases[i].case_id &&
                    loaded[i].slices.size() == bundle_cases[i].slices.size();
        for (size_t j = 0; bundle_ok && j < loaded[i].slices.size(); ++j)
            bundle_ok = bits_equal(loaded[i].slices[j].image.data,
                                   bundle_cases[i].slices[j].image.data) &&
                        bits_equal(loaded[i].slices[j].labels.data,
                                   bundle_cases[i].slices[j].labels.data);
    }
    fs::remove(path);

    verdict(10, nesting_ok && partition_ok && bundle_ok,
            std::to_string(slices) + " slices nested and in [0,1]; partitions " +
                (partition_ok ? "disjoint and exhaustive" : "BROKEN") +
                " for K in {1,2,3,4,7}; bundle round-trip " + (bundle_ok ? "exact" : "LOSSY"));
}

}  // namespace

int main(int argc, char** argv) {
    const std::string mode = argc > 1 ? argv[1] : "fast";
    const std::string binary = argc > 2 ? argv[2] : "";

    if (mode == "fast") {
        run_criterion(1, criterion_gradients);
        run_criterion(2, criterion_aggregation);
        run_criterion(3, criterion_norm_locality);
        run_criterion(4, criterion_metric_regression);
        run_criterion(7, criterion_equivalences);
        run_criterion(8, criterion_transforms);
        run_criterion(9, [&]() { criterion_cli_determinism(binary); });
        run_criterion(10, criterion_data_invariants);
    } else if (mode == "trends") {
        criteria_trends();
    } else {
        std::cerr << "usage: acceptance [fast|trends] [fedstress-binary]\n";
        return 2;
    }
    return g_all_ok ? 0 : 1;
}
