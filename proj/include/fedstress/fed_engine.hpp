#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fedstress/adamw.hpp"
#include "fedstress/data.hpp"
#include "fedstress/errors.hpp"
#include "fedstress/heterogeneity.hpp"
#include "fedstress/metrics.hpp"
#include "fedstress/model.hpp"
#include "fedstress/param_set.hpp"
#include "fedstress/rng.hpp"

namespace fedstress {

enum class StrategyKind { FedAvg, FedProx, FedBn };

inline const char* strategy_name(StrategyKind kind) {
    switch (kind) {
        case StrategyKind::FedAvg: return "fedavg";
        case StrategyKind::FedProx: return "fedprox";
        case StrategyKind::FedBn: return "fedbn";
    }
    throw ConfigError("invalid strategy kind");
}

inline StrategyKind parse_strategy(const std::string& name) {
    if (name == "fedavg") return StrategyKind::FedAvg;
    if (name == "fedprox") return StrategyKind::FedProx;
    if (name == "fedbn") return StrategyKind::FedBn;
    throw ConfigError("unknown strategy '" + name + "' (expected fedavg|fedprox|fedbn)");
}

struct Strategy {
    StrategyKind kind = StrategyKind::FedAvg;
    double mu = 0.01;  // fedprox only

    void validate() const {
        if (mu < 0) throw ConfigError("fedprox mu must be >= 0");
    }
    std::string label() const { return strategy_name(kind); }
};

struct RoundConfig {
    int rounds = 10;
    int local_epochs = 1;
    int batch_size = 8;
    double lr = 1e-4;
    double weight_decay = 1e-5;
    HeterogeneityLevel level = HeterogeneityLevel::H0;
    uint64_t experiment_seed = 1;

    void validate() const {
        if (rounds < 1) throw ConfigError("rounds must be >= 1");
        if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(lr > 0)) throw ConfigError("lr must be > 0");
        if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    }
};

template <typename T>
struct ClientUpdate {
    int client_id = 0;
    ParameterSet<T> params;
    size_t sample_count = 0;
    std::vector<double> local_loss_trace;
};

template <typename T>
struct ClientRuntime {
    ClientDataset data;
    AdamWState<T> opt;
    ParameterSet<T> retained;  // post-training params; norm entries reused on fedbn broadcast
    Rng transform_rng{0};
};

struct SliceRow {
    std::string strategy;
    int round = 0;
    int client_id = 0;
    std::string case_id;
    int slice_index = 0;
    double dice_wt = 0;
    double dice_tc = 0;
    double dice_et = 0;
    double mean_dice = 0;
};

template <typename T>
struct ExperimentResult {
    std::string strategy_label;
    HeterogeneityLevel level = HeterogeneityLevel::H0;
    uint64_t seed = 0;
    std::vector<RoundRecord> rounds;
    ParameterSet<T> global;
    std::map<int, ParameterSet<T>> final_client_params;  // fedbn only
    std::vector<SliceRow> slice_rows;
};

template <typename T>
double proximal_penalty(const ParameterSet<T>& params, const ParameterSet<T>& ref, double mu) {
    double sq = 0;
    for (const auto& e : params) {
        if (!e.trainable) continue;
        const auto& r = ref.at(e.name).tensor;
        require_same_shape(e.tensor, r, "proximal_penalty");
        for (size_t i = 0; i < e.tensor.data.size(); ++i) {
            const double d = static_cast<double>(e.tensor.data[i]) - static_cast<double>(r.data[i]);
            sq += d * d;
        }
    }
    return 0.5 * mu * sq;
}

template <typename T>
ParameterSet<T> norm_subset(const ParameterSet<T>& params) {
    ParameterSet<T> out;
    for (const auto& e : params)
        if (e.tag == ParamTag::NormLocal) out.add(e.name, e.tensor, e.tag, e.trainable);
    return out;
}

inline void run_parallel(int task_count, int max_threads, const std::function<void(int)>& fn) {
    const int threads = std::clamp(max_threads, 1, task_count);
    std::vector<std::exception_ptr> errors(static_cast<size_t>(task_count));
    if (threads <= 1) {
        for (int i = 0; i < task_count; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<size_t>(i)] = std::current_exception();
            }
        }
    } else {
        std::atomic<int> next{0};
        auto worker = [&]() {
            for (;;) {
                const int i = next.fetch_add(1);
                if (i >= task_count) return;
                try {
                    fn(i);
                } catch (...) {
                    errors[static_cast<size_t>(i)] = std::current_exception();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(static_cast<size_t>(threads - 1));
        for (int t = 0; t < threads - 1; ++t) pool.emplace_back(worker);
        worker();
        for (auto& th : pool) th.join();
    }
    for (const auto& err : errors)
        if (err) std::rethrow_exception(err);
}

template <typename T>
ClientUpdate<T> local_train(const ParameterSet<T>& global, ClientRuntime<T>& client,
                            const Strategy& strategy, const RoundConfig& rc, const Unet<T>& model,
                            int round_index) {
    if (client.data.slice_count() == 0)
        throw ValidationError("client " + std::to_string(client.data.client_id) +
                              " has no training slices");

    ParameterSet<T> params = global;
    if (strategy.kind == StrategyKind::FedBn)
        for (auto& e : params)
            if (e.tag == ParamTag::NormLocal) e.tensor.data = client.retained.at(e.name).tensor.data;

    client.opt.hyper.lr = static_cast<T>(rc.lr);
    client.opt.hyper.weight_decay = static_cast<T>(rc.weight_decay);

    // Canonical slice order: sorted by case id, so a permuted case list trains
    // identically.
    std::vector<std::pair<int, int>> index;
    for (int ci = 0; ci < static_cast<int>(client.data.cases.size()); ++ci)
        for (int si = 0; si < static_cast<int>(client.data.cases[static_cast<size_t>(ci)].slices.size()); ++si)
            index.emplace_back(ci, si);
    std::sort(index.begin(), index.end(), [&](const auto& a, const auto& b) {
        const std::string& ia = client.data.cases[static_cast<size_t>(a.first)].case_id;
        const std::string& ib = client.data.cases[static_cast<size_t>(b.first)].case_id;
        if (ia != ib) return ia < ib;
        return a.second < b.second;
    });

    ClientUpdate<T> update;
    update.client_id = client.data.client_id;
    update.sample_count = index.size();

    const int S = model.config().slice_size;
    const size_t plane = static_cast<size_t>(S) * S;
    const bool prox = strategy.kind == StrategyKind::FedProx && strategy.mu > 0;

    for (int epoch = 0; epoch < rc.local_epochs; ++epoch) {
        Rng shuffle_rng(mix_seed(rc.experiment_seed, "shuffle", static_cast<uint64_t>(round_index),
                                 static_cast<uint64_t>(epoch)));
        std::vector<size_t> order(index.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order);

        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(rc.batch_size)) {
            const int bsz =
                static_cast<int>(std::min<size_t>(static_cast<size_t>(rc.batch_size),
                                                  order.size() - start));
            const SampledTransform t = sample(client.data.transform, client.transform_rng);

            Tensor<T> images({bsz, 4, S, S});
            Tensor<T> labels({bsz, 3, S, S});
            for (int b = 0; b < bsz; ++b) {
                const auto [ci, si] = index[order[start + static_cast<size_t>(b)]];
                const SliceSample& s =
                    client.data.cases[static_cast<size_t>(ci)].slices[static_cast<size_t>(si)];
                const Tensor<float> img = apply(s.image, t, client.transform_rng);
                for (size_t i = 0; i < 4 * plane; ++i)
                    images.data[static_cast<size_t>(b) * 4 * plane + i] = static_cast<T>(img.data[i]);
                for (size_t i = 0; i < 3 * plane; ++i)
                    labels.data[static_cast<size_t>(b) * 3 * plane + i] =
                        static_cast<T>(s.labels.data[i]);
            }

            UnetCache<T> cache;
            const Tensor<T> logits = model.forward(params, images, Mode::Train, &cache);
            const LossResult loss = seg_loss(logits, labels, model.config().dice_smooth);
            if (!std::isfinite(loss.total))
                throw RuntimeFailure("non-finite loss (client " +
                                     std::to_string(client.data.client_id) + ", round " +
                                     std::to_string(round_index) + ", batch " +
                                     std::to_string(update.local_loss_trace.size()) + ")");
            update.local_loss_trace.push_back(loss.total);

            const Tensor<T> grad_logits = seg_loss_backward(logits, labels, model.config().dice_smooth);
            params.zero_grads();
            model.backward(params, cache, grad_logits);
            if (prox) {
                for (auto& e : params) {
                    if (!e.trainable) continue;
                    const auto& ref = global.at(e.name).tensor;
                    for (size_t i = 0; i < e.tensor.data.size(); ++i)
                        e.tensor.grad[i] += static_cast<T>(strategy.mu) *
                                            (e.tensor.data[i] - ref.data[i]);
                }
            }
            adamw_step(params, client.opt);
        }
    }

    update.params = std::move(params);
    return update;
}

template <typename T>
ParameterSet<T> aggregate(const std::vector<ClientUpdate<T>>& updates, const Strategy& strategy) {
    (void)strategy;  // fedbn semantics live in broadcast/eval; norm entries here become the reference set
    if (updates.empty()) throw PreconditionError("aggregate needs at least one update");
    double total = 0;
    for (const auto& u : updates) total += static_cast<double>(u.sample_count);
    if (total <= 0) throw ValidationError("aggregate: zero total sample count");
    for (size_t k = 1; k < updates.size(); ++k)
        if (!updates[0].params.shape_compatible(updates[k].params))
            throw ShapeError("aggregate: client updates are not shape-compatible");

    std::vector<double> weight(updates.size());
    for (size_t k = 0; k < updates.size(); ++k)
        weight[k] = static_cast<double>(updates[k].sample_count) / total;

    ParameterSet<T> out = updates[0].params;
    for (size_t e = 0; e < out.size(); ++e) {
        auto& dst = out[e].tensor;
        for (size_t i = 0; i < dst.data.size(); ++i) {
            const double base = static_cast<double>(updates[0].params[e].tensor.data[i]);
            double acc = 0;
            for (size_t k = 0; k < updates.size(); ++k)
                acc += weight[k] *
                       (static_cast<double>(updates[k].params[e].tensor.data[i]) - base);
            // acc == 0 keeps the base value bit-exact, sign of zero included
            if (acc != 0.0) dst.data[i] = static_cast<T>(base + acc);
        }
    }
    return out;
}

template <typename T>
RoundRecord evaluate_validation(const Unet<T>& model, const ParameterSet<T>& global,
                                const std::map<int, const ParameterSet<T>*>& norm_overrides,
                                const ValidationSet& val, const RoundConfig& rc, int round_index,
                                const std::string& label, std::vector<SliceRow>* rows) {
    if (val.cases.empty()) throw ValidationError("validation set is empty");
    const int S = model.config().slice_size;
    const size_t plane = static_cast<size_t>(S) * S;

    RoundRecord rec;
    rec.round_index = round_index;
    rec.strategy = label;

    double global_dice_sum = 0, global_loss_sum = 0;
    size_t global_slices = 0;

    std::vector<size_t> order(val.cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (val.cases[a].client_id != val.cases[b].client_id)
            return val.cases[a].client_id < val.cases[b].client_id;
        return val.cases[a].item.case_id < val.cases[b].item.case_id;
    });

    size_t pos = 0;
    while (pos < order.size()) {
        const int client_id = val.cases[order[pos]].client_id;
        size_t end = pos;
        while (end < order.size() && val.cases[order[end]].client_id == client_id) ++end;

        ParameterSet<T> eval_params = global;
        const auto it = norm_overrides.find(client_id);
        if (it != norm_overrides.end())
            for (auto& e : eval_params)
                if (e.tag == ParamTag::NormLocal)
                    e.tensor.data = it->second->at(e.name).tensor.data;

        const TransformSpec spec = spec_for(client_id, rc.level);

        struct PendingSlice {
            const SliceSample* slice;
            const std::string* case_id;
            int slice_index;
        };
        std::vector<PendingSlice> pending;
        for (size_t c = pos; c < end; ++c) {
            const Case& item = val.cases[order[c]].item;
            for (size_t j = 0; j < item.slices.size(); ++j)
                pending.push_back(PendingSlice{&item.slices[j], &item.case_id, static_cast<int>(j)});
        }

        double wt_sum = 0, tc_sum = 0, et_sum = 0;
        for (size_t start = 0; start < pending.size(); start += static_cast<size_t>(rc.batch_size)) {
            const int bsz = static_cast<int>(
                std::min<size_t>(static_cast<size_t>(rc.batch_size), pending.size() - start));
            Tensor<T> images({bsz, 4, S, S});
            for (int b = 0; b < bsz; ++b) {
                const PendingSlice& p = pending[start + static_cast<size_t>(b)];
                Rng stream = eval_stream(rc.experiment_seed, client_id, *p.case_id, p.slice_index);
                const SampledTransform t = sample(spec, stream);
                const Tensor<float> img = apply(p.slice->image, t, stream);
                for (size_t i = 0; i < 4 * plane; ++i)
                    images.data[static_cast<size_t>(b) * 4 * plane + i] = static_cast<T>(img.data[i]);
            }
            const Tensor<T> logits = model.forward(eval_params, images, Mode::Eval, nullptr);

            for (int b = 0; b < bsz; ++b) {
                const PendingSlice& p = pending[start + static_cast<size_t>(b)];
                Tensor<T> slice_logits({1, 3, S, S});
                Tensor<T> slice_labels({1, 3, S, S});
                double slice_dice[3];
                for (int c = 0; c < 3; ++c) {
                    double inter = 0, p_sum = 0, t_sum = 0;
                    const size_t off = (static_cast<size_t>(b) * 3 + static_cast<size_t>(c)) * plane;
                    for (size_t i = 0; i < plane; ++i) {
                        const int pred = logits.data[off + i] > T(0) ? 1 : 0;
                        const int target = p.slice->labels.data[static_cast<size_t>(c) * plane + i];
                        inter += pred & target;
                        p_sum += pred;
                        t_sum += target;
                        slice_logits.data[static_cast<size_t>(c) * plane + i] = logits.data[off + i];
                        slice_labels.data[static_cast<size_t>(c) * plane + i] = static_cast<T>(target);
                    }
                    slice_dice[c] = (2.0 * inter + kDiceEps) / (p_sum + t_sum + kDiceEps);
                }
                const double slice_mean = (slice_dice[0] + slice_dice[1] + slice_dice[2]) / 3.0;
                const LossResult loss = seg_loss(slice_logits, slice_labels, model.config().dice_smooth);

                wt_sum += slice_dice[0];
                tc_sum += slice_dice[1];
                et_sum += slice_dice[2];
                global_dice_sum += slice_mean;
                global_loss_sum += loss.total;
                ++global_slices;
                if (rows)
                    rows->push_back(SliceRow{label, round_index, client_id, *p.case_id,
                                             p.slice_index, slice_dice[0], slice_dice[1],
                                             slice_dice[2], slice_mean});
            }
        }

        ClientScore score;
        const double n = static_cast<double>(pending.size());
        score.dice_wt = wt_sum / n;
        score.dice_tc = tc_sum / n;
        score.dice_et = et_sum / n;
        score.mean_dice = (score.dice_wt + score.dice_tc + score.dice_et) / 3.0;
        rec.per_client[client_id] = score;

        pos = end;
    }

    rec.global_mean_dice = global_dice_sum / static_cast<double>(global_slices);
    rec.mean_val_loss = global_loss_sum / static_cast<double>(global_slices);
    return rec;
}

template <typename T>
ExperimentResult<T> run_experiment(const Strategy& strategy, const RoundConfig& rc,
                                   const ModelConfig& mc, std::vector<ClientDataset> clients,
                                   const ValidationSet& val, int max_threads = 1) {
    strategy.validate();
    rc.validate();
    if (clients.empty()) throw ValidationError("run_experiment needs at least one client");
    std::sort(clients.begin(), clients.end(),
              [](const ClientDataset& a, const ClientDataset& b) { return a.client_id < b.client_id; });
    for (size_t k = 0; k < clients.size(); ++k) {
        if (k > 0 && clients[k].client_id == clients[k - 1].client_id)
            throw ValidationError("duplicate client_id " + std::to_string(clients[k].client_id));
        clients[k].transform = spec_for(clients[k].client_id, rc.level);
        if (clients[k].slice_count() == 0)
            throw ValidationError("client " + std::to_string(clients[k].client_id) +
                                  " has no training slices");
    }

    const Unet<T> model(mc);
    ParameterSet<T> global = model.build_params(rc.experiment_seed);

    const int K = static_cast<int>(clients.size());
    std::vector<ClientRuntime<T>> runtimes(static_cast<size_t>(K));
    for (int k = 0; k < K; ++k) {
        auto& rt = runtimes[static_cast<size_t>(k)];
        rt.data = std::move(clients[static_cast<size_t>(k)]);
        rt.retained = global;
        rt.transform_rng = Rng(mix_seed(rc.experiment_seed, "augment",
                                        static_cast<uint64_t>(rt.data.client_id)));
    }

    ExperimentResult<T> result;
    result.strategy_label = strategy.label();
    result.level = rc.level;
    result.seed = rc.experiment_seed;

    for (int round = 1; round <= rc.rounds; ++round) {
        std::vector<ClientUpdate<T>> updates(static_cast<size_t>(K));
        run_parallel(K, max_threads, [&](int k) {
            auto& rt = runtimes[static_cast<size_t>(k)];
            try {
                updates[static_cast<size_t>(k)] =
                    local_train(global, rt, strategy, rc, model, round);
            } catch (const std::exception& e) {
                throw RuntimeFailure("round " + std::to_string(round) + ", client " +
                                     std::to_string(rt.data.client_id) + ": " + e.what());
            }
        });

        global = aggregate(updates, strategy);
        if (strategy.kind == StrategyKind::FedBn)
            for (int k = 0; k < K; ++k)
                runtimes[static_cast<size_t>(k)].retained =
                    std::move(updates[static_cast<size_t>(k)].params);

        std::map<int, const ParameterSet<T>*> overrides;
        if (strategy.kind == StrategyKind::FedBn)
            for (int k = 0; k < K; ++k)
                overrides[runtimes[static_cast<size_t>(k)].data.client_id] =
                    &runtimes[static_cast<size_t>(k)].retained;

        result.rounds.push_back(evaluate_validation(model, global, overrides, val, rc, round,
                                                    result.strategy_label, &result.slice_rows));
    }

    if (strategy.kind == StrategyKind::FedBn)
        for (int k = 0; k < K; ++k)
            result.final_client_params[runtimes[static_cast<size_t>(k)].data.client_id] =
                std::move(runtimes[static_cast<size_t>(k)].retained);
    result.global = std::move(global);
    return result;
}

template <typename T>
ExperimentResult<T> run_centralized(const RoundConfig& rc, const ModelConfig& mc,
                                    ClientDataset all_data, const ValidationSet& val) {
    rc.validate();
    all_data.client_id = 1;
    all_data.transform = spec_for(1, rc.level);
    if (all_data.slice_count() == 0) throw ValidationError("centralized run has no training slices");

    const Unet<T> model(mc);
    ParameterSet<T> global = model.build_params(rc.experiment_seed);

    ClientRuntime<T> runtime;
    runtime.data = std::move(all_data);
    runtime.retained = global;
    runtime.transform_rng = Rng(mix_seed(rc.experiment_seed, "augment", uint64_t{1}));

    const Strategy strategy{StrategyKind::FedAvg, 0.0};

    ExperimentResult<T> result;
    result.strategy_label = "centralized";
    result.level = rc.level;
    result.seed = rc.experiment_seed;

    for (int round = 1; round <= rc.rounds; ++round) {
        ClientUpdate<T> update = local_train(global, runtime, strategy, rc, model, round);
        global = std::move(update.params);
        result.rounds.push_back(evaluate_validation(model, global, {}, val, rc, round,
                                                    result.strategy_label, &result.slice_rows));
    }
    result.global = std::move(global);
    return result;
}

}  // namespace fedstress
