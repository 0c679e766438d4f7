#include "fedstress/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "fedstress/binio.hpp"
#include "fedstress/errors.hpp"
#include "fedstress/rng.hpp"

namespace fedstress {

size_t ClientDataset::slice_count() const {
    size_t n = 0;
    for (const Case& c : cases) n += c.slices.size();
    return n;
}

size_t ValidationSet::slice_count() const {
    size_t n = 0;
    for (const ValidationCase& vc : cases) n += vc.item.slices.size();
    return n;
}

void SyntheticConfig::validate() const {
    if (case_count < 1) throw ConfigError("case_count must be >= 1");
    if (slices_per_case < 1) throw ConfigError("slices_per_case must be >= 1");
    if (slice_size < 8) throw ConfigError("slice_size must be >= 8");
    if (!(wt_radius_min > 0) || wt_radius_min > wt_radius_max)
        throw ConfigError("wt radius range must satisfy 0 < min <= max");
    auto shrink_ok = [](double lo, double hi) { return lo > 0 && lo <= hi && hi < 1; };
    if (!shrink_ok(tc_shrink_min, tc_shrink_max))
        throw ConfigError("tc shrink factors must lie in (0,1) with min <= max");
    if (!shrink_ok(et_shrink_min, et_shrink_max))
        throw ConfigError("et shrink factors must lie in (0,1) with min <= max");
    if (texture_noise < 0) throw ConfigError("texture_noise must be >= 0");
    if (profile_jitter < 0) throw ConfigError("profile_jitter must be >= 0");
    if (background_wave_amp < 0) throw ConfigError("background_wave_amp must be >= 0");
    const double max_radius = wt_radius_max * kAspectHi * kSliceScaleHi;
    const double max_center = kCenterHi + kSliceCenterJitter;
    const double min_center = kCenterLo - kSliceCenterJitter;
    if (max_center + max_radius > 1.0 || min_center - max_radius < 0.0)
        throw ConfigError("tumor geometry range exceeds the slice; reduce wt_radius_max");
}

namespace {

inline float clip01f(double v) {
    if (v < 0.0) return 0.0f;
    if (v > 1.0) return 1.0f;
    return static_cast<float>(v);
}

}  // namespace

Case generate_case(const SyntheticConfig& config, int case_index) {
    config.validate();
    if (case_index < 0) throw PreconditionError("case_index must be >= 0");
    Rng rng(mix_seed(config.master_seed, "case", static_cast<uint64_t>(case_index)));

    Case out;
    char id[16];
    std::snprintf(id, sizeof(id), "case_%04d", case_index);
    out.case_id = id;

    const double cx0 = rng.uniform(kCenterLo, kCenterHi);
    const double cy0 = rng.uniform(kCenterLo, kCenterHi);
    const double r_wt = rng.uniform(config.wt_radius_min, config.wt_radius_max);
    const double aspect_x = rng.uniform(kAspectLo, kAspectHi);
    const double aspect_y = rng.uniform(kAspectLo, kAspectHi);
    const double phi = rng.uniform(0.0, std::numbers::pi);
    const double tc_shrink = rng.uniform(config.tc_shrink_min, config.tc_shrink_max);
    const double et_shrink = rng.uniform(config.et_shrink_min, config.et_shrink_max);
    const double wave_fx = rng.uniform(0.5, 2.0);
    const double wave_fy = rng.uniform(0.5, 2.0);
    const double wave_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);

    double levels[4][4];
    for (int ch = 0; ch < 4; ++ch) {
        const ModalityProfile& p = config.profiles[static_cast<size_t>(ch)];
        const double base[4] = {p.background, p.wt, p.tc, p.et};
        for (int region = 0; region < 4; ++region) {
            const double jitter =
                config.profile_jitter > 0
                    ? rng.uniform(-config.profile_jitter, config.profile_jitter)
                    : 0.0;
            levels[ch][region] = std::clamp(base[region] + jitter, 0.05, 0.95);
        }
    }

    const int S = config.slice_size;
    const double cos_phi = std::cos(phi), sin_phi = std::sin(phi);
    const double tc_m = tc_shrink * tc_shrink;
    const double et_m = tc_shrink * et_shrink * tc_shrink * et_shrink;

    out.slices.reserve(static_cast<size_t>(config.slices_per_case));
    for (int j = 0; j < config.slices_per_case; ++j) {
        const double scale = rng.uniform(kSliceScaleLo, kSliceScaleHi);
        const double cx = cx0 + rng.uniform(-kSliceCenterJitter, kSliceCenterJitter);
        const double cy = cy0 + rng.uniform(-kSliceCenterJitter, kSliceCenterJitter);
        const double rx = r_wt * aspect_x * scale;
        const double ry = r_wt * aspect_y * scale;

        SliceSample slice{Tensor<float>({4, S, S}), Tensor<uint8_t>({3, S, S})};
        std::vector<int> region(static_cast<size_t>(S) * S, 0);
        for (int y = 0; y < S; ++y) {
            for (int x = 0; x < S; ++x) {
                const double u = (x + 0.5) / S - cx;
                const double v = (y + 0.5) / S - cy;
                const double ur = u * cos_phi + v * sin_phi;
                const double vr = -u * sin_phi + v * cos_phi;
                const double m = (ur / rx) * (ur / rx) + (vr / ry) * (vr / ry);
                int r = 0;
                if (m <= et_m)
                    r = 3;
                else if (m <= tc_m)
                    r = 2;
                else if (m <= 1.0)
                    r = 1;
                region[static_cast<size_t>(y) * S + x] = r;
                const size_t px = static_cast<size_t>(y) * S + x;
                slice.labels.data[0 * S * S + px] = r >= 1 ? 1 : 0;
                slice.labels.data[1 * S * S + px] = r >= 2 ? 1 : 0;
                slice.labels.data[2 * S * S + px] = r >= 3 ? 1 : 0;
            }
        }
        for (int ch = 0; ch < 4; ++ch) {
            float* plane = slice.image.data.data() + static_cast<size_t>(ch) * S * S;
            for (int y = 0; y < S; ++y) {
                for (int x = 0; x < S; ++x) {
                    const size_t px = static_cast<size_t>(y) * S + x;
                    double v = levels[ch][region[px]];
                    v += config.background_wave_amp *
                         std::sin(2.0 * std::numbers::pi *
                                      (wave_fx * (x + 0.5) / S + wave_fy * (y + 0.5) / S) +
                                  wave_phase);
                    if (config.texture_noise > 0) v += rng.normal(0.0, config.texture_noise);
                    plane[px] = clip01f(v);
                }
            }
        }
        out.slices.push_back(std::move(slice));
    }
    return out;
}

std::vector<Case> generate_dataset(const SyntheticConfig& config) {
    config.validate();
    std::vector<Case> cases;
    cases.reserve(static_cast<size_t>(config.case_count));
    for (int i = 0; i < config.case_count; ++i) cases.push_back(generate_case(config, i));
    return cases;
}

void validate_case(const Case& c) {
    if (c.case_id.empty()) throw ValidationError("case with empty case_id");
    if (c.slices.empty()) throw ValidationError("case " + c.case_id + " has no slices");
    const int S = c.slices.front().image.shape.size() == 3 ? c.slices.front().image.shape[1] : -1;
    for (size_t j = 0; j < c.slices.size(); ++j) {
        const SliceSample& slice = c.slices[j];
        const std::string where = "case " + c.case_id + " slice " + std::to_string(j);
        if (slice.image.shape != std::vector<int>{4, S, S})
            throw ValidationError(where + ": image must be [4,S,S] with uniform S, got " +
                                  shape_str(slice.image.shape));
        if (slice.labels.shape != std::vector<int>{3, S, S})
            throw ValidationError(where + ": labels must be [3,S,S], got " +
                                  shape_str(slice.labels.shape));
        for (float v : slice.image.data)
            if (!(v >= 0.0f && v <= 1.0f))
                throw ValidationError(where + ": image value outside [0,1]");
        const size_t plane = static_cast<size_t>(S) * S;
        for (size_t px = 0; px < plane; ++px) {
            const uint8_t wt = slice.labels.data[px];
            const uint8_t tc = slice.labels.data[plane + px];
            const uint8_t et = slice.labels.data[2 * plane + px];
            if (wt > 1 || tc > 1 || et > 1)
                throw ValidationError(where + ": non-binary label value");
            if (et > tc || tc > wt)
                throw ValidationError(where + ": label nesting violated (need ET <= TC <= WT)");
        }
    }
}

namespace {
void sort_by_id(std::vector<Case>& cases) {
    std::sort(cases.begin(), cases.end(),
              [](const Case& a, const Case& b) { return a.case_id < b.case_id; });
}
}  // namespace

std::vector<ClientDataset> partition_cases(std::vector<Case> cases, int client_count,
                                           uint64_t seed) {
    if (client_count < 1) throw PreconditionError("client_count must be >= 1");
    if (cases.size() < static_cast<size_t>(client_count))
        throw PreconditionError("need at least as many cases (" + std::to_string(cases.size()) +
                                ") as clients (" + std::to_string(client_count) + ")");
    sort_by_id(cases);
    for (size_t i = 1; i < cases.size(); ++i)
        if (cases[i].case_id == cases[i - 1].case_id)
            throw ValidationError("duplicate case_id '" + cases[i].case_id + "'");

    Rng rng(mix_seed(seed, "partition"));
    std::vector<size_t> order(cases.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    std::vector<ClientDataset> clients(static_cast<size_t>(client_count));
    for (int k = 0; k < client_count; ++k) clients[static_cast<size_t>(k)].client_id = k + 1;
    for (size_t i = 0; i < order.size(); ++i)
        clients[i % static_cast<size_t>(client_count)].cases.push_back(
            std::move(cases[order[i]]));
    for (ClientDataset& c : clients) sort_by_id(c.cases);
    return clients;
}

ValidationSet build_validation_set(std::vector<ClientDataset>& clients, double fraction,
                                   uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0))
        throw PreconditionError("validation fraction must lie in (0,1)");
    ValidationSet val;
    for (ClientDataset& client : clients) {
        const size_t n = client.cases.size();
        if (n < 2)
            throw ValidationError("client " + std::to_string(client.client_id) + " has " +
                                  std::to_string(n) +
                                  " case(s); need >= 2 to hold out validation");
        sort_by_id(client.cases);
        const long held = std::clamp<long>(std::lround(fraction * static_cast<double>(n)), 1,
                                           static_cast<long>(n) - 1);

        Rng rng(mix_seed(seed, "valsplit", static_cast<uint64_t>(client.client_id)));
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        rng.shuffle(order);

        std::vector<bool> hold(n, false);
        for (long i = 0; i < held; ++i) hold[order[static_cast<size_t>(i)]] = true;
        std::vector<Case> kept;
        kept.reserve(n - static_cast<size_t>(held));
        for (size_t i = 0; i < n; ++i) {
            if (hold[i])
                val.cases.push_back(ValidationCase{client.client_id, std::move(client.cases[i])});
            else
                kept.push_back(std::move(client.cases[i]));
        }
        client.cases = std::move(kept);
        sort_by_id(client.cases);
    }
    std::sort(val.cases.begin(), val.cases.end(), [](const ValidationCase& a, const ValidationCase& b) {
        return a.client_id != b.client_id ? a.client_id < b.client_id
                                          : a.item.case_id < b.item.case_id;
    });
    return val;
}

void save_slice_bundle(const std::vector<Case>& cases, const std::string& path) {
    for (const Case& c : cases) validate_case(c);
    BinWriter w(path);
    w.bytes("FSSB", 4);
    w.u32(kSliceBundleVersion);
    w.u32(static_cast<uint32_t>(cases.size()));
    for (const Case& c : cases) {
        w.str(c.case_id);
        w.u32(static_cast<uint32_t>(c.slices.size()));
        const int S = c.slices.front().image.shape[1];
        w.u32(static_cast<uint32_t>(S));
        for (const SliceSample& slice : c.slices) {
            for (float v : slice.image.data) w.f32(v);
            for (uint8_t v : slice.labels.data) w.u8(v);
        }
    }
    w.close();
}

std::vector<Case> load_slice_bundle(const std::string& path) {
    BinReader r(path);
    char magic[4];
    r.bytes(magic, 4);
    if (std::string_view(magic, 4) != "FSSB")
        throw FormatError("bad magic (expected FSSB)", 0);
    const uint32_t version = r.u32();
    if (version != kSliceBundleVersion)
        throw FormatError("unsupported bundle version " + std::to_string(version), 4);
    const uint32_t case_count = r.u32();
    if (case_count > 1000000) throw FormatError("implausible case count", 8);

    std::vector<Case> cases;
    cases.reserve(case_count);
    for (uint32_t i = 0; i < case_count; ++i) {
        Case c;
        c.case_id = r.str(4096);
        const uint32_t slice_count = r.u32();
        const uint32_t S = r.u32();
        if (slice_count == 0 || slice_count > 1000000)
            throw FormatError("implausible slice count for case " + c.case_id, r.offset());
        if (S < 1 || S > 4096)
            throw FormatError("implausible slice size for case " + c.case_id, r.offset());
        const int Si = static_cast<int>(S);
        c.slices.reserve(slice_count);
        for (uint32_t j = 0; j < slice_count; ++j) {
            SliceSample slice{Tensor<float>({4, Si, Si}), Tensor<uint8_t>({3, Si, Si})};
            for (float& v : slice.image.data) v = r.f32();
            for (uint8_t& v : slice.labels.data) v = r.u8();
            c.slices.push_back(std::move(slice));
        }
        validate_case(c);
        cases.push_back(std::move(c));
    }
    r.expect_eof("slice bundle");
    return cases;
}

}  // namespace fedstress
