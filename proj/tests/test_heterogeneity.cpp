#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "fedstress/data.hpp"
#include "fedstress/heterogeneity.hpp"

using namespace fedstress;

namespace {

Tensor<float> flat_image(int S, float value) {
    Tensor<float> t({4, S, S});
    for (auto& v : t.data) v = value;
    return t;
}

Tensor<float> generator_image(int index) {
    SyntheticConfig sc;
    sc.case_count = index + 1;
    sc.slices_per_case = 1;
    sc.slice_size = 32;
    return generate_case(sc, index).slices[0].image;
}

double mean_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double s = 0;
    for (size_t i = 0; i < a.data.size(); ++i)
        s += std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    return s / static_cast<double>(a.data.size());
}

}  // namespace

TEST_CASE("level and family names round-trip") {
    for (auto lv : {HeterogeneityLevel::H0, HeterogeneityLevel::H1, HeterogeneityLevel::H2,
                    HeterogeneityLevel::H3})
        CHECK(parse_level(level_name(lv)) == lv);
    for (auto f : {TransformFamily::None, TransformFamily::Gamma, TransformFamily::ScaleShift,
                   TransformFamily::NoiseBlur})
        CHECK(parse_family(family_name(f)) == f);
    CHECK_THROWS_AS(parse_level("H4"), ConfigError);
    CHECK_THROWS_AS(parse_family("blur"), ConfigError);
}

TEST_CASE("family assignment cycles from client 2 onward") {
    const auto lv = HeterogeneityLevel::H2;
    CHECK(spec_for(1, lv).family == TransformFamily::None);
    CHECK(spec_for(2, lv).family == TransformFamily::Gamma);
    CHECK(spec_for(3, lv).family == TransformFamily::ScaleShift);
    CHECK(spec_for(4, lv).family == TransformFamily::NoiseBlur);
    CHECK(spec_for(5, lv).family == TransformFamily::Gamma);
    CHECK(spec_for(6, lv).family == TransformFamily::ScaleShift);
    CHECK(spec_for(7, lv).family == TransformFamily::NoiseBlur);
    CHECK(spec_for(8, lv).family == TransformFamily::Gamma);
    CHECK_THROWS_AS(spec_for(0, lv), PreconditionError);
}

TEST_CASE("per-level parameter grids") {
    CHECK(gamma_range(HeterogeneityLevel::H0).is_point());
    CHECK(gamma_range(HeterogeneityLevel::H0).lo == 1.0);
    CHECK(gamma_range(HeterogeneityLevel::H1).lo == 0.8);
    CHECK(gamma_range(HeterogeneityLevel::H1).hi == 1.2);
    CHECK(gamma_range(HeterogeneityLevel::H2).lo == 0.6);
    CHECK(gamma_range(HeterogeneityLevel::H2).hi == 1.5);
    CHECK(gamma_range(HeterogeneityLevel::H3).lo == 0.5);
    CHECK(gamma_range(HeterogeneityLevel::H3).hi == 2.0);

    CHECK(alpha_range(HeterogeneityLevel::H1).lo == 0.95);
    CHECK(alpha_range(HeterogeneityLevel::H3).hi == 1.2);
    CHECK(beta_range(HeterogeneityLevel::H2).lo == -0.07);
    CHECK(beta_range(HeterogeneityLevel::H3).hi == 0.1);

    CHECK(sigma_value(HeterogeneityLevel::H0) == 0.0);
    CHECK(sigma_value(HeterogeneityLevel::H1) == 0.01);
    CHECK(sigma_value(HeterogeneityLevel::H2) == 0.03);
    CHECK(sigma_value(HeterogeneityLevel::H3) == 0.05);

    CHECK(kappa_range(HeterogeneityLevel::H1).is_point());
    CHECK(kappa_range(HeterogeneityLevel::H1).lo == 1.0);
    CHECK(kappa_range(HeterogeneityLevel::H2).lo == 2.0);
    CHECK(kappa_range(HeterogeneityLevel::H3).lo == 3.0);
    CHECK(kappa_range(HeterogeneityLevel::H3).hi == 5.0);
}

TEST_CASE("H0 samples are identities for every client") {
    Rng rng(1);
    for (int client = 1; client <= 7; ++client) {
        SampledTransform t = sample(spec_for(client, HeterogeneityLevel::H0), rng);
        CHECK(is_identity(t));
    }
}

TEST_CASE("point parameters consume no draws") {
    // Client 1 (none) and any H0 spec draw nothing.
    {
        Rng a(9), b(9);
        sample(spec_for(1, HeterogeneityLevel::H3), a);
        sample(spec_for(2, HeterogeneityLevel::H0), a);
        sample(spec_for(4, HeterogeneityLevel::H0), a);
        CHECK(a.next_u64() == b.next_u64());
    }
    // noise_blur below H3 has point sigma and kappa.
    {
        Rng a(9), b(9);
        sample(spec_for(4, HeterogeneityLevel::H2), a);
        CHECK(a.next_u64() == b.next_u64());
    }
    // gamma consumes exactly one draw, scale_shift exactly two.
    {
        Rng a(9), b(9);
        sample(spec_for(2, HeterogeneityLevel::H2), a);
        b.uniform01();
        CHECK(a.next_u64() == b.next_u64());
    }
    {
        Rng a(9), b(9);
        sample(spec_for(3, HeterogeneityLevel::H2), a);
        b.uniform01();
        b.uniform01();
        CHECK(a.next_u64() == b.next_u64());
    }
}

TEST_CASE("sampled parameters cover their level ranges") {
    const int n = 10000;
    Rng rng(42);
    const TransformSpec gspec = spec_for(2, HeterogeneityLevel::H3);
    double mn = 1e9, mx = -1e9, sum = 0;
    std::vector<double> unit(n);
    for (int i = 0; i < n; ++i) {
        const double g = sample(gspec, rng).gamma;
        mn = std::min(mn, g);
        mx = std::max(mx, g);
        sum += g;
        unit[static_cast<size_t>(i)] = (g - 0.5) / 1.5;
        CHECK(g >= 0.5);
        CHECK(g < 2.0);
    }
    CHECK(mn < 0.52);
    CHECK(mx > 1.98);
    CHECK(sum / n == doctest::Approx(1.25).epsilon(0.02));

    std::sort(unit.begin(), unit.end());
    double d = 0;
    for (int i = 0; i < n; ++i) {
        d = std::max(d, std::abs((i + 1.0) / n - unit[static_cast<size_t>(i)]));
        d = std::max(d, std::abs(unit[static_cast<size_t>(i)] - static_cast<double>(i) / n));
    }
    CHECK(d < 1.628 / std::sqrt(static_cast<double>(n)));

    const TransformSpec sspec = spec_for(3, HeterogeneityLevel::H3);
    for (int i = 0; i < n; ++i) {
        const SampledTransform t = sample(sspec, rng);
        CHECK(t.alpha >= 0.8);
        CHECK(t.alpha < 1.2);
        CHECK(t.beta >= -0.1);
        CHECK(t.beta < 0.1);
    }

    const TransformSpec nspec = spec_for(4, HeterogeneityLevel::H3);
    for (int i = 0; i < n; ++i) {
        const SampledTransform t = sample(nspec, rng);
        CHECK(t.sigma == 0.05);
        CHECK(t.kappa >= 3.0);
        CHECK(t.kappa < 5.0);
    }
}

TEST_CASE("gamma and scale-shift match hand-computed values") {
    Tensor<float> img({4, 2, 2});
    for (auto& v : img.data) v = 0.25f;
    Rng rng(0);

    SampledTransform g;
    g.family = TransformFamily::Gamma;
    g.gamma = 2.0;
    Tensor<float> out = apply(img, g, rng);
    for (float v : out.data) CHECK(v == doctest::Approx(0.0625).epsilon(1e-7));

    SampledTransform s;
    s.family = TransformFamily::ScaleShift;
    s.alpha = 1.2;
    s.beta = 0.1;
    Tensor<float> img2 = flat_image(2, 0.5f);
    out = apply(img2, s, rng);
    for (float v : out.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-7));

    s.alpha = 1.2;
    s.beta = 0.5;
    Tensor<float> img3 = flat_image(2, 0.9f);
    out = apply(img3, s, rng);
    for (float v : out.data) CHECK(v == 1.0f);  // clipped

    s.alpha = 0.5;
    s.beta = -0.4;
    out = apply(img3, s, rng);
    for (float v : out.data) CHECK(v == doctest::Approx(0.05).epsilon(1e-6));
}

TEST_CASE("identity transforms return the input bit-for-bit without draws") {
    Tensor<float> img = generator_image(0);
    Rng rng(31), probe(31);
    for (int client = 1; client <= 4; ++client) {
        SampledTransform t = sample(spec_for(client, HeterogeneityLevel::H0), rng);
        Tensor<float> out = apply(img, t, rng);
        CHECK(out.data == img.data);
    }
    CHECK(rng.next_u64() == probe.next_u64());
}

TEST_CASE("gamma exponent one and unit scale-shift are identities") {
    SampledTransform t;
    t.family = TransformFamily::Gamma;
    t.gamma = 1.0;
    CHECK(is_identity(t));
    t.family = TransformFamily::ScaleShift;
    t.alpha = 1.0;
    t.beta = 0.0;
    CHECK(is_identity(t));
    t.beta = 0.01;
    CHECK_FALSE(is_identity(t));
    t.family = TransformFamily::NoiseBlur;
    t.sigma = 0.0;
    t.kappa = 0.0;
    CHECK(is_identity(t));
}

TEST_CASE("transform outputs stay in [0,1] at every level") {
    Rng rng(77);
    for (int idx = 0; idx < 12; ++idx) {
        Tensor<float> img = generator_image(idx);
        for (int client = 2; client <= 4; ++client)
            for (auto lv : {HeterogeneityLevel::H1, HeterogeneityLevel::H2, HeterogeneityLevel::H3}) {
                SampledTransform t = sample(spec_for(client, lv), rng);
                Tensor<float> out = apply(img, t, rng);
                for (float v : out.data) {
                    CHECK(v >= 0.0f);
                    CHECK(v <= 1.0f);
                }
            }
    }
}

TEST_CASE("transform rejects inputs outside the unit range") {
    Tensor<float> img = flat_image(4, 0.5f);
    img.data[3] = 1.25f;
    Rng rng(1);
    SampledTransform t;
    t.family = TransformFamily::Gamma;
    t.gamma = 2.0;
    CHECK_THROWS_AS(apply(img, t, rng), PreconditionError);
    CHECK_THROWS_AS(apply(Tensor<float>({1, 2, 2, 2}), t, rng), ShapeError);
}

TEST_CASE("blur preserves a constant image and smooths a textured one") {
    Rng rng(5);
    SampledTransform t;
    t.family = TransformFamily::NoiseBlur;
    t.sigma = 0.0;
    t.kappa = 2.0;

    Tensor<float> flat = flat_image(16, 0.4f);
    Tensor<float> out = apply(flat, t, rng);
    for (float v : out.data) CHECK(v == doctest::Approx(0.4f).epsilon(1e-6));

    Tensor<float> img = generator_image(1);
    Tensor<float> blurred = apply(img, t, rng);
    auto variance = [](const Tensor<float>& x) {
        double s = 0, sq = 0;
        for (float v : x.data) {
            s += v;
            sq += static_cast<double>(v) * v;
        }
        const double m = s / static_cast<double>(x.data.size());
        return sq / static_cast<double>(x.data.size()) - m * m;
    };
    CHECK(variance(blurred) < variance(img));
}

TEST_CASE("noise magnitude tracks sigma") {
    SampledTransform t;
    t.family = TransformFamily::NoiseBlur;
    t.sigma = 0.05;
    t.kappa = 0.0;
    Tensor<float> img = flat_image(32, 0.5f);
    Rng rng(8);
    Tensor<float> out = apply(img, t, rng);
    const double expected = 0.05 * std::sqrt(2.0 / 3.14159265358979323846);
    CHECK(mean_abs_diff(out, img) == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("distortion grows monotonically with the level") {
    for (int client = 2; client <= 4; ++client) {
        double per_level[4] = {0, 0, 0, 0};
        for (int li = 0; li < 4; ++li) {
            const auto lv = static_cast<HeterogeneityLevel>(li);
            const TransformSpec spec = spec_for(client, lv);
            Rng rng(1000 + static_cast<uint64_t>(client));
            double acc = 0;
            const int n = 40;
            for (int i = 0; i < n; ++i) {
                Tensor<float> img = generator_image(i % 8);
                SampledTransform t = sample(spec, rng);
                acc += mean_abs_diff(apply(img, t, rng), img);
            }
            per_level[li] = acc / n;
        }
        CHECK(per_level[0] == 0.0);
        CHECK(per_level[0] < per_level[1]);
        CHECK(per_level[1] < per_level[2]);
        CHECK(per_level[2] < per_level[3]);
    }
}

TEST_CASE("evaluation transforms are stable across rounds and methods") {
    const TransformSpec spec = spec_for(2, HeterogeneityLevel::H3);
    SampledTransform a = eval_transform(spec, 11, 2, "case_0005", 3);
    SampledTransform b = eval_transform(spec, 11, 2, "case_0005", 3);
    CHECK(a.gamma == b.gamma);

    SampledTransform c = eval_transform(spec, 11, 2, "case_0005", 4);
    SampledTransform d = eval_transform(spec, 11, 2, "case_0006", 3);
    SampledTransform e = eval_transform(spec, 12, 2, "case_0005", 3);
    CHECK(a.gamma != c.gamma);
    CHECK(a.gamma != d.gamma);
    CHECK(a.gamma != e.gamma);

    SampledTransform h0 = eval_transform(spec_for(2, HeterogeneityLevel::H0), 11, 2, "case_0005", 3);
    CHECK(is_identity(h0));
}
