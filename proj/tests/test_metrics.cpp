#include <gtest/gtest.h>

#include <cmath>

#include "pmaa/metrics.hpp"
#include "pmaa/ops.hpp"
#include "test_util.hpp"

using namespace pmaa;

namespace {

/// Literal per-window SSIM with the 2-D Gaussian built directly.
double brute_ssim(const Tensor& a, const Tensor& b, double range) {
    const Shape& s = a.shape();
    double w[11][11];
    double total = 0.0;
    for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
            w[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
            total += w[i][j];
        }
    for (auto& row : w)
        for (double& v : row) v /= total;
    const double c1 = std::pow(0.01 * range, 2);
    const double c2 = std::pow(0.03 * range, 2);
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < s.n * s.c; ++p)
        for (std::size_t y = 0; y + 11 <= s.h; ++y)
            for (std::size_t x = 0; x + 11 <= s.w; ++x) {
                double ma = 0, mb = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const std::size_t k = p * s.plane() + (y + i) * s.w + x + j;
                        ma += w[i][j] * a.data()[k];
                        mb += w[i][j] * b.data()[k];
                    }
                double va = 0, vb = 0, cov = 0;
                for (int i = 0; i < 11; ++i)
                    for (int j = 0; j < 11; ++j) {
                        const std::size_t k = p * s.plane() + (y + i) * s.w + x + j;
                        const double da = a.data()[k] - ma;
                        const double db = b.data()[k] - mb;
                        va += w[i][j] * da * da;
                        vb += w[i][j] * db * db;
                        cov += w[i][j] * da * db;
                    }
                acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
    return acc / double(count);
}

}  // namespace

TEST(Psnr, IdenticalIsInfinite) {
    Tensor a = test::random_tensor({1, 4, 8, 8}, 1, 0.0, 1.0);
    EXPECT_EQ(psnr(a, a), kInfinitePsnr);
    EXPECT_EQ(format_metric(psnr(a, a)), "inf");
}

TEST(Psnr, KnownMse) {
    Tensor a = Tensor::zeros({1, 1, 2, 2});
    EXPECT_NEAR(psnr(a, Tensor::full({1, 1, 2, 2}, 0.1)), 20.0, 1e-12);
    EXPECT_NEAR(psnr(a, Tensor::full({1, 1, 2, 2}, 1.0), 255.0), 20.0 * std::log10(255.0), 1e-12);
    EXPECT_NEAR(psnr(a, Tensor::full({1, 1, 2, 2}, 1.0), 255.0), 48.1308, 1e-4);
}

TEST(Psnr, ShapeMismatchThrows) {
    EXPECT_THROW(psnr(Tensor::zeros({1, 1, 2, 2}), Tensor::zeros({1, 1, 2, 3})), std::invalid_argument);
}

TEST(Psnr, ShiftInvariant) {
    Tensor a = test::random_tensor({1, 4, 12, 12}, 2, 0.1, 0.6);
    Tensor b = test::random_tensor({1, 4, 12, 12}, 3, 0.1, 0.6);
    const double base = psnr(a, b);
    for (double shift : {0.05, 0.2, 0.35}) {
        Tensor as = add(a, Tensor::full(a.shape(), shift));
        Tensor bs = add(b, Tensor::full(b.shape(), shift));
        EXPECT_NEAR(psnr(as, bs), base, 1e-9);
    }
}

TEST(Ssim, IdenticalIsOne) {
    Tensor a = test::random_tensor({2, 4, 16, 16}, 4, 0.0, 1.0);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
}

TEST(Ssim, ConstantImagesClosedForm) {
    const double c1 = 1e-4;
    const double got = ssim(Tensor::zeros({1, 1, 11, 11}), Tensor::full({1, 1, 11, 11}, 0.5));
    EXPECT_NEAR(got, c1 / (0.25 + c1), 1e-12);
    EXPECT_NEAR(got, 3.998e-4, 1e-6);
}

TEST(Ssim, MatchesBruteForce) {
    for (std::uint64_t seed : {5u, 6u, 7u}) {
        Tensor a = test::random_tensor({1, 2, 16, 16}, seed, 0.0, 1.0);
        Tensor b = test::random_tensor({1, 2, 16, 16}, seed + 100, 0.0, 1.0);
        EXPECT_NEAR(ssim(a, b), brute_ssim(a, b, 1.0), 1e-6);
        EXPECT_NEAR(ssim(a, b, 2.0), brute_ssim(a, b, 2.0), 1e-6);
    }
}

TEST(Ssim, NonSquareMatchesBruteForce) {
    Tensor a = test::random_tensor({2, 1, 13, 19}, 8, 0.0, 1.0);
    Tensor b = add(a, test::random_tensor({2, 1, 13, 19}, 9, -0.1, 0.1));
    EXPECT_NEAR(ssim(a, b), brute_ssim(a, b, 1.0), 1e-6);
}

TEST(Ssim, Symmetric) {
    Tensor a = test::random_tensor({1, 4, 20, 20}, 10, 0.0, 1.0);
    Tensor b = test::random_tensor({1, 4, 20, 20}, 11, 0.0, 1.0);
    EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
}

TEST(Ssim, BoundedAndDecreasingWithNoise) {
    Tensor a = test::random_tensor({1, 1, 24, 24}, 12, 0.2, 0.8);
    double prev = 1.0;
    for (double amp : {0.01, 0.05, 0.2}) {
        Tensor b = add(a, test::random_tensor(a.shape(), 13, -amp, amp));
        const double v = ssim(a, b);
        EXPECT_LT(v, prev);
        EXPECT_GE(v, -1.0);
        prev = v;
    }
}

TEST(Ssim, RejectsSmallImages) {
    EXPECT_THROW(ssim(Tensor::zeros({1, 1, 10, 16}), Tensor::zeros({1, 1, 10, 16})), std::invalid_argument);
    EXPECT_THROW(ssim(Tensor::zeros({1, 1, 16, 16}), Tensor::zeros({1, 1, 16, 17})), std::invalid_argument);
}

TEST(Report, MeansExcludeInfinite) {
    MetricsReport r = MetricsReport::summarize({{"a", 20.0, 0.5}, {"b", kInfinitePsnr, 1.0}, {"c", 30.0, 0.9}});
    EXPECT_DOUBLE_EQ(r.mean_psnr, 25.0);
    EXPECT_EQ(r.infinite_psnr, 1u);
    EXPECT_DOUBLE_EQ(r.mean_ssim, 0.8);
    const std::string tsv = r.to_tsv();
    EXPECT_NE(tsv.find("sample\tb\tinf\t1.000000\n"), std::string::npos);
    EXPECT_NE(tsv.find("mean_psnr\t25.000000\n"), std::string::npos);
    EXPECT_NE(tsv.find("infinite_psnr\t1\n"), std::string::npos);
    EXPECT_EQ(MetricsReport::summarize({{"x", kInfinitePsnr, 1.0}}).mean_psnr, kInfinitePsnr);
}

TEST(Report, UnitRangeMapping) {
    Tensor t = to_unit_range(Tensor::from_data({1, 1, 1, 3}, {-1.0, 0.0, 1.0}));
    EXPECT_EQ(test::values(t), (std::vector<double>{0.0, 0.5, 1.0}));
}

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.hidden_channels = 4;
    c.downsamples = 1;
    c.stages = 1;
    c.attention_kernel = 3;
    c.patch_size = 2;
    c.height = c.width = 16;
    return c;
}

Sample random_sample(const std::string& id, std::uint64_t seed) {
    Sample s;
    s.id = id;
    for (std::uint64_t v = 0; v < 3; ++v) s.cloudy.push_back(test::random_tensor({1, 4, 16, 16}, seed + v));
    s.target = test::random_tensor({1, 4, 16, 16}, seed + 10);
    return s;
}

}  // namespace

TEST(Evaluate, OracleTargetGivesPerfectScores) {
    Model m = build_model(tiny_config(), 1);
    Sample s = random_sample("only", 20);
    {
        NoGradGuard g;
        s.target = pmaa_forward(s.cloudy, m.params, m.config).final;
    }
    std::vector<Sample> ds{s};
    MetricsReport r = evaluate_dataset(m, ds);
    ASSERT_EQ(r.samples.size(), 1u);
    EXPECT_NEAR(r.mean_ssim, 1.0, 1e-9);
    EXPECT_EQ(r.infinite_psnr, 1u);
}

TEST(Evaluate, SingletonMeansAndDeterminism) {
    Model m = build_model(tiny_config(), 2);
    std::vector<Sample> ds{random_sample("a", 30), random_sample("b", 40)};
    MetricsReport r1 = evaluate_dataset(m, ds);
    MetricsReport r2 = evaluate_dataset(m, ds);
    EXPECT_EQ(r1.to_tsv(), r2.to_tsv());
    EXPECT_EQ(r1.samples[0].id, "a");
    EXPECT_EQ(r1.samples[1].id, "b");
    std::vector<Sample> one{ds[0]};
    MetricsReport r3 = evaluate_dataset(m, one);
    EXPECT_EQ(r3.mean_psnr, r3.samples[0].psnr);
    EXPECT_EQ(r3.mean_ssim, r3.samples[0].ssim);
    EXPECT_EQ(r3.samples[0].psnr, r1.samples[0].psnr);
}

TEST(Evaluate, EmptyDatasetThrows) {
    Model m = build_model(tiny_config(), 0);
    EXPECT_THROW(evaluate_dataset(m, std::span<const Sample>{}), std::invalid_argument);
}
