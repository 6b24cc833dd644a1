#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pmaa/checkpoint.hpp"
#include "pmaa/gradcheck.hpp"
#include "pmaa/ops.hpp"
#include "pmaa/train.hpp"
#include "test_util.hpp"

using namespace pmaa;

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

std::vector<Sample> synthetic(const std::filesystem::path& root, std::size_t count, std::size_t size) {
    SynthOptions o;
    o.root = root;
    o.count = count;
    o.size = size;
    o.seed = 7;
    return load_dataset(synth_generate(o), o.pixel_max);
}

ParamStore single(double value, bool decay) {
    ParamStore p;
    p.add("p", {1, 1, 1, 1}, decay).mutable_data()[0] = value;
    return p;
}

}  // namespace

TEST(L1Loss, Examples) {
    Tensor a = test::random_tensor({2, 4, 3, 3}, 1);
    EXPECT_EQ(l1_loss(a, a).item(), 0.0);
    EXPECT_DOUBLE_EQ(l1_loss(Tensor::from_data({1, 1, 1, 2}, {1.0, -1.0}), Tensor::zeros({1, 1, 1, 2})).item(), 1.0);
    Tensor b = test::random_tensor({2, 4, 3, 3}, 2);
    EXPECT_DOUBLE_EQ(l1_loss(a, b).item(), l1_loss(scale(a, -1.0), scale(b, -1.0)).item());
    EXPECT_THROW(l1_loss(a, Tensor::zeros({1, 4, 3, 3})), std::invalid_argument);
}

TEST(L1Loss, GradientMatchesFiniteDifferences) {
    Tensor target = test::random_tensor({2, 4, 4, 4}, 3);
    Tensor pred = test::random_tensor({2, 4, 4, 4}, 4);
    EXPECT_LT(finite_diff_check([&](const Tensor& x) { return l1_loss(x, target); }, pred), 1e-6);
    EXPECT_LT(finite_diff_check([&](const Tensor& x) { return l1_loss(pred, x); }, target), 1e-6);
}

TEST(L1Loss, SignOfZeroIsZero) {
    Tensor p = Tensor::from_data({1, 1, 1, 3}, {0.5, 0.0, -2.0}, true);
    Tensor t = Tensor::from_data({1, 1, 1, 3}, {0.0, 0.0, 0.0});
    l1_loss(p, t).backward();
    EXPECT_EQ(std::vector<double>(p.grad().begin(), p.grad().end()), (std::vector<double>{1.0 / 3, 0.0, -1.0 / 3}));
}

TEST(AdamW, HandEvaluatedStep) {
    AdamWOptions o;
    o.weight_decay = 0.0;
    ParamStore p = single(1.0, true);
    OptimState s = OptimState::zeros_like(p);
    p.get("p").mutable_grad()[0] = 1.0;
    adamw_step(p, s, o, 0.1);
    EXPECT_NEAR(p.get("p").item(), 0.9, 1e-7);
    EXPECT_EQ(s.step, 1u);

    o.weight_decay = 0.01;
    ParamStore q = single(1.0, true);
    OptimState t = OptimState::zeros_like(q);
    q.get("p").mutable_grad()[0] = 1.0;
    adamw_step(q, t, o, 0.1);
    EXPECT_NEAR(q.get("p").item(), 0.899, 1e-7);
}

TEST(AdamW, ZeroGradientLeavesParameter) {
    AdamWOptions o;
    o.weight_decay = 0.0;
    ParamStore p = single(0.7, true);
    OptimState s = OptimState::zeros_like(p);
    for (int i = 0; i < 5; ++i) {
        p.zero_grad();
        adamw_step(p, s, o, 0.1);
    }
    EXPECT_EQ(p.get("p").item(), 0.7);
    EXPECT_EQ(s.step, 5u);
}

TEST(AdamW, DecayFlagIsHonoured) {
    AdamWOptions o;
    o.weight_decay = 0.5;
    ParamStore p;
    p.add("w", {1, 1, 1, 1}, true).mutable_data()[0] = 2.0;
    p.add("g", {1, 1, 1, 1}, false).mutable_data()[0] = 2.0;
    OptimState s = OptimState::zeros_like(p);
    adamw_step(p, s, o, 0.1);
    EXPECT_DOUBLE_EQ(p.get("w").item(), 2.0 - 0.1 * 0.5 * 2.0);
    EXPECT_EQ(p.get("g").item(), 2.0);
}

TEST(AdamW, QuadraticDecreases) {
    ParamStore p = single(1.0, true);
    OptimState s = OptimState::zeros_like(p);
    double prev = 1.0;
    for (int i = 0; i < 20; ++i) {
        p.zero_grad();
        Tensor x = p.get("p");
        mul(x, x).backward();
        adamw_step(p, s, AdamWOptions{}, 0.05);
        const double f = p.get("p").item() * p.get("p").item();
        EXPECT_LT(f, prev);
        prev = f;
        for (double v : s.v[0]) EXPECT_GE(v, 0.0);
    }
}

TEST(AdamW, RejectsMismatchedState) {
    ParamStore p = single(1.0, true);
    OptimState s;
    EXPECT_THROW(adamw_step(p, s, AdamWOptions{}, 0.1), std::invalid_argument);
}

TEST(Cosine, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 5e-4), 5e-4);
    EXPECT_NEAR(cosine_lr(100, 100, 5e-4), 0.0, 1e-20);
    EXPECT_NEAR(cosine_lr(50, 100, 5e-4, 1e-4), 3e-4, 1e-15);
    EXPECT_THROW(cosine_lr(101, 100, 5e-4), std::invalid_argument);
    EXPECT_THROW(cosine_lr(0, 0, 5e-4), std::invalid_argument);
}

TEST(Cosine, MonotoneNonIncreasing) {
    for (std::uint64_t total : {1u, 7u, 500u}) {
        double prev = cosine_lr(0, total, 5e-4);
        for (std::uint64_t s = 1; s <= total; ++s) {
            const double lr = cosine_lr(s, total, 5e-4);
            EXPECT_LE(lr, prev);
            prev = lr;
        }
    }
}

TEST(EpochOrder, SeededPermutation) {
    const auto a = epoch_order(10, 3, 1);
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(10);
    std::iota(iota.begin(), iota.end(), std::size_t(0));
    EXPECT_EQ(sorted, iota);
    EXPECT_EQ(a, epoch_order(10, 3, 1));
    EXPECT_NE(a, epoch_order(10, 3, 2));
    EXPECT_NE(a, epoch_order(10, 4, 1));
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.epochs = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.epochs = 1;
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c.batch_size = 4;
    EXPECT_EQ(c.steps_per_epoch(9), 3u);
    EXPECT_EQ(c.steps_per_epoch(8), 2u);
}

TEST(TrainLoop, ZeroEpochsRejected) {
    test::TempDir dir("train");
    auto data = synthetic(dir.path(), 2, 16);
    Model m = build_model(tiny_config(), 0);
    TrainConfig c;
    c.epochs = 0;
    EXPECT_THROW(train_loop(m, data, data, c), std::invalid_argument);
}

TEST(TrainLoop, DeterministicLogsAndPartialBatches) {
    test::TempDir dir("train");
    auto data = synthetic(dir.path(), 3, 16);
    TrainConfig c;
    c.epochs = 3;
    c.batch_size = 2;
    c.seed = 11;
    std::ostringstream log1, log2;
    Model m1 = build_model(tiny_config(), 5);
    Model m2 = build_model(tiny_config(), 5);
    TrainResult r1 = train_loop(m1, data, data, c, &log1);
    TrainResult r2 = train_loop(m2, data, data, c, &log2);
    EXPECT_EQ(log1.str(), log2.str());
    EXPECT_EQ(r1.step_losses, r2.step_losses);
    EXPECT_EQ(r1.step_losses.size(), 6u);
    EXPECT_EQ(r1.optim.step, 6u);
    EXPECT_EQ(r1.epochs.size(), 3u);
    std::istringstream lines(log1.str());
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) ++n;
    EXPECT_EQ(n, 3u);
    EXPECT_EQ(log1.str().substr(0, 2), "1\t");
}

TEST(TrainLoop, CheckpointTracksBestSsim) {
    test::TempDir dir("train");
    auto data = synthetic(dir.path(), 2, 16);
    TrainConfig c;
    c.epochs = 4;
    c.batch_size = 2;
    c.optim.lr = 5e-3;
    c.checkpoint = dir.path() / "best.ckpt";
    Model m = build_model(tiny_config(), 1);
    TrainResult r = train_loop(m, data, data, c);
    ASSERT_TRUE(std::filesystem::exists(c.checkpoint));
    Checkpoint ck = read_checkpoint(c.checkpoint);
    EXPECT_EQ(ck.epoch, r.best_epoch);
    EXPECT_EQ(ck.best_ssim, r.best_ssim);
    double best = -2.0;
    for (const auto& e : r.epochs) {
        EXPECT_EQ(e.improved, e.val_ssim > best);
        best = std::max(best, e.val_ssim);
    }
    EXPECT_EQ(best, r.best_ssim);
}

TEST(TrainLoop, NonFiniteLossNamesEpochAndBatch) {
    test::TempDir dir("train");
    auto data = synthetic(dir.path(), 2, 16);
    Model m = build_model(tiny_config(), 0);
    m.params.get("stage0.head.bias").mutable_data()[0] = NAN;
    TrainConfig c;
    c.epochs = 1;
    try {
        train_loop(m, data, data, c);
        FAIL();
    } catch (const NonFiniteLoss& e) {
        EXPECT_NE(std::string(e.what()).find("epoch 1, batch 1"), std::string::npos);
    }
}

TEST(TrainLoop, LossDecreasesEarly) {
    test::TempDir dir("train");
    auto data = synthetic(dir.path(), 4, 32);
    ModelConfig mc = tiny_config();
    mc.hidden_channels = 8;
    mc.downsamples = 2;
    mc.stages = 2;
    Model m = build_model(mc, 3);
    TrainConfig c;
    c.epochs = 50;
    c.batch_size = 4;
    TrainResult r = train_loop(m, data, data, c);
    ASSERT_EQ(r.step_losses.size(), 50u);
    const double head = std::accumulate(r.step_losses.begin(), r.step_losses.begin() + 10, 0.0) / 10;
    const double tail = std::accumulate(r.step_losses.end() - 10, r.step_losses.end(), 0.0) / 10;
    EXPECT_LT(tail, head);
}
