#include <gtest/gtest.h>

#include <stdexcept>

#include "pmaa/ops.hpp"
#include "pmaa/tensor.hpp"
#include "test_util.hpp"

using namespace pmaa;

TEST(Tensor, FactoriesSetShapeAndValues) {
    Tensor t = Tensor::full({2, 3, 4, 5}, 1.5);
    EXPECT_EQ(t.numel(), 120u);
    for (double v : t.data()) EXPECT_EQ(v, 1.5);
    EXPECT_FALSE(t.requires_grad());
    EXPECT_TRUE(t.is_leaf());
    EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, FromDataRejectsWrongLength) {
    EXPECT_THROW(Tensor::from_data({1, 1, 2, 2}, {1.0, 2.0}), std::invalid_argument);
}

TEST(Tensor, AtIndexesRowMajor) {
    Tensor t = Tensor::from_data({1, 2, 2, 2}, {0, 1, 2, 3, 4, 5, 6, 7});
    EXPECT_EQ(t.at(0, 1, 0, 1), 5.0);
    EXPECT_EQ(t.at(0, 0, 1, 0), 2.0);
}

TEST(Backward, SumGivesOnes) {
    Tensor x = test::random_tensor({2, 3, 4, 4}, 1, -1, 1, true);
    sum(x).backward();
    ASSERT_TRUE(x.has_grad());
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, HalfSquaredNormGivesInput) {
    Tensor x = test::random_tensor({1, 2, 3, 3}, 2, -1, 1, true);
    scale(sum(mul(x, x)), 0.5).backward();
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(x.grad()[i], x.data()[i], 1e-15);
}

TEST(Backward, UnusedParameterGetsZeroGrad) {
    Tensor x = test::random_tensor({1, 1, 2, 2}, 3, -1, 1, true);
    Tensor unused = test::random_tensor({1, 1, 2, 2}, 4, -1, 1, true);
    unused.mutable_grad();
    sum(x).backward();
    for (double g : unused.grad()) EXPECT_EQ(g, 0.0);
}

TEST(Backward, UnusedBranchContributesNothing) {
    Tensor x = test::random_tensor({1, 1, 3, 3}, 5, -1, 1, true);
    Tensor dead = mul(x, x);
    (void)dead;
    sum(x).backward();
    for (double g : x.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, TwiceAccumulates) {
    Tensor x = test::random_tensor({1, 1, 2, 3}, 6, -1, 1, true);
    Tensor loss = sum(scale(x, 3.0));
    loss.backward();
    loss.backward();
    for (double g : x.grad()) EXPECT_EQ(g, 6.0);
}

TEST(Backward, NonScalarLossThrows) {
    Tensor x = test::random_tensor({1, 1, 2, 2}, 7, -1, 1, true);
    EXPECT_THROW(relu(x).backward(), std::invalid_argument);
}

TEST(Backward, SharedSubexpressionSumsPaths) {
    Tensor x = Tensor::from_data({1, 1, 1, 1}, {3.0}, true);
    Tensor y = mul(x, x);
    sum(add(y, scale(y, 2.0))).backward();  // 3x^2
    EXPECT_DOUBLE_EQ(x.grad()[0], 18.0);
}

TEST(Backward, VisitsNodesInReverseExecutionOrder) {
    Tensor x = test::random_tensor({1, 2, 4, 4}, 8, -1, 1, true);
    Tensor a = relu(x);
    Tensor b = sigmoid(a);
    Tensor c = add(a, b);
    Tensor loss = sum(c);
    auto order = graph_order(loss);
    ASSERT_EQ(order.size(), 4u);
    for (std::size_t i = 1; i < order.size(); ++i)
        EXPECT_LT(order[i - 1]->sequence(), order[i]->sequence());
    EXPECT_STREQ(order.front()->name(), "relu");
    EXPECT_STREQ(order.back()->name(), "sum");
}

TEST(Backward, DeterministicAcrossRuns) {
    auto run = [] {
        Tensor x = test::random_tensor({2, 4, 8, 8}, 9, -1, 1, true);
        Tensor w = test::random_tensor({4, 4, 3, 3}, 10, -1, 1, true);
        Tensor y = conv2d(x, w, Tensor(), Conv2dOptions::same(3));
        sum(mul(tanh(y), y)).backward();
        return std::make_pair(std::vector<double>(x.grad().begin(), x.grad().end()),
                              std::vector<double>(w.grad().begin(), w.grad().end()));
    };
    EXPECT_EQ(run(), run());
}

TEST(NoGrad, SuppressesRecording) {
    Tensor x = test::random_tensor({1, 1, 2, 2}, 11, -1, 1, true);
    {
        NoGradGuard guard;
        EXPECT_FALSE(grad_enabled());
        Tensor y = relu(x);
        EXPECT_TRUE(y.is_leaf());
        EXPECT_FALSE(y.requires_grad());
    }
    EXPECT_TRUE(grad_enabled());
    EXPECT_FALSE(relu(x).is_leaf());
}

TEST(Detach, CutsHistory) {
    Tensor x = test::random_tensor({1, 1, 2, 2}, 12, -1, 1, true);
    Tensor y = relu(x).detach();
    EXPECT_TRUE(y.is_leaf());
    EXPECT_FALSE(y.requires_grad());
}
