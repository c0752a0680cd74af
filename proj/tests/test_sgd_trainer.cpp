#include <gtest/gtest.h>

#include "prunelab/sgd.hpp"
#include "prunelab/trainer.hpp"

using namespace prunelab;

namespace {

ModelState tiny_state(std::vector<float> params) {
    ModelState s;
    s.arch = make_mlp(1, {}, 2);  // layout irrelevant for sgd tests below
    s.params = std::move(params);
    return s;
}

SparsityMask mask_of(std::vector<uint8_t> bits) {
    SparsityMask m;
    m.bits = std::move(bits);
    m.partition = {{"w", 0, static_cast<int64_t>(m.bits.size()), true, 0}};
    return m;
}

}  // namespace

TEST(Sgd, PlainStepWithoutMomentum) {
    ModelState s = tiny_state({1.0f, 2.0f, 3.0f, 4.0f});
    SparsityMask m = mask_of({1, 1, 1, 1});
    MomentumBuffer buf = MomentumBuffer::zeros(4);
    sgd_step(s, {0.5f, -0.5f, 1.0f, 0.0f}, m, 0.1, 0.0, buf);
    EXPECT_FLOAT_EQ(s.params[0], 0.95f);
    EXPECT_FLOAT_EQ(s.params[1], 2.05f);
    EXPECT_FLOAT_EQ(s.params[2], 2.9f);
    EXPECT_FLOAT_EQ(s.params[3], 4.0f);
}

TEST(Sgd, MaskedCoordinateStaysZero) {
    ModelState s = tiny_state({0.0f, 2.0f});
    SparsityMask m = mask_of({0, 1});
    MomentumBuffer buf = MomentumBuffer::zeros(2);
    for (int i = 0; i < 5; ++i) sgd_step(s, {3.0f, 0.1f}, m, 0.1, 0.9, buf);
    EXPECT_EQ(s.params[0], 0.0f);
    EXPECT_EQ(buf.velocity[0], 0.0f);
    EXPECT_NE(s.params[1], 2.0f);
}

TEST(Sgd, TwoMomentumStepsMatchHandComputation) {
    // v1 = g1, w1 = w0 - lr v1; v2 = mu v1 + g2, w2 = w1 - lr v2
    const double lr = 0.1, mu = 0.9;
    const float g1 = 0.5f, g2 = -0.25f, w0 = 1.0f;
    ModelState s = tiny_state({w0});
    SparsityMask m = mask_of({1});
    MomentumBuffer buf = MomentumBuffer::zeros(1);
    sgd_step(s, {g1}, m, lr, mu, buf);
    sgd_step(s, {g2}, m, lr, mu, buf);
    double v1 = g1;
    double w1 = w0 - lr * v1;
    double v2 = mu * v1 + g2;
    double w2 = w1 - lr * v2;
    EXPECT_NEAR(s.params[0], w2, 1e-7);
    EXPECT_NEAR(buf.velocity[0], v2, 1e-7);
}

TEST(Sgd, RejectsNonPositiveLearningRate) {
    ModelState s = tiny_state({1.0f});
    SparsityMask m = mask_of({1});
    MomentumBuffer buf = MomentumBuffer::zeros(1);
    EXPECT_THROW(sgd_step(s, {0.1f}, m, 0.0, 0.9, buf), ConfigError);
    EXPECT_THROW(sgd_step(s, {0.1f}, m, -0.1, 0.9, buf), ConfigError);
}

TEST(Trainer, DeterministicAcrossRuns) {
    LabeledDataset data = make_blobs(2, 40, 6, 1.0, 3);
    Arch arch = make_mlp(6, {16}, 2);
    ModelState init = init_state(arch, 100);
    SparsityMask dense = make_dense_mask(arch);
    TrainRecipe r;
    r.epochs = 4;
    r.batch_size = 16;
    r.order_seed = 5;
    r.early_stop = false;
    TrainResult a = train(init, dense, data, r);
    TrainResult b = train(init, dense, data, r);
    EXPECT_EQ(a.state.params, b.state.params);
    EXPECT_EQ(a.epoch_losses, b.epoch_losses);
}

TEST(Trainer, MaskAbsorptionThroughTraining) {
    LabeledDataset data = make_blobs(2, 30, 5, 1.0, 4);
    Arch arch = make_mlp(5, {8}, 2);
    ModelState init = init_state(arch, 7);
    SparsityMask mask = make_dense_mask(arch);
    // zero out a third of the first weight block
    for (int64_t i = 0; i < 13; ++i) mask.bits[static_cast<size_t>(i * 3)] = 0;
    TrainRecipe r;
    r.epochs = 3;
    r.batch_size = 10;
    r.early_stop = false;
    TrainHooks hooks;
    bool ok = true;
    hooks.on_step = [&](int64_t, const ModelState& s) {
        for (size_t i = 0; i < mask.bits.size(); ++i)
            if (!mask.bits[i] && s.params[i] != 0.0f) ok = false;
    };
    TrainResult res = train(init, mask, data, r, hooks);
    EXPECT_TRUE(ok);
    for (size_t i = 0; i < mask.bits.size(); ++i)
        if (!mask.bits[i]) ASSERT_EQ(res.state.params[i], 0.0f);
}

TEST(Trainer, CheckpointsAtRequestedEpochs) {
    LabeledDataset data = make_blobs(2, 30, 5, 1.0, 4);
    Arch arch = make_mlp(5, {8}, 2);
    ModelState init = init_state(arch, 7);
    TrainRecipe r;
    r.epochs = 5;
    r.batch_size = 10;
    r.checkpoint_epochs = {0, 3};
    r.early_stop = false;
    TrainResult res = train(init, make_dense_mask(arch), data, r);
    ASSERT_TRUE(res.checkpoints.count(0));
    ASSERT_TRUE(res.checkpoints.count(3));
    EXPECT_EQ(res.checkpoints.at(0).params, init.params);
    EXPECT_EQ(res.checkpoints.at(0).epoch_tag, 0);
    EXPECT_EQ(res.checkpoints.at(3).epoch_tag, 3);
    EXPECT_NE(res.checkpoints.at(3).params, init.params);
}

TEST(Trainer, BlobsMlpReachesHighAccuracy) {
    // pinned fixture: spread-1 clusters are easily separable
    LabeledDataset all = make_blobs(2, 625, 20, 1.0, 7);
    auto [test, train_set] = split_per_class(all, 125, Role::kTest, Role::kRealTrain);
    Arch arch = make_mlp(20, {32}, 2);
    ModelState init = init_state(arch, 1);
    TrainRecipe r;
    r.epochs = 20;
    r.batch_size = 64;
    r.order_seed = 2;
    TrainResult res = train(init, make_dense_mask(arch), train_set, r);
    EXPECT_GE(eval_accuracy(res.state, test), 0.95);
}
