#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "gazenet/errors.hpp"
#include "gazenet/rng.hpp"
#include "gazenet/synthcam.hpp"
#include "gazenet/train.hpp"

using namespace gazenet;

namespace {

SynthConfig small_synth(int subjects = 2, int per_subject = 24, std::uint64_t seed = 3) {
    SynthConfig c;
    c.image_w = 16;
    c.image_h = 10;
    c.n_subjects = subjects;
    c.samples_per_subject = per_subject;
    c.seed = seed;
    return c;
}

NetConfig small_net(int K = 1) {
    NetConfig c = NetConfig::tiny();
    c.input_w = 16;
    c.input_h = 10;
    c.conv = {ConvSpec{3, 4, 2}, ConvSpec{3, 6, 1}, ConvSpec{3, 6, 1}, ConvSpec{3, 6, 1}, ConvSpec{3, 4, 1}};
    c.fc6_dim = 16;
    c.fc7_dim = 8;
    c.K = K;
    return c;
}

TrainConfig quick_train(int epochs = 2) {
    TrainConfig t;
    t.epochs = epochs;
    t.batch_size = 8;
    t.seed = 11;
    return t;
}

void expect_same_params(const BranchedNet<float>& a, const BranchedNet<float>& b) {
    ASSERT_EQ(a.params().size(), b.params().size());
    for (std::size_t i = 0; i < a.params().size(); ++i)
        EXPECT_EQ(a.params().tensor(i).data, b.params().tensor(i).data) << a.params().name(i);
}

// Stored cluster ids from head yaw thirds, independent of any fit.
Dataset with_yaw_clusters(Dataset ds) {
    for (auto& s : ds.samples) s.cluster = s.head.yaw < -0.15 ? 1 : (s.head.yaw > 0.15 ? 3 : 2);
    return ds;
}

}  // namespace

TEST(Loss, Examples) {
    EXPECT_EQ(loss({0.1, 0.2}, {0.1, 0.2}), 0.0);
    EXPECT_NEAR(loss({0, 0}, {0, 0.2}), 0.02, 1e-15);
    std::mt19937_64 g(1);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int i = 0; i < 100; ++i) {
        const Angles p{u(g), u(g)}, t{u(g), u(g)};
        const double ref = ((p.pitch - t.pitch) * (p.pitch - t.pitch) + (p.yaw - t.yaw) * (p.yaw - t.yaw)) / 2.0;
        EXPECT_NEAR(loss(p, t), ref, 1e-15);
    }
}

TEST(Loss, GradientsMatchFiniteDifferences) {
    std::mt19937_64 g(2);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (LossKind kind : {LossKind::MseRadians, LossKind::Angular}) {
        for (int i = 0; i < 50; ++i) {
            const Angles p{u(g), u(g)}, t{u(g), u(g)};
            double gr[2], tmp[2];
            loss_and_grad(kind, p, t, gr);
            const double h = 1e-6;
            const double dp = (loss_and_grad(kind, {p.pitch + h, p.yaw}, t, tmp) -
                               loss_and_grad(kind, {p.pitch - h, p.yaw}, t, tmp)) / (2 * h);
            const double dy = (loss_and_grad(kind, {p.pitch, p.yaw + h}, t, tmp) -
                               loss_and_grad(kind, {p.pitch, p.yaw - h}, t, tmp)) / (2 * h);
            EXPECT_NEAR(gr[0], dp, 1e-5);
            EXPECT_NEAR(gr[1], dy, 1e-5);
        }
    }
    double gr[2];
    EXPECT_NEAR(loss_and_grad(LossKind::Angular, {0, 0}, {0, 0.2}, gr), 0.2, 1e-7);
}

TEST(TrainConfig, Validation) {
    TrainConfig t;
    EXPECT_NO_THROW(t.validate());
    t.batch_size = 0;
    EXPECT_THROW(t.validate(), ConfigError);
    t = TrainConfig{};
    t.learning_rate = -1e-3;
    EXPECT_THROW(t.validate(), ConfigError);
    t = TrainConfig{};
    t.lr_schedule = LrSchedule::StepDecay;
    t.step_epochs = 2;
    t.step_gamma = 0.5;
    EXPECT_DOUBLE_EQ(t.lr_at(0), 1e-3);
    EXPECT_DOUBLE_EQ(t.lr_at(1), 1e-3);
    EXPECT_DOUBLE_EQ(t.lr_at(2), 5e-4);
    EXPECT_DOUBLE_EQ(t.lr_at(5), 2.5e-4);
}

TEST(Prepare, ScalesPixelsAndRoutes) {
    const Dataset ds = with_yaw_clusters(generate_dataset(small_synth(1, 6)));
    const PreparedData single = prepare(ds, small_net(1), nullptr, false);
    EXPECT_EQ(single.n, 6);
    EXPECT_EQ(single.sample_numel, 160);
    for (int r : single.route) EXPECT_EQ(r, 1);
    EXPECT_FLOAT_EQ(single.pixels[0], static_cast<float>(ds.images[0].data[0]) * 2.0f / 255.0f - 1.0f);
    const PreparedData branched = prepare(ds, small_net(3), nullptr, false);
    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(branched.route[i], *ds.samples[i].cluster);
    EXPECT_THROW(prepare(ds, NetConfig::tiny(), nullptr, false), InvalidInput);
}

TEST(TrainEpochs, ZeroLearningRateLeavesParametersUnchanged) {
    const Dataset ds = generate_dataset(small_synth());
    for (OptimizerKind opt : {OptimizerKind::Adam, OptimizerKind::SgdMomentum}) {
        BranchedNet<float> net(small_net()), ref(small_net());
        net.init_he_uniform(1);
        ref.init_he_uniform(1);
        TrainConfig t = quick_train(3);
        t.learning_rate = 0.0;
        t.optimizer = opt;
        const auto curve = train_epochs(net, ds, nullptr, t);
        EXPECT_EQ(curve.size(), 3u);
        expect_same_params(net, ref);
    }
}

TEST(TrainEpochs, ZeroGradientStepLeavesParametersUnchanged) {
    const Dataset ds = generate_dataset(small_synth(1, 4));
    BranchedNet<float> net(small_net());
    net.params().fill(0.0f);
    PreparedData data = prepare(ds, net.config(), nullptr, false);
    for (auto& g : data.gaze) g = Angles{};  // zero net output matches every label
    const BranchedNet<float> ref = net;
    for (OptimizerKind opt : {OptimizerKind::Adam, OptimizerKind::SgdMomentum}) {
        TrainConfig t = quick_train(2);
        t.optimizer = opt;
        train_epochs(net, data, t);
        expect_same_params(net, ref);
    }
}

TEST(TrainEpochs, MemorizesSingleSample) {
    const Dataset ds = generate_dataset(small_synth(1, 1));
    BranchedNet<float> net(small_net());
    net.init_he_uniform(2);
    TrainConfig t = quick_train(600);
    t.batch_size = 1;
    const PreparedData data = prepare(ds, net.config(), nullptr, false);
    train_epochs(net, data, t);
    EXPECT_LT(measure(net, data, LossKind::MseRadians).loss, 1e-6);
}

TEST(TrainEpochs, DeterministicForFixedSeed) {
    const Dataset ds = generate_dataset(small_synth());
    auto run = [&](std::uint64_t seed) {
        BranchedNet<float> net(small_net(3));
        net.init_he_uniform(4);
        TrainConfig t = quick_train(3);
        t.seed = seed;
        auto curve = train_epochs(net, with_yaw_clusters(ds), nullptr, t);
        return std::make_pair(curve, net);
    };
    const auto [c1, n1] = run(5);
    const auto [c2, n2] = run(5);
    const auto [c3, n3] = run(6);
    ASSERT_EQ(c1.size(), c2.size());
    for (std::size_t i = 0; i < c1.size(); ++i) EXPECT_EQ(c1[i].loss, c2[i].loss);
    expect_same_params(n1, n2);
    EXPECT_NE(c1[1].loss, c3[1].loss);
    EXPECT_EQ(loss_curve_csv(c1), loss_curve_csv(c2));
}

TEST(TrainEpochs, LossDecreasesOnSyntheticData) {
    const Dataset ds = generate_dataset(small_synth(3, 60));
    BranchedNet<float> net(small_net());
    net.init_he_uniform(3);
    const auto curve = train_epochs(net, ds, nullptr, quick_train(5));
    EXPECT_LT(curve.back().loss, curve.front().loss);
}

TEST(TrainEpochs, ValidationRecordsInterleave) {
    const Dataset ds = generate_dataset(small_synth());
    BranchedNet<float> net(small_net());
    net.init_he_uniform(3);
    const PreparedData data = prepare(ds, net.config(), nullptr, false);
    TrainOptions o;
    o.validation = &data;
    int seen = 0;
    o.on_epoch = [&](const EpochRecord&) { ++seen; };
    const auto curve = train_epochs(net, data, quick_train(2), o);
    ASSERT_EQ(curve.size(), 4u);
    EXPECT_EQ(curve[0].split, "train");
    EXPECT_EQ(curve[1].split, "val");
    EXPECT_EQ(curve[3].epoch, 1);
    EXPECT_EQ(seen, 4);
    EXPECT_EQ(loss_curve_csv(curve).substr(0, 35), "epoch,split,loss,angular_error_deg\n");
}

TEST(TrainEpochs, UpdateCountersFollowRouting) {
    const Dataset ds = with_yaw_clusters(generate_dataset(small_synth(3, 40)));
    BranchedNet<float> net(small_net(3));
    net.init_he_uniform(3);
    UpdateCounters counters;
    TrainOptions o;
    o.counters = &counters;
    train_epochs(net, ds, nullptr, quick_train(2), o);
    std::array<int, 3> present{};
    for (const auto& s : ds.samples) present[static_cast<std::size_t>(*s.cluster - 1)] = 1;
    ASSERT_EQ(present, (std::array<int, 3>{1, 1, 1}));
    for (std::size_t i = 0; i < counters.names.size(); ++i) {
        const int h = BranchedNet<float>::head_of(counters.names[i]);
        for (int k = 1; k <= 3; ++k) {
            const auto n = counters.counts[i][static_cast<std::size_t>(k - 1)];
            if (h == 0 || h == k)
                EXPECT_GT(n, 0u) << counters.names[i] << " cluster " << k;
            else
                EXPECT_EQ(n, 0u) << counters.names[i] << " cluster " << k;
        }
    }
}

TEST(TrainEpochs, FrozenTrunkOnlyMovesHeads) {
    const Dataset ds = generate_dataset(small_synth());
    BranchedNet<float> net(small_net());
    net.init_he_uniform(3);
    const BranchedNet<float> ref = net;
    TrainConfig t = quick_train(1);
    t.finetune = FinetuneConfig{"", true, 1.0};
    train_epochs(net, ds, nullptr, t);
    for (std::size_t i = 0; i < net.params().size(); ++i) {
        const auto& n = net.params().name(i);
        if (BranchedNet<float>::is_head_param(n))
            EXPECT_NE(net.params().tensor(i).data, ref.params().tensor(i).data) << n;
        else
            EXPECT_EQ(net.params().tensor(i).data, ref.params().tensor(i).data) << n;
    }
}

TEST(TrainStep, InvariantToBatchOrder) {
    const Dataset ds = with_yaw_clusters(generate_dataset(small_synth(2, 12)));
    BranchedNet<float> a(small_net(3));
    a.init_he_uniform(9);
    BranchedNet<float> b = a;
    const PreparedData data = prepare(ds, a.config(), nullptr, false);
    std::vector<std::size_t> batch(static_cast<std::size_t>(data.n));
    std::iota(batch.begin(), batch.end(), std::size_t{0});
    std::vector<std::size_t> reversed(batch.rbegin(), batch.rend());
    const TrainConfig t;
    Optimizer oa(a, t), ob(b, t);
    Workspace<float> wa, wb;
    Gradients<float> ga(a), gb(b);
    const double la = train_step(a, oa, data, batch, 1e-3, LossKind::MseRadians, false, wa, ga);
    const double lb = train_step(b, ob, data, reversed, 1e-3, LossKind::MseRadians, false, wb, gb);
    EXPECT_EQ(la, lb);
    expect_same_params(a, b);
}

TEST(TrainEpochs, NonFiniteLossReportsBatch) {
    const Dataset ds = generate_dataset(small_synth(1, 6));
    BranchedNet<float> net(small_net());
    net.init_he_uniform(1);
    PreparedData data = prepare(ds, net.config(), nullptr, false);
    data.gaze[4].yaw = std::numeric_limits<double>::quiet_NaN();
    TrainConfig t = quick_train(1);
    t.batch_size = 1;
    std::vector<std::size_t> order(6);
    std::iota(order.begin(), order.end(), std::size_t{0});
    RngStream rng(t.seed, streams::kShuffle, 0);
    shuffle(order.begin(), order.end(), rng);
    const auto expected = static_cast<std::size_t>(std::find(order.begin(), order.end(), 4u) - order.begin());
    try {
        train_epochs(net, data, t);
        FAIL() << "expected TrainingDiverged";
    } catch (const TrainingDiverged& e) {
        EXPECT_EQ(e.batch_index(), expected);
    }
}

TEST(TrainEpochs, ShapeMismatchThrows) {
    const Dataset ds = generate_dataset(small_synth(1, 2));
    BranchedNet<float> net(NetConfig::tiny());
    EXPECT_THROW(train_epochs(net, ds, nullptr, quick_train(1)), InvalidInput);
}

TEST(PretrainFinetune, EmptyRealEqualsSyntheticTraining) {
    const Dataset synth = generate_dataset(small_synth());
    BranchedNet<float> a(small_net()), b(small_net());
    a.init_he_uniform(1);
    b.init_he_uniform(1);
    TrainConfig t = quick_train(2);
    const auto r = pretrain_finetune(a, synth, Dataset{}, nullptr, t, 2);
    const auto curve = train_epochs(b, synth, nullptr, t);
    expect_same_params(a, b);
    ASSERT_EQ(r.pretrain_curve.size(), curve.size());
    EXPECT_TRUE(r.finetune_curve.empty());
    for (std::size_t i = 0; i < curve.size(); ++i) EXPECT_EQ(r.pretrain_curve[i].loss, curve[i].loss);
}

TEST(PretrainFinetune, ZeroSyntheticEpochsEqualsRealTraining) {
    const Dataset synth = generate_dataset(small_synth());
    const Dataset real = generate_dataset(small_synth(2, 16, 99));
    BranchedNet<float> a(small_net()), b(small_net());
    a.init_he_uniform(1);
    b.init_he_uniform(1);
    TrainConfig t = quick_train(2);
    const auto r = pretrain_finetune(a, synth, real, nullptr, t, 0);
    train_epochs(b, real, nullptr, t);
    expect_same_params(a, b);
    EXPECT_TRUE(r.pretrain_curve.empty());
    EXPECT_EQ(r.finetune_curve.size(), 2u);
}

TEST(PretrainFinetune, FinetuneUsesScaledLearningRate) {
    const Dataset synth = generate_dataset(small_synth());
    const Dataset real = generate_dataset(small_synth(2, 16, 99));
    BranchedNet<float> a(small_net()), b(small_net());
    a.init_he_uniform(1);
    b.init_he_uniform(1);
    TrainConfig t = quick_train(2);
    pretrain_finetune(a, synth, real, nullptr, t, 1);
    TrainConfig pre = t;
    pre.epochs = 1;
    train_epochs(b, synth, nullptr, pre);
    TrainConfig fine = t;
    fine.learning_rate = t.learning_rate * 0.1;
    train_epochs(b, real, nullptr, fine);
    for (std::size_t i = 0; i < a.params().size(); ++i)
        for (std::size_t j = 0; j < a.params().tensor(i).numel(); ++j)
            ASSERT_NEAR(a.params().tensor(i).data[j], b.params().tensor(i).data[j], 1e-6) << a.params().name(i);
}
