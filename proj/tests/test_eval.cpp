#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "gazenet/errors.hpp"
#include "gazenet/eval.hpp"
#include "gazenet/synthcam.hpp"

using namespace gazenet;

namespace {

Dataset fixture(int subjects = 4, int per_subject = 30, std::uint64_t seed = 5) {
    SynthConfig c;
    c.image_w = 16;
    c.image_h = 10;
    c.n_subjects = subjects;
    c.samples_per_subject = per_subject;
    c.seed = seed;
    return generate_dataset(c);
}

ExperimentConfig quick_experiment() {
    ExperimentConfig e;
    e.net = NetConfig::tiny();
    e.net.input_w = 16;
    e.net.input_h = 10;
    e.net.conv = {ConvSpec{3, 4, 2}, ConvSpec{3, 6, 1}, ConvSpec{3, 6, 1}, ConvSpec{3, 6, 1}, ConvSpec{3, 4, 1}};
    e.net.fc6_dim = 16;
    e.net.fc7_dim = 8;
    e.train.epochs = 1;
    e.train.batch_size = 16;
    e.cluster.K = 2;
    e.cluster.n_restarts = 2;
    return e;
}

Angles pitch_offset(const Angles& a, double deg) { return {a.pitch + deg2rad(deg), a.yaw}; }

}  // namespace

TEST(Evaluate, PerfectPredictorGivesZero) {
    const Dataset ds = fixture();
    const EvalReport r = evaluate([](const Sample& s, const EyeImage&, int) { return s.gaze; }, ds, nullptr);
    EXPECT_EQ(r.records.size(), ds.size());
    EXPECT_EQ(r.overall_mean, 0.0);
    for (const auto& rec : r.records) EXPECT_EQ(rec.error_deg, 0.0);
}

TEST(Evaluate, ConstantPitchOffsetGivesThatError) {
    const Dataset ds = fixture();
    // a pure pitch change at fixed yaw moves along a great circle
    const EvalReport r = evaluate([](const Sample& s, const EyeImage&, int) { return pitch_offset(s.gaze, 10.0); }, ds, nullptr);
    EXPECT_NEAR(r.overall_mean, 10.0, 1e-9);
    EXPECT_NEAR(r.subject_mean, 10.0, 1e-9);
    for (const auto& [k, a] : r.per_subject) EXPECT_NEAR(a.mean, 10.0, 1e-9);
}

TEST(Evaluate, AggregationIdentities) {
    const Dataset ds = fixture(5, 40);
    const ClusterModel model = ClusterModel::from_centroids(std::vector<Angles>{{0, -0.5}, {0, 0}, {0, 0.5}});
    const EvalReport r = evaluate(
        [](const Sample& s, const EyeImage& img, int k) {
            return pitch_offset(s.gaze, 0.5 * k + img.data[0] / 255.0 + s.head.yaw);
        },
        ds, &model);
    double sum = 0.0;
    for (const auto& rec : r.records) sum += rec.error_deg;
    EXPECT_NEAR(r.overall_mean, sum / r.records.size(), 1e-9);

    std::size_t count = 0;
    double weighted = 0.0;
    for (const auto& [k, a] : r.per_cluster) {
        count += a.count;
        weighted += a.mean * a.count;
    }
    EXPECT_EQ(count, ds.size());
    EXPECT_NEAR(weighted / count, r.overall_mean, 1e-9);

    double subj = 0.0;
    for (const auto& [k, a] : r.per_subject) subj += a.mean;
    EXPECT_NEAR(r.subject_mean, subj / r.per_subject.size(), 1e-9);
    EXPECT_EQ(r.per_subject.size(), 5u);

    for (std::size_t i = 0; i < ds.size(); ++i) EXPECT_EQ(r.records[i].cluster, model.assign(ds.samples[i].head));
}

TEST(Evaluate, InvariantToSampleOrder) {
    const Dataset ds = fixture();
    std::vector<std::size_t> perm(ds.size());
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 7, perm.end());
    const Dataset shuffled = ds.subset(perm);
    const Predictor p = [](const Sample& s, const EyeImage& img, int) { return pitch_offset(s.gaze, img.data[3] / 40.0); };
    const EvalReport a = evaluate(p, ds, nullptr), b = evaluate(p, shuffled, nullptr);
    EXPECT_NEAR(a.overall_mean, b.overall_mean, 1e-12);
    std::map<std::string, double> by_id;
    for (const auto& r : a.records) by_id[r.id] = r.error_deg;
    for (const auto& r : b.records) EXPECT_EQ(by_id.at(r.id), r.error_deg);
}

TEST(Evaluate, OptInOutlierExclusion) {
    const Dataset ds = fixture(2, 20);
    const Predictor p = [](const Sample& s, const EyeImage&, int) {
        return pitch_offset(s.gaze, s.id.back() == '3' ? 30.0 : 1.0);
    };
    EvalOptions o;
    o.exclude_above_deg = 10.0;
    const EvalReport r = evaluate(p, ds, nullptr, o);
    std::size_t excluded = 0;
    for (const auto& rec : r.records) excluded += rec.excluded;
    EXPECT_GT(excluded, 0u);
    EXPECT_NEAR(r.overall_mean, 1.0, 1e-9);
    const EvalReport all = evaluate(p, ds, nullptr);
    EXPECT_GT(all.overall_mean, 1.0);
}

TEST(Evaluate, ZeroNetPredictsStraightAhead) {
    const Dataset ds = fixture(2, 10);
    BranchedNet<float> net(quick_experiment().net);
    net.params().fill(0.0f);
    const EvalReport r = evaluate(net, ds, nullptr);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(r.records[i].pred, (Angles{0, 0}));
        EXPECT_NEAR(r.records[i].error_deg, angular_error({0, 0}, ds.samples[i].gaze), 1e-12);
    }
}

TEST(ReportFinalize, AppendAndFolds) {
    EvalReport a, b;
    a.records = {{"a", 1, 1, 0, {}, {}, 2.0, false}, {"b", 2, 1, 0, {}, {}, 4.0, false}};
    b.records = {{"c", 3, 2, 1, {}, {}, 6.0, false}, {"d", 3, 2, 1, {}, {}, 100.0, true}};
    a.append(b);
    EXPECT_EQ(a.records.size(), 4u);
    EXPECT_NEAR(a.overall_mean, 4.0, 1e-12);
    EXPECT_EQ(a.per_fold.at(0).count, 2u);
    EXPECT_EQ(a.per_fold.at(1).count, 1u);
    EXPECT_NEAR(a.per_cluster.at(2).mean, 6.0, 1e-12);
    EXPECT_NEAR(a.subject_mean, 4.0, 1e-12);
    const std::string csv = report_summary_csv(a);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "scope,key,count,mean_error_deg");
    EXPECT_NE(csv.find("overall,all,3,4.000000"), std::string::npos);
    EXPECT_NE(csv.find("fold,1,1,6.000000"), std::string::npos);
    const std::string rec = report_records_csv(a);
    EXPECT_EQ(std::count(rec.begin(), rec.end(), '\n'), 5);
}

TEST(ProtocolSplits, LeaveOneSubjectOut) {
    const Dataset ds = fixture(4, 10);
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::Loso;
    const auto splits = protocol_splits(ds, spec, 1);
    ASSERT_EQ(splits.size(), 4u);
    std::multiset<std::size_t> tested;
    for (const auto& f : splits) {
        std::set<int> test_subjects, train_subjects;
        for (auto i : f.test) test_subjects.insert(ds.samples[i].subject);
        for (auto i : f.train) train_subjects.insert(ds.samples[i].subject);
        EXPECT_EQ(test_subjects.size(), 1u);
        EXPECT_EQ(train_subjects.count(*test_subjects.begin()), 0u);
        EXPECT_EQ(f.train.size() + f.test.size(), ds.size());
        tested.insert(f.test.begin(), f.test.end());
    }
    EXPECT_EQ(tested.size(), ds.size());
    EXPECT_EQ(std::set<std::size_t>(tested.begin(), tested.end()).size(), ds.size());
}

TEST(ProtocolSplits, KFoldAcrossSubjects) {
    const Dataset ds = fixture(7, 6);
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::KFold;
    spec.folds = 3;
    spec.repeats = 3;
    const auto splits = protocol_splits(ds, spec, 9);
    ASSERT_EQ(splits.size(), 9u);
    std::set<std::vector<std::size_t>> distinct_first_folds;
    for (int r = 0; r < 3; ++r) {
        std::set<std::size_t> tested;
        for (int f = 0; f < 3; ++f) {
            const auto& s = splits[static_cast<std::size_t>(r * 3 + f)];
            std::set<int> te, tr;
            for (auto i : s.test) te.insert(ds.samples[i].subject);
            for (auto i : s.train) tr.insert(ds.samples[i].subject);
            for (int t : te) EXPECT_EQ(tr.count(t), 0u);
            EXPECT_GE(te.size(), 2u);
            EXPECT_LE(te.size(), 3u);
            for (auto i : s.test) EXPECT_TRUE(tested.insert(i).second);
        }
        EXPECT_EQ(tested.size(), ds.size());
        distinct_first_folds.insert(splits[static_cast<std::size_t>(r * 3)].test);
    }
    EXPECT_GT(distinct_first_folds.size(), 1u);  // re-randomized per repeat
    const auto again = protocol_splits(ds, spec, 9);
    for (std::size_t i = 0; i < splits.size(); ++i) EXPECT_EQ(again[i].test, splits[i].test);
}

TEST(ProtocolSplits, PersonSpecificStratified) {
    const Dataset ds = fixture(3, 20);
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::PersonSpecific;
    const auto splits = protocol_splits(ds, spec, 2);
    ASSERT_EQ(splits.size(), 1u);
    std::map<int, int> test_count;
    for (auto i : splits[0].test) ++test_count[ds.samples[i].subject];
    for (const auto& [s, n] : test_count) EXPECT_EQ(n, 4);
    EXPECT_EQ(test_count.size(), 3u);
    std::set<std::size_t> all(splits[0].train.begin(), splits[0].train.end());
    for (auto i : splits[0].test) EXPECT_TRUE(all.insert(i).second);
    EXPECT_EQ(all.size(), ds.size());
}

TEST(ProtocolSplits, Holdout) {
    const Dataset ds = fixture(4, 5);
    ProtocolSpec spec;
    spec.test_subjects = {1, 3};
    const auto splits = protocol_splits(ds, spec, 1);
    ASSERT_EQ(splits.size(), 1u);
    for (auto i : splits[0].test) EXPECT_TRUE(ds.samples[i].subject == 1 || ds.samples[i].subject == 3);
    for (auto i : splits[0].train) EXPECT_TRUE(ds.samples[i].subject == 0 || ds.samples[i].subject == 2);
}

TEST(ProtocolSplits, Errors) {
    const Dataset one = fixture(1, 5);
    const Dataset three = fixture(3, 5);
    ProtocolSpec loso;
    loso.kind = ProtocolSpec::Kind::Loso;
    EXPECT_THROW(protocol_splits(one, loso, 1), ProtocolError);
    ProtocolSpec kf;
    kf.kind = ProtocolSpec::Kind::KFold;
    kf.folds = 4;
    EXPECT_THROW(protocol_splits(three, kf, 1), ProtocolError);
    kf.folds = 1;
    EXPECT_THROW(protocol_splits(three, kf, 1), ProtocolError);
    ProtocolSpec ps;
    ps.kind = ProtocolSpec::Kind::PersonSpecific;
    ps.train_frac = 1.0;
    EXPECT_THROW(protocol_splits(three, ps, 1), ProtocolError);
    ProtocolSpec ho;
    ho.test_subjects = {7};
    EXPECT_THROW(protocol_splits(three, ho, 1), ProtocolError);
    ho.test_subjects = {0, 1, 2};
    EXPECT_THROW(protocol_splits(three, ho, 1), ProtocolError);
}

TEST(RunProtocol, LosoRecordsEveryFold) {
    const Dataset ds = fixture(3, 16);
    const EvalReport r = loso_protocol(ds, quick_experiment());
    EXPECT_EQ(r.protocol, "loso");
    EXPECT_EQ(r.records.size(), ds.size());
    EXPECT_EQ(r.per_fold.size(), 3u);
    EXPECT_EQ(r.K, 2);
    EXPECT_TRUE(std::isfinite(r.overall_mean));
    EXPECT_FALSE(r.config_hash.empty());
    const EvalReport again = loso_protocol(ds, quick_experiment());
    EXPECT_EQ(again.overall_mean, r.overall_mean);
}

TEST(RunProtocol, FixedCentroidsAreUsed) {
    const Dataset ds = fixture(3, 16);
    ExperimentConfig e = quick_experiment();
    e.fixed_centroids = {{0, -0.4}, {0, 0}, {0, 0.4}};
    const ClusterModel m = fold_clusters(ds, e);
    ASSERT_EQ(m.K(), 3);
    EXPECT_NEAR(m.centroid_angles(3).yaw, 0.4, 1e-12);
    const EvalReport r = holdout_protocol(ds, {2}, e);
    EXPECT_EQ(r.K, 3);
    EXPECT_EQ(r.meta.at("cluster_source"), "fixed");
}

TEST(RunProtocol, CrossDatasetWithTargeting) {
    const Dataset source = fixture(3, 30, 1);
    SynthConfig narrow;
    narrow.image_w = 16;
    narrow.image_h = 10;
    narrow.n_subjects = 2;
    narrow.samples_per_subject = 20;
    narrow.head_yaw_range = 15;
    narrow.seed = 2;
    const Dataset target = generate_dataset(narrow);
    const EvalReport plain = cross_dataset_protocol(source, target, quick_experiment());
    const EvalReport targeted = cross_dataset_protocol(source, target, quick_experiment(), TargetingSpec{});
    EXPECT_EQ(plain.records.size(), target.size());
    EXPECT_EQ(targeted.records.size(), target.size());
    EXPECT_NE(plain.meta, targeted.meta);
}

TEST(Ablation, FourCellsInTableOrder) {
    const Dataset ds = fixture(3, 16);
    ProtocolSpec spec;
    spec.test_subjects = {2};
    const AblationGrid g = ablation_grid(ds, quick_experiment(), spec);
    // single-head cells still break errors down by cluster
    for (const auto& c : g.cells) EXPECT_EQ(c.K, 2);
    EXPECT_EQ(g.cells[0].meta.at("branched"), "false");
    EXPECT_EQ(g.cells[2].meta.at("branched"), "false");
    EXPECT_EQ(g.cells[0].meta.at("head_pose_inputs"), "false");
    EXPECT_EQ(g.cells[3].meta.at("head_pose_inputs"), "true");
    EXPECT_EQ(g.cells[1].meta.at("branched"), "true");
    const std::string csv = ablation_table_csv(g);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "input,fc7_8,cluster_1,cluster_2,overall");
    EXPECT_NE(csv.find("\neye+pose,branched,"), std::string::npos);
}

TEST(ExperimentConfig, HashTracksSettings) {
    ExperimentConfig a = quick_experiment(), b = a;
    EXPECT_EQ(a.hash(), b.hash());
    b.train.learning_rate *= 2;
    EXPECT_NE(a.hash(), b.hash());
}
