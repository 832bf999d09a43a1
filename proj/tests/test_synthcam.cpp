#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "gazenet/errors.hpp"
#include "gazenet/synthcam.hpp"
#include "oracles/direction.hpp"
#include "oracles/visibility_mc.hpp"

using namespace gazenet;

namespace {

// Continuous-coordinate centroid of pixels darker than `thresh`.
std::pair<double, double> dark_centroid(const EyeImage& img, int thresh) {
    double sx = 0, sy = 0, n = 0;
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            if (img.at(r, c) < thresh) {
                sx += c + 0.5;
                sy += r + 0.5;
                n += 1;
            }
    return {sx / n, sy / n};
}

SynthConfig zero_ranges() {
    SynthConfig c;
    c.head_pitch_range = c.head_yaw_range = c.eye_pitch_range = c.eye_yaw_range = 0.0;
    c.illum_min = c.illum_max = 1.0;
    return c;
}

}  // namespace

TEST(SamplePosePair, ZeroRangesGiveZeroPoses) {
    const SynthConfig c = zero_ranges();
    for (std::uint32_t i = 0; i < 50; ++i) {
        const PosePair p = sample_pose_pair(c, 0, i, 0);
        EXPECT_EQ(p.head, (Angles{0, 0}));
        EXPECT_EQ(p.eye_in_head, (Angles{0, 0}));
    }
}

TEST(SamplePosePair, DefaultRangesAreCoveredUniformly) {
    SynthConfig c;
    double lo = 1e9, hi = -1e9, sum = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const PosePair p = sample_pose_pair(c, i % 10, static_cast<std::uint32_t>(i / 10), 0);
        const double y = rad2deg(p.head.yaw);
        lo = std::min(lo, y);
        hi = std::max(hi, y);
        sum += y;
        ASSERT_LE(std::abs(rad2deg(p.eye_in_head.pitch)), 25.0);
        ASSERT_LE(std::abs(rad2deg(p.eye_in_head.yaw)), 35.0);
        ASSERT_LE(std::abs(rad2deg(p.head.pitch)), 60.0);
    }
    EXPECT_GE(lo, -60.0);
    EXPECT_LE(lo, -58.0);
    EXPECT_GE(hi, 58.0);
    EXPECT_LE(hi, 60.0);
    EXPECT_NEAR(sum / n, 0.0, 0.5);
}

TEST(SamplePosePair, Deterministic) {
    SynthConfig c;
    c.seed = 99;
    const PosePair a = sample_pose_pair(c, 3, 17, 2), b = sample_pose_pair(c, 3, 17, 2);
    EXPECT_EQ(a.head, b.head);
    EXPECT_EQ(a.eye_in_head, b.eye_in_head);
    const PosePair d = sample_pose_pair(c, 3, 17, 3);
    EXPECT_NE(a.head, d.head);
}

TEST(PupilVisibility, Examples) {
    EXPECT_TRUE(is_pupil_visible({0, 0}, {0, 0}, 75));
    const double composite = oracle::angle_deg(oracle::composed_gaze(0, deg2rad(60), 0, deg2rad(35)), {0, 0, -1});
    EXPECT_NEAR(composite, 95.0, 1e-9);
    EXPECT_FALSE(is_pupil_visible({0, deg2rad(60)}, {0, deg2rad(35)}, 75));
    EXPECT_TRUE(is_pupil_visible({0, deg2rad(60)}, {0, deg2rad(-35)}, 75));
}

TEST(RenderEye, CentredPupilForFrontalPose) {
    SynthConfig c;
    const SubjectParams s;
    const EyeImage img = render_eye(s, {0, 0}, {0, 0}, 1.0, c);
    auto [x, y] = dark_centroid(img, 40);
    EXPECT_NEAR(x, c.image_w / 2.0, 0.5);
    EXPECT_NEAR(y, c.image_h / 2.0, 0.5);
}

TEST(RenderEye, IlluminationScalesLinearly) {
    SynthConfig c;
    const SubjectParams s;
    const double m1 = mean_intensity(render_eye(s, {0.1, -0.2}, {0.05, 0.1}, 1.0, c));
    const double m2 = mean_intensity(render_eye(s, {0.1, -0.2}, {0.05, 0.1}, 0.5, c));
    EXPECT_NEAR(m2, m1 / 2.0, 0.5);
}

TEST(RenderEye, OppositeEyeYawsMirrorThePupil) {
    SynthConfig c;
    const SubjectParams s;
    auto [xl, yl] = dark_centroid(render_eye(s, {0, 0}, {0, deg2rad(20)}, 1.0, c), 40);
    auto [xr, yr] = dark_centroid(render_eye(s, {0, 0}, {0, deg2rad(-20)}, 1.0, c), 40);
    EXPECT_NEAR(xl - c.image_w / 2.0, c.image_w / 2.0 - xr, 1.0);
    EXPECT_NEAR(yl, yr, 1.0);
    EXPECT_GT(std::abs(xl - xr), 4.0);
}

TEST(RenderEye, OpeningNarrowsWithHeadYaw) {
    SynthConfig c;
    const SubjectParams s;
    auto bright = [](const EyeImage& img) {
        return std::count_if(img.data.begin(), img.data.end(), [](std::uint8_t v) { return v > 200; });
    };
    const auto frontal = bright(render_eye(s, {0, 0}, {0, 0}, 1.0, c));
    const auto turned = bright(render_eye(s, {0, deg2rad(50)}, {0, 0}, 1.0, c));
    EXPECT_LT(turned, frontal);
}

TEST(RenderEye, LidLowersWhenLookingDown) {
    SynthConfig c;
    const SubjectParams s;
    // first row holding any sclera or iris pixel
    auto opening_top = [&](const EyeImage& img) {
        for (int r = 0; r < c.image_h; ++r)
            for (int col = 0; col < c.image_w; ++col)
                if (img.at(r, col) > 200 || img.at(r, col) < 120) return r;
        return c.image_h;
    };
    EXPECT_GT(opening_top(render_eye(s, {0, 0}, {deg2rad(-25), 0}, 1.0, c)),
              opening_top(render_eye(s, {0, 0}, {0, 0}, 1.0, c)));
    EXPECT_EQ(opening_top(render_eye(s, {0, 0}, {deg2rad(10), 0}, 1.0, c)),
              opening_top(render_eye(s, {0, 0}, {0, 0}, 1.0, c)));
}

TEST(RenderEye, RejectsInvisiblePupil) {
    SynthConfig c;
    EXPECT_THROW(render_eye(SubjectParams{}, {0, deg2rad(60)}, {0, deg2rad(35)}, 1.0, c), RejectionError);
}

TEST(RenderEye, ColorHasThreeChannels) {
    SynthConfig c;
    c.color = true;
    const EyeImage img = render_eye(make_subject(c, 2), {0, 0}, {0, 0}, 1.0, c);
    EXPECT_EQ(img.channels, 3);
    EXPECT_TRUE(img.valid());
}

TEST(GenerateDataset, ZeroRangesGiveIdenticalFrontalSamples) {
    SynthConfig c = zero_ranges();
    c.n_subjects = 1;
    c.samples_per_subject = 10;
    const Dataset ds = generate_dataset(c);
    ASSERT_EQ(ds.size(), 10u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_EQ(ds.samples[i].gaze, (Angles{0, 0}));
        EXPECT_EQ(ds.images[i], ds.images[0]);
    }
}

TEST(GenerateDataset, SamplesVisibleAndLabelsConsistent) {
    SynthConfig c;
    c.image_w = 32;
    c.image_h = 20;
    c.n_subjects = 4;
    c.samples_per_subject = 250;
    const Dataset ds = generate_dataset(c);
    ASSERT_EQ(ds.size(), 1000u);
    EXPECT_NO_THROW(ds.validate());
    for (const auto& s : ds.samples) {
        ASSERT_TRUE(s.eye_in_head.has_value());
        EXPECT_TRUE(is_pupil_visible(s.head, *s.eye_in_head, c.visibility_limit_deg));
        EXPECT_NEAR(angular_error(s.gaze, compose_gaze(s.head, *s.eye_in_head)), 0.0, 1e-9);
    }
}

TEST(GenerateDataset, DeterministicAndThreadInvariant) {
    SynthConfig c;
    c.image_w = 32;
    c.image_h = 20;
    c.n_subjects = 3;
    c.samples_per_subject = 100;
    c.noise_sigma = 3.0;
    const Dataset a = generate_dataset(c, nullptr, 1);
    const Dataset b = generate_dataset(c, nullptr, 4);
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_EQ(a.images, b.images);
    c.seed = 2;
    const Dataset d = generate_dataset(c);
    EXPECT_NE(a.samples, d.samples);
}

TEST(GenerateDataset, RejectionRateMatchesMonteCarlo) {
    SynthConfig c;
    c.image_w = 16;
    c.image_h = 10;
    c.n_subjects = 10;
    c.samples_per_subject = 1000;
    GenerationLog log;
    generate_dataset(c, &log);
    const double mc = oracle::invisible_fraction(60, 60, 25, 35, 75, 400000, 1234);
    EXPECT_NEAR(log.rejection_rate(), mc, 0.02);
    EXPECT_GT(mc, 0.01);
}

TEST(GenerateDataset, PathologicalConfigIsRejected) {
    SynthConfig c;
    c.image_w = 16;
    c.image_h = 10;
    c.n_subjects = 1;
    c.samples_per_subject = 5;
    c.visibility_limit_deg = 0.5;
    EXPECT_THROW(generate_dataset(c), ConfigError);
}

TEST(SynthConfig, Validation) {
    SynthConfig c;
    c.visibility_limit_deg = 95;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SynthConfig{};
    c.image_w = 8;
    EXPECT_THROW(c.validate(), ConfigError);
    c = SynthConfig{};
    c.head_yaw_range = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(SubjectParams, Validation) {
    SubjectParams s;
    s.pupil_radius = s.iris_radius + 1;
    EXPECT_THROW(s.validate(), ConfigError);
    SynthConfig c;
    for (int i = 0; i < 20; ++i) EXPECT_NO_THROW(make_subject(c, i).validate());
}

TEST(HistEqualize, ConstantImageUnchanged) {
    const EyeImage g(8, 4, 1, 77), rgb(8, 4, 3, 140);
    EXPECT_EQ(hist_equalize_y(g), g);
    EXPECT_EQ(hist_equalize_y(rgb), rgb);
}

TEST(HistEqualize, TwoLevelImageUnchanged) {
    EyeImage g(4, 4, 1);
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] = i % 2 ? 255 : 0;
    EXPECT_EQ(hist_equalize_y(g), g);
}

TEST(HistEqualize, RampGivesUniformHistogram) {
    EyeImage g(16, 16, 1);
    for (int i = 0; i < 256; ++i) g.data[i] = static_cast<std::uint8_t>((i * 37) % 256);
    const EyeImage out = hist_equalize_y(g);
    std::vector<int> hist(256, 0);
    for (auto v : out.data) ++hist[v];
    for (int h : hist) EXPECT_EQ(h, 1);
}

TEST(HistEqualize, StretchesLowContrastByHandCdf) {
    // levels 100 x4, 110 x4, 120 x8: cdf 0.25, 0.5, 1.0; cdf_min 0.25
    EyeImage g(16, 1, 1);
    for (int i = 0; i < 16; ++i) g.data[i] = i < 4 ? 100 : (i < 8 ? 110 : 120);
    const EyeImage out = hist_equalize_y(g);
    EXPECT_EQ(out.data[0], 0);
    EXPECT_EQ(out.data[4], 85);  // round(255 * 0.25 / 0.75)
    EXPECT_EQ(out.data[8], 255);
}

TEST(HistEqualize, ColorKeepsDimsAndRange) {
    SynthConfig c;
    c.color = true;
    const EyeImage img = render_eye(make_subject(c, 1), {0.2, 0.3}, {0.1, -0.2}, 0.7, c);
    const EyeImage out = hist_equalize_y(img);
    EXPECT_EQ(out.width, img.width);
    EXPECT_EQ(out.height, img.height);
    EXPECT_EQ(out.channels, 3);
    EXPECT_GT(mean_intensity(out), 0.0);
}

TEST(ConfigHash, SensitiveToFields) {
    SynthConfig a, b;
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.eye_yaw_range = 34;
    EXPECT_NE(config_hash(a), config_hash(b));
}
