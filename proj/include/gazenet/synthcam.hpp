#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "gazenet/dataset.hpp"
#include "gazenet/geometry.hpp"
#include "gazenet/image.hpp"

namespace gazenet {

/// Procedural generator settings. Ranges are symmetric half-widths in degrees.
struct SynthConfig {
    double head_pitch_range = 60.0;
    double head_yaw_range = 60.0;
    double eye_pitch_range = 25.0;
    double eye_yaw_range = 35.0;
    double visibility_limit_deg = 75.0;
    int image_w = 64;
    int image_h = 40;
    int n_subjects = 10;
    int samples_per_subject = 100;
    std::uint64_t seed = 1;
    bool color = false;
    double illum_min = 0.5;
    double illum_max = 1.5;
    double noise_sigma = 0.0;  // per-pixel gaussian noise, gray levels
    int first_subject = 0;     // subject ids start here; lets disjoint cohorts share a seed

    /// Throws ConfigError when an invariant is violated.
    void validate() const;

    friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

/// Appearance parameters for one procedural subject.
struct SubjectParams {
    double iris_radius = 8.0;   // px
    double pupil_radius = 3.5;  // px
    double eye_opening_width = 0.78;   // fraction of image width
    double eye_opening_height = 0.52;  // fraction of image height
    double eyeball_scale = 1.0;  // pupil travel per unit tan(angle), relative to nominal
    std::array<double, 3> skin_tone{170, 170, 170};
    std::array<double, 3> sclera_tone{225, 225, 225};
    std::array<double, 3> iris_tone{80, 80, 80};
    double pupil_tone = 12.0;
    double eyelid_coupling = 0.5;

    void validate() const;
};

struct PosePair {
    Angles head;
    Angles eye_in_head;
};

/// Deterministic subject appearance for (cfg.seed, subject).
SubjectParams make_subject(const SynthConfig& cfg, int subject);

/// Independent uniform draws of head pose and eye-in-head rotation for the
/// counter (subject, index, attempt).
PosePair sample_pose_pair(const SynthConfig& cfg, int subject, std::uint32_t index,
                          std::uint32_t attempt);

/// True iff the composed gaze lies within limit_deg of the camera axis.
bool is_pupil_visible(const Angles& head, const Angles& eye_in_head, double limit_deg);

/// Rasterizes one eye. Throws RejectionError if the pupil would be invisible.
EyeImage render_eye(const SubjectParams& subject, const Angles& head, const Angles& eye_in_head,
                    double illum, const SynthConfig& cfg, std::uint64_t noise_key = 0);

struct GenerationLog {
    std::uint64_t attempts = 0;
    std::uint64_t rejected = 0;
    double rejection_rate() const {
        return attempts == 0 ? 0.0 : static_cast<double>(rejected) / static_cast<double>(attempts);
    }
};

/// Builds a labelled in-memory dataset. Output is byte-identical for any
/// thread count. Throws ConfigError if more than 99% of draws are rejected.
Dataset generate_dataset(const SynthConfig& cfg, GenerationLog* log = nullptr, int threads = 1);

/// Histogram equalization of luma. 3-channel images go through BT.601
/// full-range YCbCr; 1-channel images are equalized directly.
EyeImage hist_equalize_y(const EyeImage& img);

/// Hex digest identifying a generator configuration.
std::string config_hash(const SynthConfig& cfg);

}  // namespace gazenet
