#include "gazenet/synthcam.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <thread>

#include "gazenet/errors.hpp"
#include "gazenet/hash.hpp"
#include "gazenet/rng.hpp"

namespace gazenet {

namespace {

constexpr int kSuperSample = 3;
// Nominal pupil travel per unit tan(eye angle), as a fraction of image width.
constexpr double kEyeballRadiusFrac = 0.32;
constexpr std::uint32_t kMaxAttemptsPerSample = 100000;

std::uint8_t to_u8(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

}  // namespace

void SynthConfig::validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("synth: " + m); };
    for (double r : {head_pitch_range, head_yaw_range, eye_pitch_range, eye_yaw_range})
        if (!(r >= 0.0)) bad("angle ranges must be non-negative");
    if (head_pitch_range + eye_pitch_range > 90.0) bad("head + eye pitch range exceeds 90 degrees");
    if (head_yaw_range + eye_yaw_range >= 180.0) bad("head + eye yaw range must stay below 180 degrees");
    if (!(visibility_limit_deg > 0.0 && visibility_limit_deg <= 90.0)) bad("visibility_limit_deg must be in (0, 90]");
    if (image_w < 16 || image_h < 10) bad("image must be at least 16x10");
    if (n_subjects < 1) bad("n_subjects must be >= 1");
    if (samples_per_subject < 0) bad("samples_per_subject must be >= 0");
    if (!(illum_min > 0.0 && illum_min <= illum_max)) bad("illumination range must be positive and ordered");
    if (!(noise_sigma >= 0.0)) bad("noise_sigma must be >= 0");
    if (first_subject < 0) bad("first_subject must be >= 0");
}

void SubjectParams::validate() const {
    if (!(pupil_radius > 0.0 && pupil_radius < iris_radius))
        throw ConfigError("subject: pupil radius must be positive and below iris radius");
    for (double f : {eye_opening_width, eye_opening_height})
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError("subject: opening fractions must be in (0, 1]");
    for (const auto* tone : {&skin_tone, &sclera_tone, &iris_tone})
        for (double t : *tone)
            if (!(t >= 0.0 && t <= 255.0)) throw ConfigError("subject: tones must be in [0, 255]");
    if (!(pupil_tone >= 0.0 && pupil_tone <= 255.0)) throw ConfigError("subject: tones must be in [0, 255]");
}

SubjectParams make_subject(const SynthConfig& cfg, int subject) {
    RngStream rng(cfg.seed, streams::kSubject, static_cast<std::uint32_t>(subject));
    SubjectParams p;
    const double h = cfg.image_h;
    p.iris_radius = rng.uniform(0.17, 0.23) * h;
    p.pupil_radius = p.iris_radius * rng.uniform(0.35, 0.5);
    p.eye_opening_width = rng.uniform(0.70, 0.86);
    p.eye_opening_height = rng.uniform(0.46, 0.62);
    p.eyeball_scale = rng.uniform(0.85, 1.15);
    const double skin = rng.uniform(110.0, 205.0);
    const double sclera = rng.uniform(205.0, 240.0);
    const double iris = rng.uniform(35.0, 115.0);
    if (cfg.color) {
        const double warm = rng.uniform(0.8, 0.95);
        p.skin_tone = {skin, skin * warm, skin * warm * warm};
        p.sclera_tone = {sclera, sclera, sclera * 0.97};
        const double hue = rng.uniform(0.0, 1.0);
        p.iris_tone = {iris * (0.6 + 0.6 * hue), iris * (0.9 + 0.2 * hue), iris * (1.2 - 0.6 * hue)};
        for (auto& t : p.iris_tone) t = std::min(t, 255.0);
    } else {
        p.skin_tone = {skin, skin, skin};
        p.sclera_tone = {sclera, sclera, sclera};
        p.iris_tone = {iris, iris, iris};
    }
    p.pupil_tone = rng.uniform(5.0, 20.0);
    p.eyelid_coupling = rng.uniform(0.3, 0.7);
    return p;
}

PosePair sample_pose_pair(const SynthConfig& cfg, int subject, std::uint32_t index,
                          std::uint32_t attempt) {
    // one Philox block per attempt; four 32-bit lanes would lose precision, so
    // two blocks give four 53-bit uniforms
    const auto key = cfg.seed;
    const auto s = static_cast<std::uint32_t>(subject);
    const std::uint32_t counter = attempt * 2u;
    auto u53 = [](std::uint32_t hi, std::uint32_t lo) {
        return static_cast<double>((static_cast<std::uint64_t>(hi) << 32 | lo) >> 11) * 0x1.0p-53;
    };
    const auto b0 = Philox::generate(key, {streams::kPose ^ (s << 8), index, counter, 0});
    const auto b1 = Philox::generate(key, {streams::kPose ^ (s << 8), index, counter + 1u, 0});
    auto sym = [](double u, double range_deg) { return deg2rad((2.0 * u - 1.0) * range_deg); };
    PosePair p;
    p.head.pitch = sym(u53(b0[0], b0[1]), cfg.head_pitch_range);
    p.head.yaw = sym(u53(b0[2], b0[3]), cfg.head_yaw_range);
    p.eye_in_head.pitch = sym(u53(b1[0], b1[1]), cfg.eye_pitch_range);
    p.eye_in_head.yaw = sym(u53(b1[2], b1[3]), cfg.eye_yaw_range);
    return p;
}

bool is_pupil_visible(const Angles& head, const Angles& eye_in_head, double limit_deg) {
    return angular_error(compose_gaze(head, eye_in_head), Angles{0.0, 0.0}) <= limit_deg;
}

EyeImage render_eye(const SubjectParams& subject, const Angles& head, const Angles& eye_in_head,
                    double illum, const SynthConfig& cfg, std::uint64_t noise_key) {
    if (!is_pupil_visible(head, eye_in_head, cfg.visibility_limit_deg))
        throw RejectionError("render_eye: pupil not visible for this head/eye rotation");
    const int w = cfg.image_w, h = cfg.image_h, nch = cfg.color ? 3 : 1;
    const double cx = w / 2.0, cy = h / 2.0;

    // eye opening, foreshortened by the head rotation
    const double a = 0.5 * subject.eye_opening_width * w * std::cos(head.yaw);
    const double b = 0.5 * subject.eye_opening_height * h * std::cos(head.pitch);

    // pupil centre from the eye-in-head rotation, clamped into the opening
    const double travel = kEyeballRadiusFrac * w * subject.eyeball_scale;
    double px = -travel * std::tan(eye_in_head.yaw) * std::cos(head.yaw);
    double py = -travel * std::tan(eye_in_head.pitch) * std::cos(head.pitch);
    const double reach = (px * px) / (a * a) + (py * py) / (b * b);
    if (reach > 1.0) {
        const double s = 1.0 / std::sqrt(reach);
        px *= s;
        py *= s;
    }
    px += cx;
    py += cy;

    // iris/pupil foreshortening follows the gaze direction relative to the camera
    const UnitVec3 g = angles_to_vec(compose_gaze(head, eye_in_head));
    const double fx = std::sqrt(std::max(0.0, 1.0 - g.x * g.x));
    const double fy = std::sqrt(std::max(0.0, 1.0 - g.y * g.y));
    const double irx = subject.iris_radius * fx, iry = subject.iris_radius * fy;
    const double prx = subject.pupil_radius * fx, pry = subject.pupil_radius * fy;

    // upper lid follows the eye downward
    const double lid_drop = subject.eyelid_coupling * 2.0 * b * std::sin(std::max(0.0, -eye_in_head.pitch));
    const double lid_y = cy - b + lid_drop;

    const double shade_x = 0.25 * std::sin(head.yaw);
    const double shade_y = 0.15 * std::sin(head.pitch);

    EyeImage img(w, h, nch);
    const double inv_ss = 1.0 / (kSuperSample * kSuperSample);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            std::array<double, 3> acc{0, 0, 0};
            for (int sy = 0; sy < kSuperSample; ++sy) {
                const double y = r + (sy + 0.5) / kSuperSample;
                for (int sx = 0; sx < kSuperSample; ++sx) {
                    const double x = c + (sx + 0.5) / kSuperSample;
                    const double ox = (x - cx) / a, oy = (y - cy) / b;
                    const bool in_opening = ox * ox + oy * oy <= 1.0 && y >= lid_y;
                    std::array<double, 3> tone;
                    if (!in_opening) {
                        const double shade = 1.0 + shade_x * (x - cx) / cx + shade_y * (y - cy) / cy;
                        for (int k = 0; k < 3; ++k) tone[k] = subject.skin_tone[k] * shade;
                    } else {
                        const double dx = x - px, dy = y - py;
                        const double pr = (dx * dx) / (prx * prx) + (dy * dy) / (pry * pry);
                        const double ir = (dx * dx) / (irx * irx) + (dy * dy) / (iry * iry);
                        if (pr <= 1.0)
                            tone = {subject.pupil_tone, subject.pupil_tone, subject.pupil_tone};
                        else if (ir <= 1.0)
                            tone = subject.iris_tone;
                        else
                            tone = subject.sclera_tone;
                    }
                    for (int k = 0; k < 3; ++k) acc[k] += tone[k];
                }
            }
            for (int k = 0; k < nch; ++k) {
                double v = acc[static_cast<std::size_t>(k)] * inv_ss * illum;
                if (cfg.noise_sigma > 0.0) {
                    RngStream noise(noise_key, streams::kNoise,
                                    static_cast<std::uint32_t>((r * w + c) * nch + k));
                    v += cfg.noise_sigma * noise.normal();
                }
                img.at(r, c, k) = to_u8(v);
            }
        }
    }
    return img;
}

Dataset generate_dataset(const SynthConfig& cfg, GenerationLog* log, int threads) {
    cfg.validate();
    const std::size_t per = static_cast<std::size_t>(cfg.samples_per_subject);
    const std::size_t total = per * static_cast<std::size_t>(cfg.n_subjects);

    std::vector<SubjectParams> subjects;
    for (int s = 0; s < cfg.n_subjects; ++s) subjects.push_back(make_subject(cfg, cfg.first_subject + s));

    Dataset ds;
    ds.manifest.width = cfg.image_w;
    ds.manifest.height = cfg.image_h;
    ds.manifest.channels = cfg.color ? 3 : 1;
    ds.manifest.generator_hash = config_hash(cfg);
    ds.samples.resize(total);
    ds.images.resize(total);
    std::vector<std::uint32_t> attempts(total, 0);

    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t n = begin; n < end; ++n) {
            const int subject = cfg.first_subject + static_cast<int>(n / per);
            const auto index = static_cast<std::uint32_t>(n % per);
            PosePair pose;
            std::uint32_t attempt = 0;
            for (;; ++attempt) {
                if (attempt >= kMaxAttemptsPerSample)
                    throw ConfigError("synth: visibility rejection never accepted a pose; check ranges");
                pose = sample_pose_pair(cfg, subject, index, attempt);
                if (is_pupil_visible(pose.head, pose.eye_in_head, cfg.visibility_limit_deg)) break;
            }
            attempts[n] = attempt + 1;
            const double illum =
                cfg.illum_min + (cfg.illum_max - cfg.illum_min) *
                                    Philox::uniform(cfg.seed, streams::kIllum, static_cast<std::uint32_t>(subject), index);
            const std::uint64_t noise_key = cfg.seed ^ (static_cast<std::uint64_t>(subject) << 40) ^
                                            (static_cast<std::uint64_t>(index) << 8);

            char id[32];
            std::snprintf(id, sizeof id, "s%03d_%06u", subject, index);
            Sample& smp = ds.samples[n];
            smp.id = id;
            smp.subject = subject;
            smp.side = EyeSide::Left;
            smp.head = pose.head;
            smp.eye_in_head = pose.eye_in_head;
            smp.gaze = compose_gaze(pose.head, pose.eye_in_head);
            smp.illum = illum;
            smp.image_path = std::string("images/") + id + (cfg.color ? ".ppm" : ".pgm");
            ds.images[n] = render_eye(subjects[static_cast<std::size_t>(subject - cfg.first_subject)], pose.head,
                                      pose.eye_in_head, illum, cfg, noise_key);
        }
    };

    const int nthreads = std::max(1, std::min<int>(threads, static_cast<int>(total / 64 + 1)));
    if (nthreads == 1) {
        work(0, total);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nthreads));
        const std::size_t chunk = (total + nthreads - 1) / nthreads;
        for (int t = 0; t < nthreads; ++t) {
            const std::size_t b = std::min(total, chunk * t), e = std::min(total, b + chunk);
            pool.emplace_back([&, b, e, t] {
                try {
                    work(b, e);
                } catch (...) {
                    errors[static_cast<std::size_t>(t)] = std::current_exception();
                }
            });
        }
        for (auto& th : pool) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    GenerationLog local;
    for (auto a : attempts) local.attempts += a;
    local.rejected = local.attempts - total;
    if (local.rejection_rate() > 0.99)
        throw ConfigError("synth: rejection rate " + std::to_string(local.rejection_rate()) +
                          " exceeds 99%; the pose ranges are mostly invisible");
    if (log) *log = local;
    return ds;
}

EyeImage hist_equalize_y(const EyeImage& img) {
    if (!img.valid()) throw InvalidInput("hist_equalize_y: malformed image");
    const std::size_t npix = static_cast<std::size_t>(img.width) * img.height;
    std::vector<double> y(npix), cb(npix), cr(npix);
    for (std::size_t i = 0; i < npix; ++i) {
        if (img.channels == 1) {
            y[i] = img.data[i];
        } else {
            const double r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
            y[i] = 0.299 * r + 0.587 * g + 0.114 * b;
            cb[i] = 128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b;
            cr[i] = 128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b;
        }
    }
    std::array<std::size_t, 256> hist{};
    std::vector<int> level(npix);
    for (std::size_t i = 0; i < npix; ++i) {
        level[i] = static_cast<int>(std::lround(std::clamp(y[i], 0.0, 255.0)));
        ++hist[static_cast<std::size_t>(level[i])];
    }
    std::array<double, 256> cdf{};
    std::size_t run = 0;
    double cdf_min = -1.0;
    for (int v = 0; v < 256; ++v) {
        run += hist[static_cast<std::size_t>(v)];
        cdf[static_cast<std::size_t>(v)] = static_cast<double>(run) / static_cast<double>(npix);
        if (cdf_min < 0.0 && hist[static_cast<std::size_t>(v)] > 0) cdf_min = cdf[static_cast<std::size_t>(v)];
    }
    if (cdf_min >= 1.0) return img;  // constant luma

    std::array<int, 256> map{};
    for (int v = 0; v < 256; ++v)
        map[static_cast<std::size_t>(v)] = static_cast<int>(
            std::lround(std::max(0.0, 255.0 * (cdf[static_cast<std::size_t>(v)] - cdf_min) / (1.0 - cdf_min))));

    EyeImage out(img.width, img.height, img.channels);
    for (std::size_t i = 0; i < npix; ++i) {
        const int mapped = map[static_cast<std::size_t>(level[i])];
        if (img.channels == 1) {
            out.data[i] = static_cast<std::uint8_t>(mapped);
            continue;
        }
        // shift luma by the remap delta so an identity map reproduces the input
        const double yy = y[i] + (mapped - level[i]);
        out.data[3 * i] = to_u8(yy + 1.402 * (cr[i] - 128.0));
        out.data[3 * i + 1] = to_u8(yy - 0.344136 * (cb[i] - 128.0) - 0.714136 * (cr[i] - 128.0));
        out.data[3 * i + 2] = to_u8(yy + 1.772 * (cb[i] - 128.0));
    }
    return out;
}

std::string config_hash(const SynthConfig& cfg) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%d|%d|%llu|%d|%.17g|%.17g|%.17g|%d",
                  cfg.head_pitch_range, cfg.head_yaw_range, cfg.eye_pitch_range, cfg.eye_yaw_range,
                  cfg.visibility_limit_deg, cfg.image_w, cfg.image_h, cfg.n_subjects, cfg.samples_per_subject,
                  static_cast<unsigned long long>(cfg.seed), cfg.color ? 1 : 0, cfg.illum_min, cfg.illum_max,
                  cfg.noise_sigma, cfg.first_subject);
    return hex64(fnv1a64(buf));
}

}  // namespace gazenet
