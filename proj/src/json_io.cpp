#include "gazenet/json_io.hpp"

#include <array>
#include <initializer_list>
#include <string_view>

#include "gazenet/errors.hpp"

namespace gazenet {

namespace {

enum class Strict { Data, Config };

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const char* what, Strict kind) {
    if (!j.is_object()) {
        const std::string msg = std::string(what) + ": expected an object";
        if (kind == Strict::Data) throw FormatError(msg);
        throw ConfigError(msg);
    }
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (auto a : allowed) ok = ok || a == key;
        if (!ok) {
            const std::string msg = std::string(what) + ": unknown key '" + key + "'";
            if (kind == Strict::Data) throw FormatError(msg);
            throw ConfigError(msg);
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

template <typename E, std::size_t N>
E parse_enum(const json& j, const std::array<std::pair<std::string_view, E>, N>& table, const char* what) {
    const auto s = j.get<std::string>();
    for (const auto& [name, value] : table)
        if (name == s) return value;
    throw ConfigError(std::string(what) + ": unknown value '" + s + "'");
}

template <typename E, std::size_t N>
std::string enum_name(E v, const std::array<std::pair<std::string_view, E>, N>& table) {
    for (const auto& [name, value] : table)
        if (value == v) return std::string(name);
    return "?";
}

constexpr std::array<std::pair<std::string_view, OptimizerKind>, 2> kOptimizers{{
    {"adam", OptimizerKind::Adam}, {"sgd", OptimizerKind::SgdMomentum}}};
constexpr std::array<std::pair<std::string_view, LossKind>, 2> kLosses{{
    {"mse", LossKind::MseRadians}, {"angular", LossKind::Angular}}};
constexpr std::array<std::pair<std::string_view, LrSchedule>, 2> kSchedules{{
    {"constant", LrSchedule::Constant}, {"step", LrSchedule::StepDecay}}};
constexpr std::array<std::pair<std::string_view, ProtocolSpec::Kind>, 4> kProtocols{{
    {"holdout", ProtocolSpec::Kind::Holdout},
    {"loso", ProtocolSpec::Kind::Loso},
    {"kfold", ProtocolSpec::Kind::KFold},
    {"person_specific", ProtocolSpec::Kind::PersonSpecific}}};

json aggregates(const std::map<int, Aggregate>& m) {
    json out = json::object();
    for (const auto& [k, a] : m) out[std::to_string(k)] = a;
    return out;
}

}  // namespace

void to_json(json& j, const Angles& a) { j = json{{"pitch", a.pitch}, {"yaw", a.yaw}}; }

void from_json(const json& j, Angles& a) {
    check_keys(j, {"pitch", "yaw"}, "angles", Strict::Data);
    a.pitch = j.at("pitch").get<double>();
    a.yaw = j.at("yaw").get<double>();
}

void to_json(json& j, const UnitVec3& v) { j = json::array({v.x, v.y, v.z}); }

void from_json(const json& j, UnitVec3& v) {
    if (!j.is_array() || j.size() != 3) throw FormatError("unit vector: expected [x, y, z]");
    v = UnitVec3{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void to_json(json& j, const Sample& s) {
    j = json{{"id", s.id},
             {"subject", s.subject},
             {"side", s.side == EyeSide::Left ? "L" : "R"},
             {"head", s.head},
             {"gaze", s.gaze},
             {"image", s.image_path}};
    if (s.cluster) j["cluster"] = *s.cluster;
    if (s.illum) j["illum"] = *s.illum;
    if (s.eye_in_head) j["eye_in_head"] = *s.eye_in_head;
    if (s.mirrored) j["mirrored"] = true;
}

void from_json(const json& j, Sample& s) {
    check_keys(j, {"id", "subject", "side", "head", "gaze", "image", "cluster", "illum", "eye_in_head", "mirrored"},
               "sample", Strict::Data);
    s = Sample{};
    s.id = j.at("id").get<std::string>();
    s.subject = j.at("subject").get<int>();
    const auto side = j.at("side").get<std::string>();
    if (side == "L")
        s.side = EyeSide::Left;
    else if (side == "R")
        s.side = EyeSide::Right;
    else
        throw FormatError("sample " + s.id + ": side must be L or R");
    s.head = j.at("head").get<Angles>();
    s.gaze = j.at("gaze").get<Angles>();
    s.image_path = j.at("image").get<std::string>();
    if (j.contains("cluster")) s.cluster = j["cluster"].get<int>();
    if (j.contains("illum")) s.illum = j["illum"].get<double>();
    if (j.contains("eye_in_head")) s.eye_in_head = j["eye_in_head"].get<Angles>();
    read_opt(j, "mirrored", s.mirrored);
}

void to_json(json& j, const DatasetManifest& m) {
    j = json{{"version", m.version},
             {"width", m.width},
             {"height", m.height},
             {"channels", m.channels},
             {"generator_hash", m.generator_hash}};
    if (m.resized_from) j["resized_from"] = *m.resized_from;
}

void from_json(const json& j, DatasetManifest& m) {
    check_keys(j, {"version", "width", "height", "channels", "generator_hash", "resized_from", "count"}, "manifest",
               Strict::Data);
    m.version = j.at("version").get<std::string>();
    m.width = j.at("width").get<int>();
    m.height = j.at("height").get<int>();
    m.channels = j.at("channels").get<int>();
    read_opt(j, "generator_hash", m.generator_hash);
    if (j.contains("resized_from")) m.resized_from = j["resized_from"].get<std::string>();
}

void to_json(json& j, const ClusterModel& m) {
    json centers = json::array();
    json degs = json::array();
    for (int k = 1; k <= m.K(); ++k) {
        centers.push_back(m.centroids[k - 1]);
        const Angles a = m.centroid_angles(k);
        degs.push_back(json::array({rad2deg(a.pitch), rad2deg(a.yaw)}));
    }
    j = json{{"version", m.version}, {"K", m.K()}, {"centroids", centers}, {"centroids_deg", degs}};
}

void from_json(const json& j, ClusterModel& m) {
    check_keys(j, {"version", "K", "centroids", "centroids_deg"}, "cluster model", Strict::Data);
    m.version = j.at("version").get<std::string>();
    if (m.version != kClusterModelVersion) throw FormatError("cluster model: unknown version '" + m.version + "'");
    m.centroids = j.at("centroids").get<std::vector<UnitVec3>>();
    if (j.at("K").get<int>() != m.K()) throw FormatError("cluster model: K does not match centroid count");
    m.validate();
}

void to_json(json& j, const ClusterStats& s) {
    j = json{{"cluster_id", s.cluster_id},
             {"count", s.count},
             {"head_centroid", s.head_centroid},
             {"histogram_bin_deg", kStatsBinDeg},
             {"histogram_bins", kStatsBins},
             {"histogram", s.histogram}};
    j["gaze_mean"] = s.gaze_mean ? json(*s.gaze_mean) : json(nullptr);
    j["gaze_cov"] = s.gaze_cov ? json(*s.gaze_cov) : json(nullptr);
}

void to_json(json& j, const KMeansOptions& o) {
    j = json{{"K", o.K}, {"max_iter", o.max_iter}, {"n_restarts", o.n_restarts}, {"seed", o.seed}};
}

void from_json(const json& j, KMeansOptions& o) {
    check_keys(j, {"K", "max_iter", "n_restarts", "seed"}, "cluster", Strict::Config);
    read_opt(j, "K", o.K);
    read_opt(j, "max_iter", o.max_iter);
    read_opt(j, "n_restarts", o.n_restarts);
    read_opt(j, "seed", o.seed);
}

void to_json(json& j, const SynthConfig& c) {
    j = json{{"head_pitch_range", c.head_pitch_range},
             {"head_yaw_range", c.head_yaw_range},
             {"eye_pitch_range", c.eye_pitch_range},
             {"eye_yaw_range", c.eye_yaw_range},
             {"visibility_limit_deg", c.visibility_limit_deg},
             {"image_w", c.image_w},
             {"image_h", c.image_h},
             {"n_subjects", c.n_subjects},
             {"samples_per_subject", c.samples_per_subject},
             {"seed", c.seed},
             {"color", c.color},
             {"illum_min", c.illum_min},
             {"illum_max", c.illum_max},
             {"noise_sigma", c.noise_sigma},
             {"first_subject", c.first_subject}};
}

void from_json(const json& j, SynthConfig& c) {
    check_keys(j,
               {"head_pitch_range", "head_yaw_range", "eye_pitch_range", "eye_yaw_range", "visibility_limit_deg",
                "image_w", "image_h", "n_subjects", "samples_per_subject", "seed", "color", "illum_min",
                "illum_max", "noise_sigma", "first_subject"},
               "synth", Strict::Config);
    read_opt(j, "head_pitch_range", c.head_pitch_range);
    read_opt(j, "head_yaw_range", c.head_yaw_range);
    read_opt(j, "eye_pitch_range", c.eye_pitch_range);
    read_opt(j, "eye_yaw_range", c.eye_yaw_range);
    read_opt(j, "visibility_limit_deg", c.visibility_limit_deg);
    read_opt(j, "image_w", c.image_w);
    read_opt(j, "image_h", c.image_h);
    read_opt(j, "n_subjects", c.n_subjects);
    read_opt(j, "samples_per_subject", c.samples_per_subject);
    read_opt(j, "seed", c.seed);
    read_opt(j, "color", c.color);
    read_opt(j, "illum_min", c.illum_min);
    read_opt(j, "illum_max", c.illum_max);
    read_opt(j, "noise_sigma", c.noise_sigma);
    read_opt(j, "first_subject", c.first_subject);
}

void to_json(json& j, const GenerationLog& g) {
    j = json{{"attempts", g.attempts}, {"rejected", g.rejected}, {"rejection_rate", g.rejection_rate()}};
}

void to_json(json& j, const ConvSpec& c) {
    j = json{{"kernel", c.kernel}, {"out_channels", c.out_channels}, {"stride", c.stride}, {"pad", c.pad}};
}

void from_json(const json& j, ConvSpec& c) {
    check_keys(j, {"kernel", "out_channels", "stride", "pad"}, "net.conv", Strict::Config);
    read_opt(j, "kernel", c.kernel);
    read_opt(j, "out_channels", c.out_channels);
    read_opt(j, "stride", c.stride);
    read_opt(j, "pad", c.pad);
}

void to_json(json& j, const PoolSpec& p) { j = json{{"size", p.size}, {"stride", p.stride}}; }

void from_json(const json& j, PoolSpec& p) {
    check_keys(j, {"size", "stride"}, "net.pool", Strict::Config);
    read_opt(j, "size", p.size);
    read_opt(j, "stride", p.stride);
}

void to_json(json& j, const NetConfig& c) {
    j = json{{"input_w", c.input_w},
             {"input_h", c.input_h},
             {"input_channels", c.input_channels},
             {"conv", c.conv},
             {"pool", c.pool},
             {"fc6_dim", c.fc6_dim},
             {"fc7_dim", c.fc7_dim},
             {"K", c.K},
             {"use_skip", c.use_skip},
             {"head_pose_inputs", c.head_pose_inputs}};
}

void from_json(const json& j, NetConfig& c) {
    check_keys(j,
               {"preset", "input_w", "input_h", "input_channels", "conv", "pool", "fc6_dim", "fc7_dim", "K",
                "use_skip", "head_pose_inputs"},
               "net", Strict::Config);
    if (j.contains("preset")) {
        const auto p = j["preset"].get<std::string>();
        if (p == "tiny")
            c = NetConfig::tiny();
        else if (p == "reduced")
            c = NetConfig::reduced();
        else if (p == "alexnet_like")
            c = NetConfig::alexnet_like();
        else
            throw ConfigError("net: unknown preset '" + p + "'");
    }
    read_opt(j, "input_w", c.input_w);
    read_opt(j, "input_h", c.input_h);
    read_opt(j, "input_channels", c.input_channels);
    if (j.contains("conv")) {
        const auto& arr = j["conv"];
        if (!arr.is_array() || arr.size() != 5) throw ConfigError("net.conv: expected 5 layer specs");
        for (std::size_t i = 0; i < 5; ++i) from_json(arr[i], c.conv[i]);
    }
    if (j.contains("pool")) from_json(j["pool"], c.pool);
    read_opt(j, "fc6_dim", c.fc6_dim);
    read_opt(j, "fc7_dim", c.fc7_dim);
    read_opt(j, "K", c.K);
    read_opt(j, "use_skip", c.use_skip);
    read_opt(j, "head_pose_inputs", c.head_pose_inputs);
}

void to_json(json& j, const FinetuneConfig& f) {
    j = json{{"donor_path", f.donor_path}, {"freeze_trunk", f.freeze_trunk}, {"lr_scale", f.lr_scale}};
}

void from_json(const json& j, FinetuneConfig& f) {
    check_keys(j, {"donor_path", "freeze_trunk", "lr_scale"}, "train.finetune", Strict::Config);
    read_opt(j, "donor_path", f.donor_path);
    read_opt(j, "freeze_trunk", f.freeze_trunk);
    read_opt(j, "lr_scale", f.lr_scale);
}

void to_json(json& j, const TrainConfig& c) {
    j = json{{"optimizer", enum_name(c.optimizer, kOptimizers)},
             {"learning_rate", c.learning_rate},
             {"momentum", c.momentum},
             {"beta1", c.beta1},
             {"beta2", c.beta2},
             {"epsilon", c.epsilon},
             {"weight_decay", c.weight_decay},
             {"batch_size", c.batch_size},
             {"epochs", c.epochs},
             {"seed", c.seed},
             {"loss", enum_name(c.loss, kLosses)},
             {"lr_schedule", enum_name(c.lr_schedule, kSchedules)},
             {"step_epochs", c.step_epochs},
             {"step_gamma", c.step_gamma},
             {"hist_eq", c.hist_eq}};
    j["finetune"] = c.finetune ? json(*c.finetune) : json(nullptr);
}

void from_json(const json& j, TrainConfig& c) {
    check_keys(j,
               {"optimizer", "learning_rate", "momentum", "beta1", "beta2", "epsilon", "weight_decay", "batch_size",
                "epochs", "seed", "loss", "lr_schedule", "step_epochs", "step_gamma", "hist_eq", "finetune"},
               "train", Strict::Config);
    if (j.contains("optimizer")) c.optimizer = parse_enum(j["optimizer"], kOptimizers, "train.optimizer");
    read_opt(j, "learning_rate", c.learning_rate);
    read_opt(j, "momentum", c.momentum);
    read_opt(j, "beta1", c.beta1);
    read_opt(j, "beta2", c.beta2);
    read_opt(j, "epsilon", c.epsilon);
    read_opt(j, "weight_decay", c.weight_decay);
    read_opt(j, "batch_size", c.batch_size);
    read_opt(j, "epochs", c.epochs);
    read_opt(j, "seed", c.seed);
    if (j.contains("loss")) c.loss = parse_enum(j["loss"], kLosses, "train.loss");
    if (j.contains("lr_schedule")) c.lr_schedule = parse_enum(j["lr_schedule"], kSchedules, "train.lr_schedule");
    read_opt(j, "step_epochs", c.step_epochs);
    read_opt(j, "step_gamma", c.step_gamma);
    read_opt(j, "hist_eq", c.hist_eq);
    if (j.contains("finetune")) {
        if (j["finetune"].is_null()) {
            c.finetune.reset();
        } else {
            FinetuneConfig f = c.finetune.value_or(FinetuneConfig{});
            from_json(j["finetune"], f);
            c.finetune = f;
        }
    }
}

void to_json(json& j, const EpochRecord& r) {
    j = json{{"epoch", r.epoch}, {"split", r.split}, {"loss", r.loss}, {"angular_error_deg", r.angular_error_deg}};
}

void to_json(json& j, const TargetingSpec& s) {
    j = json{{"bin_deg", s.bin_deg},
             {"joint_gaze", s.joint_gaze},
             {"gaze_bin_deg", s.gaze_bin_deg},
             {"max_keep_ratio", s.max_keep_ratio}};
}

void from_json(const json& j, TargetingSpec& s) {
    check_keys(j, {"bin_deg", "joint_gaze", "gaze_bin_deg", "max_keep_ratio"}, "targeting", Strict::Config);
    read_opt(j, "bin_deg", s.bin_deg);
    read_opt(j, "joint_gaze", s.joint_gaze);
    read_opt(j, "gaze_bin_deg", s.gaze_bin_deg);
    read_opt(j, "max_keep_ratio", s.max_keep_ratio);
}

void to_json(json& j, const TargetingReport& r) {
    j = json{{"kept", r.kept}, {"source", r.source}, {"keep_probability", r.keep_probability}};
}

void to_json(json& j, const LoadReport& r) {
    j = json{{"transferred", r.transferred}, {"skipped", r.skipped}, {"unmatched", r.unmatched}};
}

void to_json(json& j, const Aggregate& a) { j = json{{"count", a.count}, {"mean_error_deg", a.mean}}; }

void to_json(json& j, const SampleRecord& r) {
    j = json{{"id", r.id},
             {"subject", r.subject},
             {"cluster", r.cluster},
             {"fold", r.fold},
             {"pred", r.pred},
             {"label", r.label},
             {"error_deg", r.error_deg},
             {"excluded", r.excluded}};
}

void to_json(json& j, const EvalReport& r) {
    j = json{{"protocol", r.protocol},
             {"K", r.K},
             {"config_hash", r.config_hash},
             {"seeds", r.seeds},
             {"meta", r.meta},
             {"overall_mean_error_deg", r.overall_mean},
             {"subject_mean_error_deg", r.subject_mean},
             {"per_cluster", aggregates(r.per_cluster)},
             {"per_subject", aggregates(r.per_subject)},
             {"per_fold", aggregates(r.per_fold)},
             {"records", r.records}};
}

void to_json(json& j, const ProtocolSpec& p) {
    j = json{{"protocol", enum_name(p.kind, kProtocols)},
             {"test_subjects", p.test_subjects},
             {"folds", p.folds},
             {"repeats", p.repeats},
             {"train_frac", p.train_frac}};
}

void from_json(const json& j, ProtocolSpec& p) {
    check_keys(j, {"protocol", "test_subjects", "folds", "repeats", "train_frac"}, "eval", Strict::Config);
    if (j.contains("protocol")) p.kind = parse_enum(j["protocol"], kProtocols, "eval.protocol");
    read_opt(j, "test_subjects", p.test_subjects);
    read_opt(j, "folds", p.folds);
    read_opt(j, "repeats", p.repeats);
    read_opt(j, "train_frac", p.train_frac);
}

}  // namespace gazenet
