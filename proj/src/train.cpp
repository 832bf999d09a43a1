#include "gazenet/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gazenet/errors.hpp"
#include "gazenet/nnet_io.hpp"
#include "gazenet/rng.hpp"
#include "gazenet/synthcam.hpp"

namespace gazenet {

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("train: betas must be in [0, 1)");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("train: epsilon must be > 0");
    if (lr_schedule == LrSchedule::StepDecay && (step_epochs < 1 || !(step_gamma > 0.0)))
        throw ConfigError("train: step decay needs step_epochs >= 1 and step_gamma > 0");
    if (finetune && !(finetune->lr_scale > 0.0)) throw ConfigError("train: finetune lr_scale must be > 0");
}

double TrainConfig::lr_at(int epoch) const {
    double lr = learning_rate;
    if (lr_schedule == LrSchedule::StepDecay) lr *= std::pow(step_gamma, epoch / step_epochs);
    return lr;
}

double loss(const Angles& pred, const Angles& target) {
    const double dp = pred.pitch - target.pitch, dy = pred.yaw - target.yaw;
    return 0.5 * (dp * dp + dy * dy);
}

double loss_and_grad(LossKind kind, const Angles& pred, const Angles& target, double grad[2]) {
    if (kind == LossKind::MseRadians) {
        grad[0] = pred.pitch - target.pitch;
        grad[1] = pred.yaw - target.yaw;
        return loss(pred, target);
    }
    // angle between direction vectors, radians
    const UnitVec3 p = angles_to_vec(pred), t = angles_to_vec(target);
    const double d = std::clamp(p.dot(t), -1.0, 1.0);
    const double dl_dd = -1.0 / std::sqrt(std::max(1.0 - d * d, 1e-12));
    const double cp = std::cos(pred.pitch), sp = std::sin(pred.pitch);
    const double cy = std::cos(pred.yaw), sy = std::sin(pred.yaw);
    // d p / d pitch and d p / d yaw
    const double dpp[3] = {sp * sy, -cp, sp * cy};
    const double dpy[3] = {-cp * cy, 0.0, cp * sy};
    grad[0] = dl_dd * (dpp[0] * t.x + dpp[1] * t.y + dpp[2] * t.z);
    grad[1] = dl_dd * (dpy[0] * t.x + dpy[1] * t.y + dpy[2] * t.z);
    return std::acos(d);
}

PreparedData prepare(const Dataset& ds, const NetConfig& net, const ClusterModel* model, bool hist_eq) {
    if (ds.manifest.width != net.input_w || ds.manifest.height != net.input_h ||
        ds.manifest.channels != net.input_channels)
        throw InvalidInput("dataset " + std::to_string(ds.manifest.width) + "x" + std::to_string(ds.manifest.height) +
                           "x" + std::to_string(ds.manifest.channels) + " does not match net input " +
                           std::to_string(net.input_w) + "x" + std::to_string(net.input_h) + "x" +
                           std::to_string(net.input_channels));
    if (model && net.K > 1 && model->K() != net.K)
        throw InvalidInput("cluster model has K=" + std::to_string(model->K()) + " but the net has " +
                           std::to_string(net.K) + " heads");
    PreparedData p;
    p.n = static_cast<int>(ds.size());
    p.sample_numel = net.input_w * net.input_h * net.input_channels;
    p.pixels.resize(static_cast<std::size_t>(p.n) * p.sample_numel);
    const std::size_t hw = static_cast<std::size_t>(net.input_w) * net.input_h;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const EyeImage& src = ds.images[i];
        const EyeImage img = hist_eq ? hist_equalize_y(src) : src;
        if (img.width != net.input_w || img.height != net.input_h || img.channels != net.input_channels)
            throw InvalidInput("sample " + ds.samples[i].id + " image does not match net input");
        float* dst = p.pixels.data() + i * static_cast<std::size_t>(p.sample_numel);
        for (int c = 0; c < img.channels; ++c)
            for (std::size_t k = 0; k < hw; ++k)
                dst[static_cast<std::size_t>(c) * hw + k] = pixel_scale<float>(img.data[k * img.channels + c]);
        const auto& s = ds.samples[i];
        p.head.push_back(s.head);
        p.gaze.push_back(s.gaze);
        int cid = 1;
        if (model)
            cid = model->assign(s.head);
        else if (s.cluster)
            cid = *s.cluster;
        p.cluster.push_back(cid);
        const int route = net.K == 1 ? 1 : cid;
        if (route < 1 || route > net.K)
            throw InvalidInput("sample " + s.id + " routes to head " + std::to_string(route) + " of " +
                               std::to_string(net.K));
        p.route.push_back(route);
    }
    return p;
}

Optimizer::Optimizer(const BranchedNet<float>& net, const TrainConfig& cfg) : cfg_(cfg) {
    const auto& P = net.params();
    m_.resize(P.size());
    v_.resize(P.size());
    t_.assign(P.size(), 0);
    for (std::size_t i = 0; i < P.size(); ++i) {
        m_[i].assign(P.tensor(i).numel(), 0.0f);
        if (cfg_.optimizer == OptimizerKind::Adam) v_[i].assign(P.tensor(i).numel(), 0.0f);
    }
}

void Optimizer::step(BranchedNet<float>& net, const Gradients<float>& G, double lr) {
    auto& P = net.params();
    const float lrf = static_cast<float>(lr);
    const float wd = static_cast<float>(cfg_.weight_decay);
    for (std::size_t i = 0; i < P.size(); ++i) {
        if (!G.touched[i]) continue;
        auto& theta = P.tensor(i).data;
        const auto& g = G.grads.tensor(i).data;
        auto& m = m_[i];
        ++t_[i];
        if (cfg_.optimizer == OptimizerKind::Adam) {
            auto& v = v_[i];
            const float b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
            const double t = static_cast<double>(t_[i]);
            const float c1 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta1, t)));
            const float c2 = static_cast<float>(1.0 / (1.0 - std::pow(cfg_.beta2, t)));
            const float eps = static_cast<float>(cfg_.epsilon);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                const float gj = g[j] + wd * theta[j];
                m[j] = b1 * m[j] + (1.0f - b1) * gj;
                v[j] = b2 * v[j] + (1.0f - b2) * gj * gj;
                theta[j] -= lrf * (m[j] * c1) / (std::sqrt(v[j] * c2) + eps);
            }
        } else {
            const float mu = static_cast<float>(cfg_.momentum);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                m[j] = mu * m[j] + g[j] + wd * theta[j];
                theta[j] -= lrf * m[j];
            }
        }
    }
}

double train_step(BranchedNet<float>& net, Optimizer& opt, const PreparedData& data, std::vector<std::size_t> batch,
                  double lr, LossKind loss_kind, bool freeze_trunk, Workspace<float>& ws, Gradients<float>& grads,
                  UpdateCounters* counters, double* angular_sum) {
    if (batch.empty()) return 0.0;
    // canonical order: by head, then by position
    std::sort(batch.begin(), batch.end(), [&](std::size_t a, std::size_t b) {
        return data.route[a] != data.route[b] ? data.route[a] < data.route[b] : a < b;
    });
    grads.zero();
    const float weight = 1.0f / static_cast<float>(batch.size());
    const BackwardOptions bopt{!freeze_trunk};
    double loss_sum = 0.0;
    std::vector<float> pixels;
    std::vector<Angles> heads;
    std::vector<float> dout;
    std::vector<bool> before;
    for (std::size_t begin = 0; begin < batch.size();) {
        const int route = data.route[batch[begin]];
        std::size_t end = begin;
        while (end < batch.size() && data.route[batch[end]] == route) ++end;
        const int n = static_cast<int>(end - begin);
        pixels.resize(static_cast<std::size_t>(n) * data.sample_numel);
        heads.resize(static_cast<std::size_t>(n));
        for (int b = 0; b < n; ++b) {
            const std::size_t pos = batch[begin + static_cast<std::size_t>(b)];
            std::copy_n(data.pixels.data() + pos * static_cast<std::size_t>(data.sample_numel), data.sample_numel,
                        pixels.data() + static_cast<std::size_t>(b) * data.sample_numel);
            heads[static_cast<std::size_t>(b)] = data.head[pos];
        }
        const auto pred = forward(net, BatchView<float>{n, pixels, heads}, route, ws);
        dout.resize(static_cast<std::size_t>(n) * 2);
        for (int b = 0; b < n; ++b) {
            const std::size_t pos = batch[begin + static_cast<std::size_t>(b)];
            double g[2];
            loss_sum += loss_and_grad(loss_kind, pred[static_cast<std::size_t>(b)], data.gaze[pos], g);
            dout[static_cast<std::size_t>(2 * b)] = weight * static_cast<float>(g[0]);
            dout[static_cast<std::size_t>(2 * b + 1)] = weight * static_cast<float>(g[1]);
            if (angular_sum) *angular_sum += angular_error(pred[static_cast<std::size_t>(b)], data.gaze[pos]);
        }
        if (counters) {
            before = grads.touched;
            std::fill(grads.touched.begin(), grads.touched.end(), false);
        }
        backward_from_output(net, ws, std::span<const float>(dout), route, grads, bopt);
        if (counters) {
            for (std::size_t i = 0; i < grads.touched.size(); ++i) {
                if (grads.touched[i]) {
                    auto& row = counters->counts[i];
                    const auto c = static_cast<std::size_t>(route - 1);
                    if (row.size() <= c) row.resize(c + 1, 0);
                    ++row[c];
                }
                grads.touched[i] = grads.touched[i] || before[i];
            }
        }
        begin = end;
    }
    if (!std::isfinite(loss_sum)) return loss_sum;
    opt.step(net, grads, lr);
    return loss_sum;
}

EpochRecord measure(const BranchedNet<float>& net, const PreparedData& data, LossKind loss_kind) {
    std::vector<std::size_t> all(static_cast<std::size_t>(data.n));
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto pred = predict(net, data, all);
    EpochRecord r;
    r.split = "val";
    if (data.n == 0) return r;
    double l = 0.0, a = 0.0, g[2];
    for (std::size_t i = 0; i < pred.size(); ++i) {
        l += loss_and_grad(loss_kind, pred[i], data.gaze[i], g);
        a += angular_error(pred[i], data.gaze[i]);
    }
    r.loss = l / data.n;
    r.angular_error_deg = a / data.n;
    return r;
}

std::vector<Angles> predict(const BranchedNet<float>& net, const PreparedData& data,
                            std::span<const std::size_t> positions) {
    std::vector<Angles> out(positions.size());
    std::vector<std::size_t> order(positions.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.route[positions[a]] < data.route[positions[b]]; });
    constexpr std::size_t kChunk = 256;
    Workspace<float> ws;
    std::vector<float> pixels;
    std::vector<Angles> heads;
    for (std::size_t begin = 0; begin < order.size();) {
        const int route = data.route[positions[order[begin]]];
        std::size_t end = begin;
        while (end < order.size() && end - begin < kChunk && data.route[positions[order[end]]] == route) ++end;
        const int n = static_cast<int>(end - begin);
        pixels.resize(static_cast<std::size_t>(n) * data.sample_numel);
        heads.resize(static_cast<std::size_t>(n));
        for (int b = 0; b < n; ++b) {
            const std::size_t pos = positions[order[begin + static_cast<std::size_t>(b)]];
            std::copy_n(data.pixels.data() + pos * static_cast<std::size_t>(data.sample_numel), data.sample_numel,
                        pixels.data() + static_cast<std::size_t>(b) * data.sample_numel);
            heads[static_cast<std::size_t>(b)] = data.head[pos];
        }
        const auto pred = forward(net, BatchView<float>{n, pixels, heads}, route, ws);
        for (int b = 0; b < n; ++b) out[order[begin + static_cast<std::size_t>(b)]] = pred[static_cast<std::size_t>(b)];
        begin = end;
    }
    return out;
}

std::vector<EpochRecord> train_epochs(BranchedNet<float>& net, const PreparedData& data, const TrainConfig& cfg,
                                      const TrainOptions& opts) {
    cfg.validate();
    if (data.n > 0 && data.sample_numel != net.shapes().input.numel())
        throw InvalidInput("train: prepared data does not match the net input");
    for (int r : data.route)
        if (r < 1 || r > net.config().K) throw InvalidInput("train: sample routes outside the net's heads");
    const bool freeze = cfg.finetune && cfg.finetune->freeze_trunk;
    const double lr_scale = cfg.finetune ? cfg.finetune->lr_scale : 1.0;

    if (opts.counters) {
        opts.counters->names.clear();
        opts.counters->counts.assign(net.params().size(), std::vector<std::uint64_t>(static_cast<std::size_t>(net.config().K), 0));
        for (std::size_t i = 0; i < net.params().size(); ++i) opts.counters->names.push_back(net.params().name(i));
    }

    Optimizer opt(net, cfg);
    Workspace<float> ws;
    Gradients<float> grads(net);
    std::vector<EpochRecord> curve;
    std::size_t global_batch = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(static_cast<std::size_t>(data.n));
        std::iota(order.begin(), order.end(), std::size_t{0});
        RngStream rng(cfg.seed, streams::kShuffle, static_cast<std::uint32_t>(epoch));
        shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.lr_at(epoch) * lr_scale;
        double loss_sum = 0.0, ang_sum = 0.0;
        const auto bs = static_cast<std::size_t>(cfg.batch_size);
        for (std::size_t b = 0; b < order.size(); b += bs, ++global_batch) {
            std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b),
                                           order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), b + bs)));
            const double l = train_step(net, opt, data, std::move(batch), lr, cfg.loss, freeze, ws, grads,
                                        opts.counters, &ang_sum);
            if (!std::isfinite(l))
                throw TrainingDiverged("train: non-finite loss in epoch " + std::to_string(epoch) + ", batch " +
                                           std::to_string(global_batch),
                                       global_batch);
            loss_sum += l;
        }
        EpochRecord rec{epoch, "train", data.n ? loss_sum / data.n : 0.0, data.n ? ang_sum / data.n : 0.0};
        curve.push_back(rec);
        if (opts.on_epoch) opts.on_epoch(rec);
        if (opts.validation) {
            EpochRecord v = measure(net, *opts.validation, cfg.loss);
            v.epoch = epoch;
            curve.push_back(v);
            if (opts.on_epoch) opts.on_epoch(v);
        }
    }
    return curve;
}

std::vector<EpochRecord> train_epochs(BranchedNet<float>& net, const Dataset& ds, const ClusterModel* model,
                                      const TrainConfig& cfg, const TrainOptions& opts) {
    const PreparedData data = prepare(ds, net.config(), model, cfg.hist_eq);
    return train_epochs(net, data, cfg, opts);
}

PretrainFinetuneResult pretrain_finetune(BranchedNet<float>& net, const Dataset& synth, const Dataset& real,
                                         const ClusterModel* model, const TrainConfig& cfg, int pretrain_epochs,
                                         const std::optional<std::filesystem::path>& checkpoint) {
    PretrainFinetuneResult r;
    TrainConfig pre = cfg;
    pre.finetune.reset();
    pre.epochs = pretrain_epochs;
    const bool pretrained = pretrain_epochs > 0 && !synth.empty();
    if (pretrained) r.pretrain_curve = train_epochs(net, synth, model, pre);
    if (checkpoint) save_model(net, *checkpoint);
    if (real.empty()) return r;
    TrainConfig fine = cfg;
    if (pretrained) {
        if (!fine.finetune) fine.finetune = FinetuneConfig{};
    } else {
        fine.finetune.reset();
    }
    r.finetune_curve = train_epochs(net, real, model, fine);
    return r;
}

std::string loss_curve_csv(const std::vector<EpochRecord>& curve) {
    std::ostringstream os;
    os.precision(10);
    os << "epoch,split,loss,angular_error_deg\n";
    for (const auto& r : curve) os << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.angular_error_deg << '\n';
    return os.str();
}

}  // namespace gazenet
