#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazenet/clustering.hpp"
#include "gazenet/dataset.hpp"
#include "gazenet/nnet.hpp"

namespace gazenet {

enum class OptimizerKind { Adam, SgdMomentum };
enum class LrSchedule { Constant, StepDecay };
enum class LossKind { MseRadians, Angular };

struct FinetuneConfig {
    std::string donor_path;  // model manifest to partially load before training
    bool freeze_trunk = false;
    double lr_scale = 0.1;
};

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 1e-3;
    double momentum = 0.9;  // SGD
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;
    int batch_size = 32;
    int epochs = 10;
    std::uint64_t seed = 1;
    LossKind loss = LossKind::MseRadians;
    LrSchedule lr_schedule = LrSchedule::Constant;
    int step_epochs = 5;
    double step_gamma = 0.5;
    bool hist_eq = false;
    std::optional<FinetuneConfig> finetune;

    void validate() const;
    double lr_at(int epoch) const;
};

/// Per-sample training loss: mean of the squared pitch and yaw differences (radians^2).
double loss(const Angles& pred, const Angles& target);

/// Per-sample loss of the given kind and its gradient w.r.t. (pitch, yaw).
double loss_and_grad(LossKind kind, const Angles& pred, const Angles& target, double grad[2]);

/// Dataset converted to network input once: pixels N x C x H x W scaled
/// to [-1, 1], plus routing ids and labels.
struct PreparedData {
    int n = 0;
    int sample_numel = 0;
    std::vector<float> pixels;
    std::vector<Angles> head;
    std::vector<Angles> gaze;
    std::vector<int> cluster;  // from the cluster model (or stored ids); 1-based
    std::vector<int> route;    // head actually used by the net
};

/// Cluster ids come from `model` when given, else from stored sample ids,
/// else 1. Routing ids collapse to 1 for single-head nets.
PreparedData prepare(const Dataset& ds, const NetConfig& net, const ClusterModel* model, bool hist_eq);

struct EpochRecord {
    int epoch = 0;
    std::string split;  // "train" or "val"
    double loss = 0.0;
    double angular_error_deg = 0.0;
};

/// Stateful optimizer; moments live per parameter tensor and untouched
/// tensors are skipped entirely.
class Optimizer {
public:
    Optimizer(const BranchedNet<float>& net, const TrainConfig& cfg);
    void step(BranchedNet<float>& net, const Gradients<float>& grads, double lr);

private:
    TrainConfig cfg_;
    std::vector<std::vector<float>> m_, v_;
    std::vector<std::uint64_t> t_;
};

/// Per-parameter, per-cluster count of sub-batches that wrote a gradient.
struct UpdateCounters {
    std::vector<std::string> names;
    std::vector<std::vector<std::uint64_t>> counts;  // [param][cluster - 1]
};

struct TrainOptions {
    const PreparedData* validation = nullptr;
    UpdateCounters* counters = nullptr;
    std::function<void(const EpochRecord&)> on_epoch;
};

/// One optimizer step over the given batch positions. Positions are sorted
/// and split into per-head sub-batches whose gradients are accumulated with
/// weight 1/|batch| before the step. Returns the summed per-sample loss.
double train_step(BranchedNet<float>& net, Optimizer& opt, const PreparedData& data,
                  std::vector<std::size_t> batch, double lr, LossKind loss_kind, bool freeze_trunk,
                  Workspace<float>& ws, Gradients<float>& grads, UpdateCounters* counters = nullptr,
                  double* angular_sum = nullptr);

/// Shuffled mini-batch training. Returns one "train" record per epoch
/// (plus "val" records when a validation set is supplied). Throws
/// TrainingDiverged on a non-finite loss.
std::vector<EpochRecord> train_epochs(BranchedNet<float>& net, const PreparedData& data, const TrainConfig& cfg,
                                      const TrainOptions& opts = {});

std::vector<EpochRecord> train_epochs(BranchedNet<float>& net, const Dataset& ds, const ClusterModel* model,
                                      const TrainConfig& cfg, const TrainOptions& opts = {});

struct PretrainFinetuneResult {
    std::vector<EpochRecord> pretrain_curve;
    std::vector<EpochRecord> finetune_curve;
};

/// Trains on synthetic data for `pretrain_epochs`, then on real data for
/// cfg.epochs. The fine-tune phase uses the learning rate scaled by
/// cfg.finetune->lr_scale (0.1 when unset) only if pretraining ran.
PretrainFinetuneResult pretrain_finetune(BranchedNet<float>& net, const Dataset& synth, const Dataset& real,
                                         const ClusterModel* model, const TrainConfig& cfg, int pretrain_epochs,
                                         const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

/// Mean loss and angular error of the net on prepared data (no update).
EpochRecord measure(const BranchedNet<float>& net, const PreparedData& data, LossKind loss_kind);

/// Predictions for the given positions, batched by route.
std::vector<Angles> predict(const BranchedNet<float>& net, const PreparedData& data,
                            std::span<const std::size_t> positions);

std::string loss_curve_csv(const std::vector<EpochRecord>& curve);

}  // namespace gazenet
