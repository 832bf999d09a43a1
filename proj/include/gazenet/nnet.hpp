#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gazenet/geometry.hpp"

namespace gazenet {

/// Dense row-major tensor, up to 4D (N x C x H x W).
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s, T fill = T(0));

    std::size_t numel() const { return data.size(); }
    static std::size_t count(const std::vector<int>& s);
};

/// Ordered, uniquely named tensors.
template <typename T>
class ParamStore {
public:
    Tensor<T>& add(const std::string& name, std::vector<int> shape);

    bool contains(const std::string& name) const { return index_.count(name) > 0; }
    Tensor<T>& at(const std::string& name);
    const Tensor<T>& at(const std::string& name) const;
    Tensor<T>* find(const std::string& name);
    const Tensor<T>* find(const std::string& name) const;

    std::size_t size() const { return tensors_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor<T>& tensor(std::size_t i) { return tensors_[i]; }
    const Tensor<T>& tensor(std::size_t i) const { return tensors_[i]; }
    std::size_t index_of(const std::string& name) const;

    void fill(T v);

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> tensors_;
    std::unordered_map<std::string, std::size_t> index_;
};

struct ConvSpec {
    int kernel = 3;
    int out_channels = 16;
    int stride = 1;
    int pad = -1;  // -1 means kernel / 2

    int padding() const { return pad < 0 ? kernel / 2 : pad; }
    friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

struct PoolSpec {
    int size = 2;
    int stride = 2;
    friend bool operator==(const PoolSpec&, const PoolSpec&) = default;
};

struct FeatureShape {
    int c = 0, h = 0, w = 0;
    int numel() const { return c * h * w; }
};

struct NetShapes {
    FeatureShape input;
    std::array<FeatureShape, 5> conv;  // outputs of conv1..conv5
    FeatureShape pool;
    int flat_dim = 0;
    int fc8_in = 0;
};

/// Architecture description. fc8 always emits (pitch, yaw).
struct NetConfig {
    int input_w = 64;
    int input_h = 40;
    int input_channels = 1;
    std::array<ConvSpec, 5> conv{ConvSpec{7, 32, 2}, ConvSpec{5, 64, 2}, ConvSpec{3, 96, 1},
                                 ConvSpec{3, 96, 1}, ConvSpec{3, 64, 1}};
    PoolSpec pool;
    int fc6_dim = 128;
    int fc7_dim = 64;
    int K = 1;
    bool use_skip = true;
    bool head_pose_inputs = true;

    /// Propagates feature shapes; throws InvalidInput if a dim collapses.
    NetShapes shapes() const;
    void validate() const { (void)shapes(); }

    /// Desk-scale default (64x40 gray input).
    static NetConfig reduced();
    /// AlexNet-like layout at 134x80x3; dimensions are an approximation.
    static NetConfig alexnet_like();
    /// Small preset for fast experiments on 32x20 inputs.
    static NetConfig tiny();

    friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

/// Shared conv1..fc6 trunk plus K (fc7, fc8) heads addressed by 1-based
/// cluster id. Parameter names: conv{1..5}.{weight,bias}, fc6.*, skip.*,
/// fc7_{k}.*, fc8_{k}.*.
template <typename T>
class BranchedNet {
public:
    explicit BranchedNet(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }
    const NetShapes& shapes() const { return shapes_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    /// He-uniform weights, zero biases; trunk tensors are drawn before heads
    /// so nets differing only in K share their trunk for a given seed.
    void init_he_uniform(std::uint64_t seed);

    static std::string head_param(int layer, int cluster_id, const char* kind);
    static bool is_head_param(const std::string& name);
    /// Cluster id of a head parameter, 0 for trunk parameters.
    static int head_of(const std::string& name);

    template <typename U>
    BranchedNet<U> cast() const;

private:
    NetConfig cfg_;
    NetShapes shapes_;
    ParamStore<T> params_;
};

/// Activations retained between forward and backward. Reusable across calls.
template <typename T>
struct Workspace {
    int n = 0;
    std::vector<T> input;                  // C x N x H x W
    std::array<std::vector<T>, 5> cols;    // im2col buffers
    std::array<std::vector<T>, 5> act;     // post-ReLU conv outputs, C x N x H x W
    std::vector<T> pool;                   // C x N x H x W
    std::vector<int> pool_arg;
    std::vector<T> flat;                   // N x flat_dim
    std::vector<T> skip_in;                // N x C3
    std::vector<T> fc6;                    // post-ReLU, N x fc6
    std::vector<T> fc7;                    // post-ReLU, N x fc7
    std::vector<T> fc8_in;                 // N x fc8_in
    std::vector<T> out;                    // N x 2
};

/// Input batch. Pixels are N x C x H x W, already scaled (see pixel_scale).
template <typename T>
struct BatchView {
    int n = 0;
    std::span<const T> pixels;
    std::span<const Angles> head;
};

/// Maps an 8-bit level to the network's input range [-1, 1].
template <typename T>
constexpr T pixel_scale(std::uint8_t v) {
    return static_cast<T>(v) * T(2.0 / 255.0) - T(1);
}

/// Runs trunk and the single head cluster_id. Returns N x 2 (pitch, yaw).
template <typename T>
std::vector<Angles> forward(const BranchedNet<T>& net, const BatchView<T>& batch, int cluster_id,
                            Workspace<T>& ws);

/// Convenience single-sample forward.
template <typename T>
Angles forward(const BranchedNet<T>& net, std::span<const T> pixels, const Angles& head, int cluster_id);

/// Gradient accumulator mirroring a net's parameter store; only touched
/// tensors are considered updated by the optimizer.
template <typename T>
struct Gradients {
    ParamStore<T> grads;
    std::vector<bool> touched;

    explicit Gradients(const BranchedNet<T>& net);
    void zero();
};

struct BackwardOptions {
    bool trunk = true;  // false skips trunk gradients (frozen trunk)
};

/// Adds d(loss)/d(theta) to grads, where loss = weight * sum_i 0.5 *
/// |pred_i - target_i|^2 over the batch, for trunk and head cluster_id only.
/// Must follow a forward() on the same workspace. Returns the unweighted
/// sum of per-sample losses (mean of squared pitch/yaw differences).
template <typename T>
double backward(const BranchedNet<T>& net, Workspace<T>& ws, std::span<const Angles> targets, int cluster_id,
                T weight, Gradients<T>& grads, const BackwardOptions& opt = {});

/// Core reverse pass: accumulates gradients for an arbitrary N x 2 gradient
/// of the loss with respect to the network outputs.
template <typename T>
void backward_from_output(const BranchedNet<T>& net, Workspace<T>& ws, std::span<const T> dout, int cluster_id,
                          Gradients<T>& grads, const BackwardOptions& opt = {});

/// Multiply-accumulates of one forward pass through the trunk and one head.
std::uint64_t flop_count(const NetConfig& cfg);

template <typename T>
std::uint64_t flop_count(const BranchedNet<T>& net) {
    return flop_count(net.config());
}

}  // namespace gazenet
