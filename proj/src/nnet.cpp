#include "gazenet/nnet.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "gazenet/errors.hpp"
#include "gazenet/hash.hpp"
#include "gazenet/rng.hpp"

namespace gazenet {

// ---------------------------------------------------------------- storage

template <typename T>
Tensor<T>::Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

template <typename T>
std::size_t Tensor<T>::count(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) n *= static_cast<std::size_t>(d);
    return n;
}

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, std::vector<int> shape) {
    if (contains(name)) throw InvalidInput("duplicate parameter name " + name);
    index_[name] = tensors_.size();
    names_.push_back(name);
    tensors_.emplace_back(std::move(shape));
    return tensors_.back();
}

template <typename T>
Tensor<T>& ParamStore<T>::at(const std::string& name) {
    auto* t = find(name);
    if (!t) throw InvalidInput("unknown parameter " + name);
    return *t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
    const auto* t = find(name);
    if (!t) throw InvalidInput("unknown parameter " + name);
    return *t;
}

template <typename T>
Tensor<T>* ParamStore<T>::find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
}

template <typename T>
const Tensor<T>* ParamStore<T>::find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &tensors_[it->second];
}

template <typename T>
std::size_t ParamStore<T>::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw InvalidInput("unknown parameter " + name);
    return it->second;
}

template <typename T>
void ParamStore<T>::fill(T v) {
    for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), v);
}

// ---------------------------------------------------------------- config

NetShapes NetConfig::shapes() const {
    auto bad = [](const std::string& m) { throw InvalidInput("net config: " + m); };
    if (input_w < 1 || input_h < 1 || (input_channels != 1 && input_channels != 3))
        bad("input must be positive with 1 or 3 channels");
    if (fc6_dim < 1 || fc7_dim < 1) bad("fc dims must be positive");
    if (K < 1) bad("K must be >= 1");
    NetShapes s;
    s.input = {input_channels, input_h, input_w};
    FeatureShape cur = s.input;
    for (std::size_t i = 0; i < conv.size(); ++i) {
        const auto& c = conv[i];
        if (c.kernel < 1 || c.out_channels < 1 || c.stride < 1) bad("conv" + std::to_string(i + 1) + " spec invalid");
        const int p = c.padding();
        const int h = (cur.h + 2 * p - c.kernel) / c.stride + 1;
        const int w = (cur.w + 2 * p - c.kernel) / c.stride + 1;
        if (cur.h + 2 * p < c.kernel || cur.w + 2 * p < c.kernel || h < 1 || w < 1)
            bad("conv" + std::to_string(i + 1) + " output collapses to zero");
        cur = {c.out_channels, h, w};
        s.conv[i] = cur;
    }
    if (pool.size < 1 || pool.stride < 1) bad("pool spec invalid");
    if (cur.h < pool.size || cur.w < pool.size) bad("pool5 output collapses to zero");
    s.pool = {cur.c, (cur.h - pool.size) / pool.stride + 1, (cur.w - pool.size) / pool.stride + 1};
    s.flat_dim = s.pool.numel();
    s.fc8_in = fc7_dim + (head_pose_inputs ? 2 : 0);
    return s;
}

NetConfig NetConfig::reduced() { return NetConfig{}; }

NetConfig NetConfig::alexnet_like() {
    NetConfig c;
    c.input_w = 134;
    c.input_h = 80;
    c.input_channels = 3;
    c.conv = {ConvSpec{11, 96, 4, 5}, ConvSpec{5, 256, 1, 2}, ConvSpec{3, 384, 1, 1}, ConvSpec{3, 384, 1, 1},
              ConvSpec{3, 256, 1, 1}};
    c.pool = {3, 2};
    c.fc6_dim = 1024;
    c.fc7_dim = 256;
    return c;
}

NetConfig NetConfig::tiny() {
    NetConfig c;
    c.input_w = 32;
    c.input_h = 20;
    c.conv = {ConvSpec{5, 12, 2}, ConvSpec{3, 16, 1}, ConvSpec{3, 24, 2}, ConvSpec{3, 24, 1}, ConvSpec{3, 24, 1}};
    c.pool = {2, 2};
    c.fc6_dim = 96;
    c.fc7_dim = 48;
    return c;
}

// ---------------------------------------------------------------- net

template <typename T>
BranchedNet<T>::BranchedNet(const NetConfig& cfg) : cfg_(cfg), shapes_(cfg.shapes()) {
    int in_c = cfg_.input_channels;
    for (int i = 0; i < 5; ++i) {
        const auto& c = cfg_.conv[static_cast<std::size_t>(i)];
        const std::string base = "conv" + std::to_string(i + 1);
        params_.add(base + ".weight", {c.out_channels, in_c, c.kernel, c.kernel});
        params_.add(base + ".bias", {c.out_channels});
        in_c = c.out_channels;
    }
    params_.add("fc6.weight", {cfg_.fc6_dim, shapes_.flat_dim});
    params_.add("fc6.bias", {cfg_.fc6_dim});
    if (cfg_.use_skip) {
        params_.add("skip.weight", {cfg_.fc6_dim, shapes_.conv[2].c});
        params_.add("skip.bias", {cfg_.fc6_dim});
    }
    for (int k = 1; k <= cfg_.K; ++k) {
        params_.add(head_param(7, k, "weight"), {cfg_.fc7_dim, cfg_.fc6_dim});
        params_.add(head_param(7, k, "bias"), {cfg_.fc7_dim});
        params_.add(head_param(8, k, "weight"), {2, shapes_.fc8_in});
        params_.add(head_param(8, k, "bias"), {2});
    }
}

template <typename T>
std::string BranchedNet<T>::head_param(int layer, int cluster_id, const char* kind) {
    return "fc" + std::to_string(layer) + "_" + std::to_string(cluster_id) + "." + kind;
}

template <typename T>
bool BranchedNet<T>::is_head_param(const std::string& name) {
    return head_of(name) > 0;
}

template <typename T>
int BranchedNet<T>::head_of(const std::string& name) {
    if (name.rfind("fc7_", 0) != 0 && name.rfind("fc8_", 0) != 0) return 0;
    const auto dot = name.find('.');
    try {
        return std::stoi(name.substr(4, dot - 4));
    } catch (const std::exception&) {
        return 0;
    }
}

template <typename T>
void BranchedNet<T>::init_he_uniform(std::uint64_t seed) {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& t = params_.tensor(i);
        const auto& name = params_.name(i);
        if (name.ends_with(".bias")) {
            std::fill(t.data.begin(), t.data.end(), T(0));
            continue;
        }
        // fan-in = everything but the leading output dimension
        const std::size_t fan_in = t.numel() / static_cast<std::size_t>(t.shape[0]);
        const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
        // heads hash their own name so the trunk stream is independent of K
        const std::uint32_t stream_index =
            is_head_param(name) ? 0x8000'0000u | static_cast<std::uint32_t>(fnv1a64(name) & 0x7fff'ffffu)
                                : static_cast<std::uint32_t>(i);
        RngStream rng(seed, streams::kInit, stream_index);
        for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
    }
}

template <typename T>
template <typename U>
BranchedNet<U> BranchedNet<T>::cast() const {
    BranchedNet<U> out(cfg_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto& src = params_.tensor(i).data;
        auto& dst = out.params().tensor(i).data;
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = static_cast<U>(src[j]);
    }
    return out;
}

// ---------------------------------------------------------------- kernels

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapM = Eigen::Map<const RowMat<T>>;
template <typename T>
using CMapV = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

struct ConvGeom {
    int n, c, h, w;       // input, C x N x H x W
    int k, stride, pad;
    int o, oh, ow;        // output
    int rows() const { return c * k * k; }
    int cols() const { return n * oh * ow; }
};

template <typename T>
void im2col(const T* x, const ConvGeom& g, T* col) {
    const std::size_t ncols = static_cast<std::size_t>(g.cols());
    for (int c = 0; c < g.c; ++c)
        for (int ki = 0; ki < g.k; ++ki)
            for (int kj = 0; kj < g.k; ++kj) {
                T* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * ncols;
                for (int n = 0; n < g.n; ++n) {
                    const T* plane = x + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
                    for (int oh = 0; oh < g.oh; ++oh) {
                        const int ih = oh * g.stride - g.pad + ki;
                        T* dst = row + (static_cast<std::size_t>(n) * g.oh + oh) * g.ow;
                        if (ih < 0 || ih >= g.h) {
                            std::fill(dst, dst + g.ow, T(0));
                            continue;
                        }
                        const T* src = plane + static_cast<std::size_t>(ih) * g.w;
                        for (int ow = 0; ow < g.ow; ++ow) {
                            const int iw = ow * g.stride - g.pad + kj;
                            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
                        }
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, const ConvGeom& g, T* dx) {
    const std::size_t ncols = static_cast<std::size_t>(g.cols());
    for (int c = 0; c < g.c; ++c)
        for (int ki = 0; ki < g.k; ++ki)
            for (int kj = 0; kj < g.k; ++kj) {
                const T* row = col + static_cast<std::size_t>((c * g.k + ki) * g.k + kj) * ncols;
                for (int n = 0; n < g.n; ++n) {
                    T* plane = dx + (static_cast<std::size_t>(c) * g.n + n) * g.h * g.w;
                    for (int oh = 0; oh < g.oh; ++oh) {
                        const int ih = oh * g.stride - g.pad + ki;
                        if (ih < 0 || ih >= g.h) continue;
                        const T* src = row + (static_cast<std::size_t>(n) * g.oh + oh) * g.ow;
                        T* dst = plane + static_cast<std::size_t>(ih) * g.w;
                        for (int ow = 0; ow < g.ow; ++ow) {
                            const int iw = ow * g.stride - g.pad + kj;
                            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
                        }
                    }
                }
            }
}

template <typename T>
ConvGeom conv_geom(const BranchedNet<T>& net, int layer, int n) {
    const auto& s = net.shapes();
    const FeatureShape in = layer == 0 ? s.input : s.conv[static_cast<std::size_t>(layer - 1)];
    const auto& spec = net.config().conv[static_cast<std::size_t>(layer)];
    const auto& out = s.conv[static_cast<std::size_t>(layer)];
    return {n, in.c, in.h, in.w, spec.kernel, spec.stride, spec.padding(), out.c, out.h, out.w};
}

std::string conv_name(int layer, const char* kind) { return "conv" + std::to_string(layer + 1) + "." + kind; }

template <typename T>
void relu_inplace(std::vector<T>& v) {
    for (auto& x : v) x = x > T(0) ? x : T(0);
}

// dz = dy masked by the post-activation being positive
template <typename T>
void relu_backward(const std::vector<T>& post, T* grad) {
    for (std::size_t i = 0; i < post.size(); ++i)
        if (!(post[i] > T(0))) grad[i] = T(0);
}

// Plain loops: Eigen's vectorized reductions peel by address, which makes
// results depend on buffer alignment.
template <typename T>
void add_col_sums(const T* m, int rows, int cols, T* out) {
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) out[c] += m[static_cast<std::size_t>(r) * cols + c];
}

template <typename T>
void add_row_sums(const T* m, int rows, int cols, T* out) {
    for (int r = 0; r < rows; ++r) {
        const T* row = m + static_cast<std::size_t>(r) * cols;
        T acc = T(0);
        for (int c = 0; c < cols; ++c) acc += row[c];
        out[r] += acc;
    }
}

void check_cluster(int cluster_id, int K) {
    if (cluster_id < 1 || cluster_id > K)
        throw InvalidInput("cluster id " + std::to_string(cluster_id) + " outside [1, " + std::to_string(K) + "]");
}

}  // namespace

template <typename T>
std::vector<Angles> forward(const BranchedNet<T>& net, const BatchView<T>& batch, int cluster_id, Workspace<T>& ws) {
    const auto& cfg = net.config();
    const auto& s = net.shapes();
    const auto& P = net.params();
    check_cluster(cluster_id, cfg.K);
    const int n = batch.n;
    if (n < 1) throw InvalidInput("forward: empty batch");
    if (batch.pixels.size() != static_cast<std::size_t>(n) * s.input.numel())
        throw InvalidInput("forward: pixel buffer does not match " + std::to_string(n) + "x" +
                           std::to_string(s.input.c) + "x" + std::to_string(s.input.h) + "x" +
                           std::to_string(s.input.w));
    if (cfg.head_pose_inputs && batch.head.size() != static_cast<std::size_t>(n))
        throw InvalidInput("forward: head pose count does not match batch");
    ws.n = n;

    // N x C x H x W -> C x N x H x W
    const std::size_t hw = static_cast<std::size_t>(s.input.h) * s.input.w;
    ws.input.resize(static_cast<std::size_t>(n) * s.input.numel());
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < s.input.c; ++c)
            std::copy_n(batch.pixels.data() + (static_cast<std::size_t>(b) * s.input.c + c) * hw, hw,
                        ws.input.data() + (static_cast<std::size_t>(c) * n + b) * hw);

    const T* x = ws.input.data();
    for (int l = 0; l < 5; ++l) {
        const ConvGeom g = conv_geom(net, l, n);
        auto& col = ws.cols[static_cast<std::size_t>(l)];
        auto& y = ws.act[static_cast<std::size_t>(l)];
        col.resize(static_cast<std::size_t>(g.rows()) * g.cols());
        y.resize(static_cast<std::size_t>(g.o) * g.cols());
        im2col(x, g, col.data());
        CMapM<T> W(P.at(conv_name(l, "weight")).data.data(), g.o, g.rows());
        CMapV<T> bias(P.at(conv_name(l, "bias")).data.data(), g.o);
        MapM<T> Y(y.data(), g.o, g.cols());
        Y.noalias() = W * CMapM<T>(col.data(), g.rows(), g.cols());
        Y.colwise() += bias;
        relu_inplace(y);
        x = y.data();
    }

    // pool5
    const auto& c5 = s.conv[4];
    const auto& ps = s.pool;
    const int psize = cfg.pool.size, pstride = cfg.pool.stride;
    ws.pool.assign(static_cast<std::size_t>(ps.c) * n * ps.h * ps.w, T(0));
    ws.pool_arg.assign(ws.pool.size(), 0);
    for (int c = 0; c < ps.c; ++c)
        for (int b = 0; b < n; ++b) {
            const std::size_t in_off = (static_cast<std::size_t>(c) * n + b) * c5.h * c5.w;
            const std::size_t out_off = (static_cast<std::size_t>(c) * n + b) * ps.h * ps.w;
            for (int oh = 0; oh < ps.h; ++oh)
                for (int ow = 0; ow < ps.w; ++ow) {
                    T best = -std::numeric_limits<T>::infinity();
                    int arg = 0;
                    for (int i = 0; i < psize; ++i)
                        for (int j = 0; j < psize; ++j) {
                            const int idx = (oh * pstride + i) * c5.w + (ow * pstride + j);
                            const T v = ws.act[4][in_off + static_cast<std::size_t>(idx)];
                            if (v > best) {
                                best = v;
                                arg = idx;
                            }
                        }
                    ws.pool[out_off + static_cast<std::size_t>(oh * ps.w + ow)] = best;
                    ws.pool_arg[out_off + static_cast<std::size_t>(oh * ps.w + ow)] = arg;
                }
        }

    // flatten to N x (C*H*W)
    const int phw = ps.h * ps.w;
    ws.flat.resize(static_cast<std::size_t>(n) * s.flat_dim);
    for (int c = 0; c < ps.c; ++c)
        for (int b = 0; b < n; ++b)
            std::copy_n(ws.pool.data() + (static_cast<std::size_t>(c) * n + b) * phw, phw,
                        ws.flat.data() + static_cast<std::size_t>(b) * s.flat_dim + static_cast<std::size_t>(c) * phw);

    // fc6 (+ skip from globally pooled conv3)
    ws.fc6.resize(static_cast<std::size_t>(n) * cfg.fc6_dim);
    MapM<T> H6(ws.fc6.data(), n, cfg.fc6_dim);
    H6.noalias() = CMapM<T>(ws.flat.data(), n, s.flat_dim) *
                   CMapM<T>(P.at("fc6.weight").data.data(), cfg.fc6_dim, s.flat_dim).transpose();
    H6.rowwise() += CMapV<T>(P.at("fc6.bias").data.data(), cfg.fc6_dim).transpose();
    if (cfg.use_skip) {
        const auto& c3 = s.conv[2];
        const int hw3 = c3.h * c3.w;
        ws.skip_in.resize(static_cast<std::size_t>(n) * c3.c);
        for (int b = 0; b < n; ++b)
            for (int c = 0; c < c3.c; ++c) {
                const T* plane = ws.act[2].data() + (static_cast<std::size_t>(c) * n + b) * hw3;
                T sum = T(0);
                for (int i = 0; i < hw3; ++i) sum += plane[i];
                ws.skip_in[static_cast<std::size_t>(b) * c3.c + c] = sum / static_cast<T>(hw3);
            }
        H6.noalias() += CMapM<T>(ws.skip_in.data(), n, c3.c) *
                        CMapM<T>(P.at("skip.weight").data.data(), cfg.fc6_dim, c3.c).transpose();
        H6.rowwise() += CMapV<T>(P.at("skip.bias").data.data(), cfg.fc6_dim).transpose();
    }
    relu_inplace(ws.fc6);

    // routed head
    using Net = BranchedNet<T>;
    ws.fc7.resize(static_cast<std::size_t>(n) * cfg.fc7_dim);
    MapM<T> H7(ws.fc7.data(), n, cfg.fc7_dim);
    H7.noalias() = H6 * CMapM<T>(P.at(Net::head_param(7, cluster_id, "weight")).data.data(), cfg.fc7_dim,
                                 cfg.fc6_dim)
                            .transpose();
    H7.rowwise() += CMapV<T>(P.at(Net::head_param(7, cluster_id, "bias")).data.data(), cfg.fc7_dim).transpose();
    relu_inplace(ws.fc7);

    ws.fc8_in.resize(static_cast<std::size_t>(n) * s.fc8_in);
    for (int b = 0; b < n; ++b) {
        T* row = ws.fc8_in.data() + static_cast<std::size_t>(b) * s.fc8_in;
        std::copy_n(ws.fc7.data() + static_cast<std::size_t>(b) * cfg.fc7_dim, cfg.fc7_dim, row);
        if (cfg.head_pose_inputs) {
            row[cfg.fc7_dim] = static_cast<T>(batch.head[static_cast<std::size_t>(b)].pitch);
            row[cfg.fc7_dim + 1] = static_cast<T>(batch.head[static_cast<std::size_t>(b)].yaw);
        }
    }
    ws.out.resize(static_cast<std::size_t>(n) * 2);
    MapM<T> Y(ws.out.data(), n, 2);
    Y.noalias() = CMapM<T>(ws.fc8_in.data(), n, s.fc8_in) *
                  CMapM<T>(P.at(Net::head_param(8, cluster_id, "weight")).data.data(), 2, s.fc8_in).transpose();
    Y.rowwise() += CMapV<T>(P.at(Net::head_param(8, cluster_id, "bias")).data.data(), 2).transpose();

    std::vector<Angles> out(static_cast<std::size_t>(n));
    for (int b = 0; b < n; ++b)
        out[static_cast<std::size_t>(b)] = {static_cast<double>(ws.out[static_cast<std::size_t>(2 * b)]),
                                            static_cast<double>(ws.out[static_cast<std::size_t>(2 * b + 1)])};
    return out;
}

template <typename T>
Angles forward(const BranchedNet<T>& net, std::span<const T> pixels, const Angles& head, int cluster_id) {
    Workspace<T> ws;
    BatchView<T> b{1, pixels, std::span<const Angles>(&head, 1)};
    return forward(net, b, cluster_id, ws)[0];
}

template <typename T>
Gradients<T>::Gradients(const BranchedNet<T>& net) {
    for (std::size_t i = 0; i < net.params().size(); ++i)
        grads.add(net.params().name(i), net.params().tensor(i).shape);
    touched.assign(grads.size(), false);
}

template <typename T>
void Gradients<T>::zero() {
    grads.fill(T(0));
    std::fill(touched.begin(), touched.end(), false);
}

template <typename T>
double backward(const BranchedNet<T>& net, Workspace<T>& ws, std::span<const Angles> targets, int cluster_id,
                T weight, Gradients<T>& G, const BackwardOptions& opt) {
    const int n = ws.n;
    if (targets.size() != static_cast<std::size_t>(n)) throw InvalidInput("backward: target count does not match batch");
    double loss_sum = 0.0;
    std::vector<T> dout(static_cast<std::size_t>(n) * 2);
    for (int b = 0; b < n; ++b) {
        const double dp = static_cast<double>(ws.out[static_cast<std::size_t>(2 * b)]) - targets[static_cast<std::size_t>(b)].pitch;
        const double dy = static_cast<double>(ws.out[static_cast<std::size_t>(2 * b + 1)]) - targets[static_cast<std::size_t>(b)].yaw;
        loss_sum += 0.5 * (dp * dp + dy * dy);
        dout[static_cast<std::size_t>(2 * b)] = weight * static_cast<T>(dp);
        dout[static_cast<std::size_t>(2 * b + 1)] = weight * static_cast<T>(dy);
    }
    backward_from_output(net, ws, std::span<const T>(dout), cluster_id, G, opt);
    return loss_sum;
}

template <typename T>
void backward_from_output(const BranchedNet<T>& net, Workspace<T>& ws, std::span<const T> dout, int cluster_id,
                          Gradients<T>& G, const BackwardOptions& opt) {
    using Net = BranchedNet<T>;
    const auto& cfg = net.config();
    const auto& s = net.shapes();
    const auto& P = net.params();
    check_cluster(cluster_id, cfg.K);
    const int n = ws.n;
    if (dout.size() != static_cast<std::size_t>(n) * 2) throw InvalidInput("backward: output gradient does not match batch");

    auto grad = [&](const std::string& name) -> T* {
        const auto i = G.grads.index_of(name);
        G.touched[i] = true;
        return G.grads.tensor(i).data.data();
    };

    CMapM<T> dY(dout.data(), n, 2);

    // fc8
    MapM<T>(grad(Net::head_param(8, cluster_id, "weight")), 2, s.fc8_in).noalias() +=
        dY.transpose() * CMapM<T>(ws.fc8_in.data(), n, s.fc8_in);
    add_col_sums(dout.data(), n, 2, grad(Net::head_param(8, cluster_id, "bias")));
    std::vector<T> d8in(static_cast<std::size_t>(n) * s.fc8_in);
    MapM<T>(d8in.data(), n, s.fc8_in).noalias() =
        dY * CMapM<T>(P.at(Net::head_param(8, cluster_id, "weight")).data.data(), 2, s.fc8_in);

    // fc7 (head pose columns carry no parameters)
    std::vector<T> d7(static_cast<std::size_t>(n) * cfg.fc7_dim);
    for (int b = 0; b < n; ++b)
        std::copy_n(d8in.data() + static_cast<std::size_t>(b) * s.fc8_in, cfg.fc7_dim,
                    d7.data() + static_cast<std::size_t>(b) * cfg.fc7_dim);
    relu_backward(ws.fc7, d7.data());
    CMapM<T> dZ7(d7.data(), n, cfg.fc7_dim);
    MapM<T>(grad(Net::head_param(7, cluster_id, "weight")), cfg.fc7_dim, cfg.fc6_dim).noalias() +=
        dZ7.transpose() * CMapM<T>(ws.fc6.data(), n, cfg.fc6_dim);
    add_col_sums(d7.data(), n, cfg.fc7_dim, grad(Net::head_param(7, cluster_id, "bias")));
    if (!opt.trunk) return;

    std::vector<T> d6(static_cast<std::size_t>(n) * cfg.fc6_dim);
    MapM<T>(d6.data(), n, cfg.fc6_dim).noalias() =
        dZ7 * CMapM<T>(P.at(Net::head_param(7, cluster_id, "weight")).data.data(), cfg.fc7_dim, cfg.fc6_dim);
    relu_backward(ws.fc6, d6.data());
    CMapM<T> dZ6(d6.data(), n, cfg.fc6_dim);

    // fc6
    MapM<T>(grad("fc6.weight"), cfg.fc6_dim, s.flat_dim).noalias() +=
        dZ6.transpose() * CMapM<T>(ws.flat.data(), n, s.flat_dim);
    add_col_sums(d6.data(), n, cfg.fc6_dim, grad("fc6.bias"));
    std::vector<T> dflat(static_cast<std::size_t>(n) * s.flat_dim);
    MapM<T>(dflat.data(), n, s.flat_dim).noalias() =
        dZ6 * CMapM<T>(P.at("fc6.weight").data.data(), cfg.fc6_dim, s.flat_dim);

    // skip path into conv3 activations
    std::array<std::vector<T>, 5> dact;
    for (int l = 0; l < 5; ++l) dact[static_cast<std::size_t>(l)].assign(ws.act[static_cast<std::size_t>(l)].size(), T(0));
    if (cfg.use_skip) {
        const auto& c3 = s.conv[2];
        const int hw3 = c3.h * c3.w;
        MapM<T>(grad("skip.weight"), cfg.fc6_dim, c3.c).noalias() +=
            dZ6.transpose() * CMapM<T>(ws.skip_in.data(), n, c3.c);
        add_col_sums(d6.data(), n, cfg.fc6_dim, grad("skip.bias"));
        RowMat<T> dskip = dZ6 * CMapM<T>(P.at("skip.weight").data.data(), cfg.fc6_dim, c3.c);
        for (int c = 0; c < c3.c; ++c)
            for (int b = 0; b < n; ++b) {
                const T v = dskip(b, c) / static_cast<T>(hw3);
                T* plane = dact[2].data() + (static_cast<std::size_t>(c) * n + b) * hw3;
                for (int i = 0; i < hw3; ++i) plane[i] += v;
            }
    }

    // unflatten + unpool into conv5 activations
    const auto& ps = s.pool;
    const auto& c5 = s.conv[4];
    const int phw = ps.h * ps.w;
    for (int c = 0; c < ps.c; ++c)
        for (int b = 0; b < n; ++b) {
            const std::size_t off = (static_cast<std::size_t>(c) * n + b);
            const T* src = dflat.data() + static_cast<std::size_t>(b) * s.flat_dim + static_cast<std::size_t>(c) * phw;
            T* dst = dact[4].data() + off * c5.h * c5.w;
            for (int i = 0; i < phw; ++i) dst[ws.pool_arg[off * phw + static_cast<std::size_t>(i)]] += src[i];
        }

    // conv5 .. conv1
    std::vector<T> dcol;
    for (int l = 4; l >= 0; --l) {
        const ConvGeom g = conv_geom(net, l, n);
        auto& dy = dact[static_cast<std::size_t>(l)];
        relu_backward(ws.act[static_cast<std::size_t>(l)], dy.data());
        CMapM<T> dYc(dy.data(), g.o, g.cols());
        CMapM<T> col(ws.cols[static_cast<std::size_t>(l)].data(), g.rows(), g.cols());
        MapM<T>(grad(conv_name(l, "weight")), g.o, g.rows()).noalias() += dYc * col.transpose();
        add_row_sums(dy.data(), g.o, g.cols(), grad(conv_name(l, "bias")));
        if (l == 0) break;
        dcol.resize(static_cast<std::size_t>(g.rows()) * g.cols());
        MapM<T>(dcol.data(), g.rows(), g.cols()).noalias() =
            CMapM<T>(P.at(conv_name(l, "weight")).data.data(), g.o, g.rows()).transpose() * dYc;
        col2im_add(dcol.data(), g, dact[static_cast<std::size_t>(l - 1)].data());
    }
}

std::uint64_t flop_count(const NetConfig& cfg) {
    const NetShapes s = cfg.shapes();
    std::uint64_t macs = 0;
    FeatureShape in = s.input;
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& out = s.conv[i];
        const auto k = static_cast<std::uint64_t>(cfg.conv[i].kernel);
        macs += static_cast<std::uint64_t>(out.h) * out.w * out.c * in.c * k * k;
        in = out;
    }
    macs += static_cast<std::uint64_t>(s.flat_dim) * cfg.fc6_dim;
    if (cfg.use_skip) macs += static_cast<std::uint64_t>(s.conv[2].c) * cfg.fc6_dim;
    macs += static_cast<std::uint64_t>(cfg.fc6_dim) * cfg.fc7_dim;
    macs += static_cast<std::uint64_t>(s.fc8_in) * 2;
    return macs;
}

#define GAZENET_INSTANTIATE(T)                                                                              \
    template struct Tensor<T>;                                                                              \
    template class ParamStore<T>;                                                                           \
    template class BranchedNet<T>;                                                                          \
    template struct Gradients<T>;                                                                           \
    template std::vector<Angles> forward<T>(const BranchedNet<T>&, const BatchView<T>&, int, Workspace<T>&); \
    template Angles forward<T>(const BranchedNet<T>&, std::span<const T>, const Angles&, int);              \
    template double backward<T>(const BranchedNet<T>&, Workspace<T>&, std::span<const Angles>, int, T,      \
                                Gradients<T>&, const BackwardOptions&);                                     \
    template void backward_from_output<T>(const BranchedNet<T>&, Workspace<T>&, std::span<const T>, int,    \
                                          Gradients<T>&, const BackwardOptions&);

GAZENET_INSTANTIATE(float)
GAZENET_INSTANTIATE(double)
#undef GAZENET_INSTANTIATE

template BranchedNet<double> BranchedNet<float>::cast<double>() const;
template BranchedNet<float> BranchedNet<double>::cast<float>() const;
template BranchedNet<float> BranchedNet<float>::cast<float>() const;
template BranchedNet<double> BranchedNet<double>::cast<double>() const;

}  // namespace gazenet
