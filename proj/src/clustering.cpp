#include "gazenet/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "gazenet/errors.hpp"
#include "gazenet/rng.hpp"

namespace gazenet {

namespace {

double cos_dist(const UnitVec3& a, const UnitVec3& b) { return 1.0 - a.dot(b); }

UnitVec3 normalized(double x, double y, double z) {
    const double n = std::sqrt(x * x + y * y + z * z);
    return {x / n, y / n, z / n};
}

int nearest(const std::vector<UnitVec3>& centroids, const UnitVec3& v) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids.size(); ++k) {
        const double d = cos_dist(v, centroids[k]);
        if (d < best_d) {  // strict: ties stay with the lower index
            best_d = d;
            best = static_cast<int>(k);
        }
    }
    return best;
}

std::size_t count_distinct(std::vector<UnitVec3> pts) {
    auto key = [](const UnitVec3& v) { return std::tie(v.x, v.y, v.z); };
    std::sort(pts.begin(), pts.end(), [&](const UnitVec3& a, const UnitVec3& b) { return key(a) < key(b); });
    auto last = std::unique(pts.begin(), pts.end(),
                            [&](const UnitVec3& a, const UnitVec3& b) { return key(a) == key(b); });
    return static_cast<std::size_t>(last - pts.begin());
}

struct RestartResult {
    std::vector<UnitVec3> centroids;
    std::vector<int> assignment;  // 0-based
    double objective = 0.0;
    std::vector<double> trace;
};

std::vector<UnitVec3> seed_plus_plus(const std::vector<UnitVec3>& pts, int K, RngStream& rng) {
    std::vector<UnitVec3> centers;
    centers.push_back(pts[rng.below(pts.size())]);
    std::vector<double> dist(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) dist[i] = std::max(0.0, cos_dist(pts[i], centers[0]));
    while (static_cast<int>(centers.size()) < K) {
        double total = 0.0;
        for (double d : dist) total += d;
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.below(pts.size());
        } else {
            double u = rng.uniform() * total;
            pick = pts.size() - 1;
            for (std::size_t i = 0; i < pts.size(); ++i) {
                if (dist[i] <= 0.0) continue;
                if (u < dist[i]) {
                    pick = i;
                    break;
                }
                u -= dist[i];
            }
            // guard against rounding landing on an existing center
            while (dist[pick] <= 0.0 && pick > 0) --pick;
        }
        centers.push_back(pts[pick]);
        for (std::size_t i = 0; i < pts.size(); ++i)
            dist[i] = std::min(dist[i], std::max(0.0, cos_dist(pts[i], centers.back())));
    }
    return centers;
}

template <class AssignAll>
void lloyd_steps(const std::vector<UnitVec3>& pts, std::vector<UnitVec3>& centroids, RestartResult& r,
                 std::vector<int>& next, int& iter, int max_iter, AssignAll& assign_all) {
    const std::size_t n = pts.size();
    const std::size_t K = centroids.size();
    for (; iter < max_iter; ++iter) {
        std::vector<std::array<double, 3>> sums(K, {0, 0, 0});
        std::vector<std::size_t> counts(K, 0);
        for (std::size_t i = 0; i < n; ++i) {
            auto k = static_cast<std::size_t>(r.assignment[i]);
            sums[k][0] += pts[i].x;
            sums[k][1] += pts[i].y;
            sums[k][2] += pts[i].z;
            ++counts[k];
        }
        for (std::size_t k = 0; k < K; ++k) {
            const double norm = std::sqrt(sums[k][0] * sums[k][0] + sums[k][1] * sums[k][1] + sums[k][2] * sums[k][2]);
            if (counts[k] > 0 && norm > 1e-12) centroids[k] = normalized(sums[k][0], sums[k][1], sums[k][2]);
        }
        // empty clusters are reseeded at the point farthest from its centroid
        for (std::size_t k = 0; k < K; ++k) {
            if (counts[k] > 0) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = cos_dist(pts[i], centroids[static_cast<std::size_t>(r.assignment[i])]);
                if (d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            centroids[k] = pts[far];
            r.assignment[far] = static_cast<int>(k);
        }
        const double obj = assign_all(next);
        const bool changed = next != r.assignment;
        r.assignment.swap(next);
        r.objective = obj;
        r.trace.push_back(obj);
        if (!changed) {
            ++iter;
            break;
        }
    }
}

// Single-point transfers between clusters, applied when Lloyd has converged;
// returns whether any point moved.
bool transfer_pass(const std::vector<UnitVec3>& pts, std::vector<UnitVec3>& centroids, RestartResult& r) {
    const std::size_t K = centroids.size();
    std::vector<std::array<double, 3>> sums(K, {0, 0, 0});
    std::vector<std::size_t> counts(K, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto k = static_cast<std::size_t>(r.assignment[i]);
        sums[k][0] += pts[i].x;
        sums[k][1] += pts[i].y;
        sums[k][2] += pts[i].z;
        ++counts[k];
    }
    auto len = [](const std::array<double, 3>& s) { return std::sqrt(s[0] * s[0] + s[1] * s[1] + s[2] * s[2]); };
    bool moved = false;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto a = static_cast<std::size_t>(r.assignment[i]);
        if (counts[a] < 2) continue;
        const std::array<double, 3> x{pts[i].x, pts[i].y, pts[i].z};
        const std::array<double, 3> a_less{sums[a][0] - x[0], sums[a][1] - x[1], sums[a][2] - x[2]};
        const double keep = len(sums[a]) - len(a_less);
        std::size_t best = a;
        double best_delta = -1e-12;
        for (std::size_t b = 0; b < K; ++b) {
            if (b == a) continue;
            const std::array<double, 3> b_more{sums[b][0] + x[0], sums[b][1] + x[1], sums[b][2] + x[2]};
            const double delta = keep + len(sums[b]) - len(b_more);
            if (delta < best_delta) {
                best_delta = delta;
                best = b;
            }
        }
        if (best == a) continue;
        for (int c = 0; c < 3; ++c) {
            sums[a][static_cast<std::size_t>(c)] -= x[static_cast<std::size_t>(c)];
            sums[best][static_cast<std::size_t>(c)] += x[static_cast<std::size_t>(c)];
        }
        --counts[a];
        ++counts[best];
        r.assignment[i] = static_cast<int>(best);
        moved = true;
    }
    if (!moved) return false;
    double obj = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        centroids[k] = normalized(sums[k][0], sums[k][1], sums[k][2]);
        obj += static_cast<double>(counts[k]) - len(sums[k]);
    }
    r.objective = obj;
    r.trace.push_back(obj);
    return true;
}

RestartResult lloyd(const std::vector<UnitVec3>& pts, std::vector<UnitVec3> centroids, int max_iter) {
    const std::size_t n = pts.size();
    const std::size_t K = centroids.size();
    RestartResult r;
    r.assignment.assign(n, -1);

    auto assign_all = [&](std::vector<int>& out) {
        double obj = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            out[i] = nearest(centroids, pts[i]);
            obj += cos_dist(pts[i], centroids[static_cast<std::size_t>(out[i])]);
        }
        return obj;
    };

    std::vector<int> next(n);
    r.objective = assign_all(r.assignment);
    r.trace.push_back(r.objective);
    int iter = 0;
    for (;;) {
        lloyd_steps(pts, centroids, r, next, iter, max_iter, assign_all);
        if (iter >= max_iter || !transfer_pass(pts, centroids, r)) break;
    }
    r.centroids = std::move(centroids);
    return r;
}

}  // namespace

int ClusterModel::assign(const UnitVec3& v) const {
    if (centroids.empty()) throw InvalidInput("assign: cluster model has no centroids");
    return nearest(centroids, v) + 1;
}

int ClusterModel::assign(const Angles& pose) const { return assign(angles_to_vec(pose)); }

Angles ClusterModel::centroid_angles(int cluster_id) const {
    if (cluster_id < 1 || cluster_id > K()) throw InvalidInput("cluster id out of range");
    return vec_to_angles(centroids[static_cast<std::size_t>(cluster_id - 1)]);
}

ClusterModel ClusterModel::from_centroids(std::span<const Angles> centers) {
    ClusterModel m;
    for (const auto& c : centers) m.centroids.push_back(angles_to_vec(c));
    m.validate();
    return m;
}

void ClusterModel::validate() const {
    if (centroids.empty()) throw InvalidInput("cluster model: K must be >= 1");
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        if (std::abs(centroids[i].norm() - 1.0) > 1e-9) throw InvalidInput("cluster model: centroid is not unit norm");
        for (std::size_t j = 0; j < i; ++j)
            if (centroids[i].x == centroids[j].x && centroids[i].y == centroids[j].y && centroids[i].z == centroids[j].z)
                throw InvalidInput("cluster model: duplicate centroids");
    }
}

KMeansResult fit_kmeans(std::span<const Angles> poses, const KMeansOptions& opt) {
    return fit_kmeans(poses, opt, nullptr);
}

KMeansResult fit_kmeans(std::span<const Angles> poses, const KMeansOptions& opt,
                        std::vector<std::vector<double>>* all_traces) {
    if (poses.empty()) throw InvalidInput("fit_kmeans: no poses");
    if (opt.K < 1) throw InvalidInput("fit_kmeans: K must be >= 1");
    if (opt.max_iter < 0 || opt.n_restarts < 1) throw InvalidInput("fit_kmeans: bad iteration settings");
    std::vector<UnitVec3> pts;
    pts.reserve(poses.size());
    for (const auto& p : poses) pts.push_back(angles_to_vec(p));
    if (static_cast<std::size_t>(opt.K) > count_distinct(pts))
        throw InvalidInput("fit_kmeans: K=" + std::to_string(opt.K) + " exceeds the number of distinct poses");

    std::optional<RestartResult> best;
    int best_idx = 0;
    for (int r = 0; r < opt.n_restarts; ++r) {
        RngStream rng(opt.seed, streams::kKmeans, static_cast<std::uint32_t>(r));
        auto res = lloyd(pts, seed_plus_plus(pts, opt.K, rng), opt.max_iter);
        if (all_traces) all_traces->push_back(res.trace);
        if (!best || res.objective < best->objective) {
            best = std::move(res);
            best_idx = r;
        }
    }
    KMeansResult out;
    out.model.centroids = best->centroids;
    out.objective = best->objective;
    out.objective_trace = best->trace;
    out.best_restart = best_idx;
    out.assignment.reserve(best->assignment.size());
    for (int a : best->assignment) out.assignment.push_back(a + 1);
    return out;
}

double kmeans_objective(std::span<const Angles> poses, const ClusterModel& model) {
    double obj = 0.0;
    for (const auto& p : poses) {
        const auto v = angles_to_vec(p);
        obj += cos_dist(v, model.centroids[static_cast<std::size_t>(model.assign(v) - 1)]);
    }
    return obj;
}

std::vector<ClusterStats> cluster_stats(const ClusterModel& model, const Dataset& ds) {
    model.validate();
    const auto K = static_cast<std::size_t>(model.K());
    std::vector<ClusterStats> out(K);
    std::vector<std::array<double, 2>> sum(K, {0, 0});
    std::vector<std::vector<std::size_t>> members(K);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const auto& s = ds.samples[i];
        const int id = s.cluster ? *s.cluster : model.assign(s.head);
        if (id < 1 || id > model.K()) throw InvalidInput("cluster_stats: sample " + s.id + " has out-of-range cluster");
        members[static_cast<std::size_t>(id - 1)].push_back(i);
    }
    for (std::size_t k = 0; k < K; ++k) {
        ClusterStats& st = out[k];
        st.cluster_id = static_cast<int>(k + 1);
        st.head_centroid = model.centroid_angles(st.cluster_id);
        st.count = members[k].size();
        st.histogram.assign(static_cast<std::size_t>(kStatsBins * kStatsBins), 0);
        if (st.count == 0) continue;
        double mp = 0, my = 0;
        for (auto i : members[k]) {
            mp += ds.samples[i].gaze.pitch;
            my += ds.samples[i].gaze.yaw;
        }
        const double n = static_cast<double>(st.count);
        mp /= n;
        my /= n;
        double cpp = 0, cpy = 0, cyy = 0;
        for (auto i : members[k]) {
            const auto& g = ds.samples[i].gaze;
            cpp += (g.pitch - mp) * (g.pitch - mp);
            cpy += (g.pitch - mp) * (g.yaw - my);
            cyy += (g.yaw - my) * (g.yaw - my);
            auto bin = [](double rad) {
                const int b = static_cast<int>(std::floor((rad2deg(rad) + 90.0) / kStatsBinDeg));
                return std::clamp(b, 0, kStatsBins - 1);
            };
            ++st.histogram[static_cast<std::size_t>(bin(g.pitch) * kStatsBins + bin(g.yaw))];
        }
        st.gaze_mean = Angles{mp, my};
        st.gaze_cov = std::array<double, 4>{cpp / n, cpy / n, cpy / n, cyy / n};
    }
    return out;
}

std::string cluster_stats_csv(const std::vector<ClusterStats>& stats) {
    std::ostringstream os;
    os.precision(10);
    os << "cluster,count,head_pitch_deg,head_yaw_deg,gaze_pitch_mean_deg,gaze_yaw_mean_deg,"
          "gaze_cov_pp,gaze_cov_py,gaze_cov_yy\n";
    for (const auto& s : stats) {
        os << s.cluster_id << ',' << s.count << ',' << rad2deg(s.head_centroid.pitch) << ','
           << rad2deg(s.head_centroid.yaw) << ',';
        if (s.gaze_mean)
            os << rad2deg(s.gaze_mean->pitch) << ',' << rad2deg(s.gaze_mean->yaw) << ',' << (*s.gaze_cov)[0] << ','
               << (*s.gaze_cov)[1] << ',' << (*s.gaze_cov)[3] << '\n';
        else
            os << ",,,,\n";
    }
    return os.str();
}

}  // namespace gazenet
