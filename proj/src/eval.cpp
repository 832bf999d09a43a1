#include "gazenet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "gazenet/errors.hpp"
#include "gazenet/hash.hpp"
#include "gazenet/json_io.hpp"
#include "gazenet/nnet_io.hpp"
#include "gazenet/rng.hpp"

namespace gazenet {

namespace {

struct Acc {
    std::size_t n = 0;
    double sum = 0.0;
    void add(double v) {
        ++n;
        sum += v;
    }
    Aggregate get() const { return {n, n ? sum / static_cast<double>(n) : 0.0}; }
};

std::map<int, Aggregate> collapse(const std::map<int, Acc>& m) {
    std::map<int, Aggregate> out;
    for (const auto& [k, a] : m) out[k] = a.get();
    return out;
}

int cluster_for(const Sample& s, const ClusterModel* model) {
    if (model) return model->assign(s.head);
    return s.cluster.value_or(1);
}

const char* protocol_name(ProtocolSpec::Kind k) {
    switch (k) {
        case ProtocolSpec::Kind::Holdout: return "holdout";
        case ProtocolSpec::Kind::Loso: return "loso";
        case ProtocolSpec::Kind::KFold: return "kfold";
        case ProtocolSpec::Kind::PersonSpecific: return "person_specific";
    }
    return "?";
}

void apply_filter(EvalReport& r, const EvalOptions& opts) {
    if (!opts.exclude_above_deg) return;
    for (auto& rec : r.records) rec.excluded = rec.error_deg > *opts.exclude_above_deg;
    r.meta["exclude_above_deg"] = std::to_string(*opts.exclude_above_deg);
}

}  // namespace

void EvalReport::finalize() {
    Acc all;
    std::map<int, Acc> c, s, f;
    for (const auto& r : records) {
        if (r.excluded) continue;
        all.add(r.error_deg);
        c[r.cluster].add(r.error_deg);
        s[r.subject].add(r.error_deg);
        f[r.fold].add(r.error_deg);
    }
    overall_mean = all.get().mean;
    per_cluster = collapse(c);
    per_subject = collapse(s);
    per_fold = collapse(f);
    subject_mean = 0.0;
    for (const auto& [_, a] : per_subject) subject_mean += a.mean;
    if (!per_subject.empty()) subject_mean /= static_cast<double>(per_subject.size());
}

void EvalReport::append(const EvalReport& other) {
    records.insert(records.end(), other.records.begin(), other.records.end());
    finalize();
}

EvalReport evaluate(const Predictor& predictor, const Dataset& ds, const ClusterModel* model, const EvalOptions& opts) {
    EvalReport r;
    r.K = model ? model->K() : 1;
    r.records.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Sample& s = ds.samples[i];
        SampleRecord rec;
        rec.id = s.id;
        rec.subject = s.subject;
        rec.cluster = cluster_for(s, model);
        rec.label = s.gaze;
        rec.pred = predictor(s, ds.images[i], rec.cluster);
        rec.error_deg = angular_error(rec.pred, rec.label);
        r.records.push_back(std::move(rec));
    }
    apply_filter(r, opts);
    r.finalize();
    return r;
}

EvalReport evaluate(const BranchedNet<float>& net, const Dataset& ds, const ClusterModel* model,
                    const EvalOptions& opts) {
    const PreparedData data = prepare(ds, net.config(), model, opts.hist_eq);
    std::vector<std::size_t> pos(ds.size());
    std::iota(pos.begin(), pos.end(), std::size_t{0});
    const std::vector<Angles> preds = predict(net, data, pos);

    EvalReport r;
    r.K = model ? model->K() : net.config().K;
    r.records.reserve(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const Sample& s = ds.samples[i];
        SampleRecord rec;
        rec.id = s.id;
        rec.subject = s.subject;
        rec.cluster = data.cluster[i];
        rec.label = s.gaze;
        rec.pred = preds[i];
        rec.error_deg = angular_error(rec.pred, rec.label);
        r.records.push_back(std::move(rec));
    }
    apply_filter(r, opts);
    r.finalize();
    return r;
}

std::string ExperimentConfig::hash() const {
    json j{{"net", net},
           {"branched", branched},
           {"train", train},
           {"cluster", cluster},
           {"fixed_centroids", fixed_centroids},
           {"init_model", init_model ? init_model->string() : std::string()},
           {"seed", seed},
           {"hist_eq", eval.hist_eq}};
    return hex64(fnv1a64(j.dump()));
}

ClusterModel fold_clusters(const Dataset& train, const ExperimentConfig& exp) {
    if (!exp.fixed_centroids.empty()) return ClusterModel::from_centroids(exp.fixed_centroids);
    std::vector<Angles> poses;
    poses.reserve(train.size());
    for (const auto& s : train.samples) poses.push_back(s.head);
    return fit_kmeans(poses, exp.cluster).model;
}

EvalReport train_and_evaluate(const Dataset& train, const Dataset& test, const ExperimentConfig& exp, int fold) {
    if (train.empty() || test.empty()) throw ProtocolError("empty train or test split in fold " + std::to_string(fold));
    const ClusterModel model = fold_clusters(train, exp);

    NetConfig nc = exp.net;
    nc.K = exp.branched ? model.K() : 1;
    BranchedNet<float> net(nc);
    net.init_he_uniform(exp.seed);
    if (exp.init_model) partial_load(net, *exp.init_model);

    TrainConfig tc = exp.train;
    tc.hist_eq = tc.hist_eq || exp.eval.hist_eq;
    train_epochs(net, train, &model, tc);

    EvalOptions eo = exp.eval;
    eo.hist_eq = tc.hist_eq;
    EvalReport r = evaluate(net, test, &model, eo);
    for (auto& rec : r.records) rec.fold = fold;
    r.K = model.K();
    r.finalize();
    return r;
}

std::vector<FoldSplit> protocol_splits(const Dataset& ds, const ProtocolSpec& spec, std::uint64_t seed) {
    using Kind = ProtocolSpec::Kind;
    const std::vector<int> subjects = ds.subjects();
    std::vector<FoldSplit> out;

    auto by_subject_groups = [&](const std::vector<std::set<int>>& test_groups) {
        for (const auto& g : test_groups) {
            FoldSplit f;
            for (std::size_t i = 0; i < ds.size(); ++i)
                (g.count(ds.samples[i].subject) ? f.test : f.train).push_back(i);
            out.push_back(std::move(f));
        }
    };

    switch (spec.kind) {
        case Kind::Holdout: {
            if (spec.test_subjects.empty()) throw ProtocolError("holdout: no test subjects given");
            std::set<int> test(spec.test_subjects.begin(), spec.test_subjects.end());
            for (int t : test)
                if (!std::binary_search(subjects.begin(), subjects.end(), t))
                    throw ProtocolError("holdout: test subject " + std::to_string(t) + " not in dataset");
            if (test.size() >= subjects.size()) throw ProtocolError("holdout: no training subjects left");
            by_subject_groups({test});
            break;
        }
        case Kind::Loso: {
            if (subjects.size() < 2) throw ProtocolError("loso: needs at least 2 subjects");
            std::vector<std::set<int>> groups;
            for (int s : subjects) groups.push_back({s});
            by_subject_groups(groups);
            break;
        }
        case Kind::KFold: {
            if (spec.folds < 2) throw ProtocolError("kfold: folds must be >= 2");
            if (spec.repeats < 1) throw ProtocolError("kfold: repeats must be >= 1");
            if (static_cast<int>(subjects.size()) < spec.folds)
                throw ProtocolError("kfold: fewer subjects than folds");
            for (int r = 0; r < spec.repeats; ++r) {
                std::vector<int> order = subjects;
                RngStream rng(seed, streams::kSplit, static_cast<std::uint32_t>(r));
                shuffle(order.begin(), order.end(), rng);
                std::vector<std::set<int>> groups(spec.folds);
                for (std::size_t i = 0; i < order.size(); ++i) groups[i % spec.folds].insert(order[i]);
                by_subject_groups(groups);
            }
            break;
        }
        case Kind::PersonSpecific: {
            if (!(spec.train_frac > 0.0 && spec.train_frac < 1.0))
                throw ProtocolError("person_specific: train_frac must be in (0, 1)");
            FoldSplit f;
            for (int s : subjects) {
                std::vector<std::size_t> idx;
                for (std::size_t i = 0; i < ds.size(); ++i)
                    if (ds.samples[i].subject == s) idx.push_back(i);
                const auto n_test = static_cast<std::size_t>(
                    std::llround(static_cast<double>(idx.size()) * (1.0 - spec.train_frac)));
                if (n_test == 0 || n_test >= idx.size())
                    throw ProtocolError("person_specific: subject " + std::to_string(s) +
                                        " has too few samples to split");
                RngStream rng(seed, streams::kSplit, 1000000u + static_cast<std::uint32_t>(s));
                shuffle(idx.begin(), idx.end(), rng);
                f.test.insert(f.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
                f.train.insert(f.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
            }
            std::sort(f.train.begin(), f.train.end());
            std::sort(f.test.begin(), f.test.end());
            out.push_back(std::move(f));
            break;
        }
    }
    return out;
}

EvalReport run_protocol(const Dataset& ds, const ExperimentConfig& exp, const ProtocolSpec& spec) {
    const auto splits = protocol_splits(ds, spec, exp.seed);
    EvalReport total;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        const EvalReport r =
            train_and_evaluate(ds.subset(splits[f].train), ds.subset(splits[f].test), exp, static_cast<int>(f));
        total.records.insert(total.records.end(), r.records.begin(), r.records.end());
        total.K = r.K;
    }
    total.protocol = protocol_name(spec.kind);
    total.config_hash = exp.hash();
    total.seeds = {exp.seed, exp.train.seed, exp.cluster.seed};
    total.meta["folds"] = std::to_string(splits.size());
    total.meta["branched"] = exp.branched ? "true" : "false";
    total.meta["head_pose_inputs"] = exp.net.head_pose_inputs ? "true" : "false";
    total.meta["cluster_source"] = exp.fixed_centroids.empty() ? "kmeans_per_fold" : "fixed";
    total.finalize();
    return total;
}

EvalReport holdout_protocol(const Dataset& ds, const std::vector<int>& test_subjects, const ExperimentConfig& exp) {
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::Holdout;
    spec.test_subjects = test_subjects;
    return run_protocol(ds, exp, spec);
}

EvalReport loso_protocol(const Dataset& ds, const ExperimentConfig& exp) {
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::Loso;
    return run_protocol(ds, exp, spec);
}

EvalReport kfold_subjects_protocol(const Dataset& ds, int folds, int repeats, const ExperimentConfig& exp) {
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::KFold;
    spec.folds = folds;
    spec.repeats = repeats;
    return run_protocol(ds, exp, spec);
}

EvalReport person_specific_protocol(const Dataset& ds, double train_frac, const ExperimentConfig& exp) {
    ProtocolSpec spec;
    spec.kind = ProtocolSpec::Kind::PersonSpecific;
    spec.train_frac = train_frac;
    return run_protocol(ds, exp, spec);
}

EvalReport cross_dataset_protocol(const Dataset& source, const Dataset& target, const ExperimentConfig& exp,
                                  const std::optional<TargetingSpec>& targeting, const Dataset* reference) {
    EvalReport r;
    if (targeting) {
        TargetingReport tr;
        const Dataset kept = target_dataset(source, reference ? *reference : target, *targeting, exp.seed, &tr);
        r = train_and_evaluate(kept, target, exp, 0);
        r.meta["targeting_kept"] = std::to_string(tr.kept);
        r.meta["targeting_source"] = std::to_string(tr.source);
    } else {
        r = train_and_evaluate(source, target, exp, 0);
    }
    r.protocol = targeting ? "cross_dataset_targeted" : "cross_dataset";
    r.config_hash = exp.hash();
    r.seeds = {exp.seed, exp.train.seed, exp.cluster.seed};
    return r;
}

AblationGrid ablation_grid(const Dataset& ds, const ExperimentConfig& exp, const ProtocolSpec& spec) {
    AblationGrid g;
    for (int cell = 0; cell < 4; ++cell) {
        ExperimentConfig e = exp;
        e.net.head_pose_inputs = cell >= 2;
        e.branched = cell % 2 == 1;
        g.cells[cell] = run_protocol(ds, e, spec);
    }
    return g;
}

std::string report_summary_csv(const EvalReport& r) {
    std::ostringstream os;
    char buf[64];
    auto row = [&](const char* scope, const std::string& key, const Aggregate& a) {
        std::snprintf(buf, sizeof buf, "%.6f", a.mean);
        os << scope << ',' << key << ',' << a.count << ',' << buf << '\n';
    };
    os << "scope,key,count,mean_error_deg\n";
    std::size_t n = 0;
    for (const auto& rec : r.records) n += rec.excluded ? 0 : 1;
    row("overall", "all", {n, r.overall_mean});
    row("overall", "subject_mean", {r.per_subject.size(), r.subject_mean});
    for (const auto& [k, a] : r.per_cluster) row("cluster", std::to_string(k), a);
    for (const auto& [k, a] : r.per_subject) row("subject", std::to_string(k), a);
    for (const auto& [k, a] : r.per_fold) row("fold", std::to_string(k), a);
    return os.str();
}

std::string report_records_csv(const EvalReport& r) {
    std::ostringstream os;
    os << "id,subject,cluster,fold,pred_pitch,pred_yaw,label_pitch,label_yaw,error_deg,excluded\n";
    char buf[256];
    for (const auto& rec : r.records) {
        std::snprintf(buf, sizeof buf, "%d,%d,%d,%.9f,%.9f,%.9f,%.9f,%.6f,%d", rec.subject, rec.cluster, rec.fold,
                      rec.pred.pitch, rec.pred.yaw, rec.label.pitch, rec.label.yaw, rec.error_deg,
                      rec.excluded ? 1 : 0);
        os << rec.id << ',' << buf << '\n';
    }
    return os.str();
}

std::string ablation_table_csv(const AblationGrid& g) {
    int K = 0;
    for (const auto& c : g.cells)
        for (const auto& [k, _] : c.per_cluster) K = std::max(K, k);
    std::ostringstream os;
    os << "input,fc7_8";
    for (int k = 1; k <= K; ++k) os << ",cluster_" << k;
    os << ",overall\n";
    char buf[32];
    for (int cell = 0; cell < 4; ++cell) {
        const auto& r = g.cells[cell];
        os << AblationGrid::kInput[cell] << ',' << AblationGrid::kHeads[cell];
        for (int k = 1; k <= K; ++k) {
            os << ',';
            if (auto it = r.per_cluster.find(k); it != r.per_cluster.end()) {
                std::snprintf(buf, sizeof buf, "%.3f", it->second.mean);
                os << buf;
            }
        }
        std::snprintf(buf, sizeof buf, "%.3f", r.overall_mean);
        os << ',' << buf << '\n';
    }
    return os.str();
}

}  // namespace gazenet
