#pragma once

#include <json.hpp>

#include "gazenet/clustering.hpp"
#include "gazenet/dataset.hpp"
#include "gazenet/eval.hpp"
#include "gazenet/nnet.hpp"
#include "gazenet/nnet_io.hpp"
#include "gazenet/synthcam.hpp"
#include "gazenet/targeting.hpp"
#include "gazenet/train.hpp"

// JSON bindings. Readers start from the target's current (default) value,
// so partial objects override only the keys they carry. Unknown keys are
// rejected: FormatError for data records, ConfigError for configs.
namespace gazenet {

using nlohmann::json;

void to_json(json& j, const Angles& a);
void from_json(const json& j, Angles& a);
void to_json(json& j, const UnitVec3& v);
void from_json(const json& j, UnitVec3& v);

void to_json(json& j, const Sample& s);
void from_json(const json& j, Sample& s);
void to_json(json& j, const DatasetManifest& m);
void from_json(const json& j, DatasetManifest& m);

void to_json(json& j, const ClusterModel& m);
void from_json(const json& j, ClusterModel& m);
void to_json(json& j, const ClusterStats& s);
void to_json(json& j, const KMeansOptions& o);
void from_json(const json& j, KMeansOptions& o);

void to_json(json& j, const SynthConfig& c);
void from_json(const json& j, SynthConfig& c);
void to_json(json& j, const GenerationLog& g);

void to_json(json& j, const ConvSpec& c);
void from_json(const json& j, ConvSpec& c);
void to_json(json& j, const PoolSpec& p);
void from_json(const json& j, PoolSpec& p);
/// Accepts an optional "preset" key (tiny, reduced, alexnet_like) applied
/// before the other keys.
void to_json(json& j, const NetConfig& c);
void from_json(const json& j, NetConfig& c);

void to_json(json& j, const FinetuneConfig& f);
void from_json(const json& j, FinetuneConfig& f);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const EpochRecord& r);

void to_json(json& j, const TargetingSpec& s);
void from_json(const json& j, TargetingSpec& s);
void to_json(json& j, const TargetingReport& r);

void to_json(json& j, const LoadReport& r);

void to_json(json& j, const Aggregate& a);
void to_json(json& j, const SampleRecord& r);
void to_json(json& j, const EvalReport& r);
void to_json(json& j, const ProtocolSpec& p);
void from_json(const json& j, ProtocolSpec& p);

}  // namespace gazenet
