#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eventfuse/json_util.hpp"
#include "eventfuse/types.hpp"

namespace eventfuse {

/// One named traffic-object feature channel, data is T×width.
struct TrafficChannel {
  std::string name;
  Matrix data;
};

/// Ground truth for synthetic data: frames [start_frame, end_frame]
/// (inclusive) share one latent state.
struct PlantedSegment {
  Index start_frame = 0;
  Index end_frame = 0;
  int segment_id = 0;
};

/// One labeled observation. All channels span the same T frames.
struct SampleRecord {
  std::string id;
  int label = 0;  // 0 = not crossing, 1 = crossing
  Matrix visual_raw;  // T×d_raw
  Matrix bbox;        // T×4, rows [x1, y1, x2, y2] with x1<=x2, y1<=y2
  Matrix pose;        // T×d2 keypoint coordinates
  std::vector<TrafficChannel> traffic_objects;
  std::optional<std::vector<PlantedSegment>> planted_segments;

  Index frames() const { return visual_raw.rows(); }

  /// Throws ValidationError naming the offending field and this record's id.
  void validate() const;
};

bool operator==(const TrafficChannel& a, const TrafficChannel& b);
bool operator==(const PlantedSegment& a, const PlantedSegment& b);
bool operator==(const SampleRecord& a, const SampleRecord& b);

enum class HeadKind { Default, Draft };

/// Everything the pipeline needs to know that is not data or weights.
struct PipelineConfig {
  Index T = 16;   // observation length in frames
  Index M = 3;    // number of merged events
  Index K = 4;    // neighbors used for the local density

  Index d_raw = 64;   // width of the raw visual channel
  Index d_v = 64;     // visual encoder output width
  Index d1 = 32;      // per-traffic-object embedding width
  Index d2 = 36;      // pose keypoint width
  Index d_nv = 384;   // non-visual encoder output width
  Index d_f = 128;    // fused representation width

  Scalar learning_rate = 1e-5;
  Scalar l2_lambda = 1e-3;
  Scalar rmsprop_decay = 0.9;
  Scalar epsilon = 1e-8;
  Index batch_size = 2;
  Index epochs = 30;
  Scalar val_fraction = 0.2;
  std::uint64_t seed = 42;

  bool use_nonvisual = true;
  bool use_tmm = true;
  bool use_cab = true;
  HeadKind head = HeadKind::Default;

  void validate() const;
};

void to_json(Json& j, const PipelineConfig& cfg);
void from_json(const Json& j, PipelineConfig& cfg);

/// Per-frame features for one branch after encoding, data is T×d.
struct FeatureSequence {
  enum class Branch { Visual, NonVisual };
  Branch branch = Branch::Visual;
  Matrix data;
};

/// Reads a JSON-lines dataset. Malformed lines raise ParseError with the
/// line number; invariant violations raise ValidationError naming the field.
std::vector<SampleRecord> load_dataset(const std::string& path);

/// Writes records one JSON object per line. load_dataset(save_dataset(x))
/// reproduces x exactly.
void save_dataset(const std::vector<SampleRecord>& records,
                  const std::string& path);

Json json_from_record(const SampleRecord& r);
SampleRecord record_from_json(const Json& j);

}  // namespace eventfuse
