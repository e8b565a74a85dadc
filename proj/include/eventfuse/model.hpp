#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "eventfuse/cab.hpp"
#include "eventfuse/datamodel.hpp"
#include "eventfuse/encoders.hpp"
#include "eventfuse/tmm.hpp"

namespace eventfuse {

/// Channel widths a model was built for; inferred from data and embedded in
/// checkpoints so shape mismatches are caught loudly.
struct DatasetSchema {
  Index d_raw = 0;
  Index d2 = 0;
  std::vector<std::pair<std::string, Index>> traffic;  // (name, width)

  static DatasetSchema infer(const std::vector<SampleRecord>& records);
  void check_sample(const SampleRecord& sample) const;
  bool operator==(const DatasetSchema&) const = default;
};

/// Every trainable matrix in the pipeline. Gradients reuse the same layout.
struct ModelParams {
  EncoderParams encoder;
  RelationBlockParams relation;
  CabParams cab;
};

using ModelGrads = ModelParams;

/// Xavier-uniform initialization of all blocks enabled by cfg; biases zero.
ModelParams init_params(const PipelineConfig& cfg, const DatasetSchema& schema,
                        Rng& rng);

/// Zero matrices in the exact shape of `like`.
ModelGrads zeros_like(const ModelParams& like);

/// Visits every parameter matrix in a fixed, documented order. The same
/// order aligns parameters, gradients, and optimizer state.
void for_each_param(ModelParams& params,
                    const std::function<void(const std::string&, Matrix&)>& fn);
void for_each_param(
    const ModelParams& params,
    const std::function<void(const std::string&, const Matrix&)>& fn);

/// grads += other, entry-wise across every block.
void accumulate(ModelGrads& grads, const ModelGrads& other);

/// One sample's forward intermediates, kept for the backward pass.
struct SampleForward {
  FeatureSequence visual;
  Matrix relation_out;
  FeatureSequence nonvisual;
  EventSet events_visual;
  EventSet events_nonvisual;
  AttentionTrace trace;
};

SampleForward forward_sample(const SampleRecord& sample,
                             const ModelParams& params,
                             const PipelineConfig& cfg);

/// Full-model gradients for one sample given dL/dp. Cluster assignments are
/// constants of the forward pass; average pooling distributes each event
/// gradient equally over its member frames.
ModelGrads backward_sample(const SampleForward& fwd, const SampleRecord& sample,
                           const ModelParams& params,
                           const PipelineConfig& cfg, Scalar dloss_dp);

/// Checkpoint = config + schema + every parameter matrix, as JSON.
Json checkpoint_to_json(const ModelParams& params, const PipelineConfig& cfg,
                        const DatasetSchema& schema);
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const PipelineConfig& cfg, const DatasetSchema& schema);

struct Checkpoint {
  ModelParams params;
  PipelineConfig config;
  DatasetSchema schema;
};

Checkpoint load_checkpoint(const std::string& path);

/// Verifies that stored parameter shapes match what `cfg` and `schema`
/// imply, throwing ShapeError naming the first offending parameter.
void check_param_shapes(const ModelParams& params, const PipelineConfig& cfg,
                        const DatasetSchema& schema);

}  // namespace eventfuse
