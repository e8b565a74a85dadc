#pragma once

#include <vector>

#include "eventfuse/datamodel.hpp"
#include "eventfuse/numeric.hpp"
#include "eventfuse/types.hpp"

namespace eventfuse {

/// Per-channel linear embeddings for the non-visual relation block.
/// bbox_embed is 4×d1; object_embeds[j] is c_j×d1 for the j-th traffic
/// channel in dataset order. Pose keypoints pass through unembedded.
struct RelationBlockParams {
  Matrix bbox_embed;
  std::vector<Matrix> object_embeds;
};

/// Trainable linear stand-ins for the two sequence backbones.
struct EncoderParams {
  Matrix visual_stub;    // d_raw×d_v
  Matrix actaware_stub;  // (d1·(n+1)+d2)×d_nv
};

/// Embeds bbox and each traffic channel to width d1 and concatenates them
/// with the raw pose, frame by frame. Output is T×(d1·(n+1)+d2) with column
/// order (bbox, traffic channels in dataset order, pose).
Matrix relation_block(const SampleRecord& sample,
                      const RelationBlockParams& params);

/// Linear visual encoding: row t of the output depends only on row t of
/// sample.visual_raw.
FeatureSequence encode_visual(const SampleRecord& sample,
                              const EncoderParams& params);

/// Linear non-visual encoding of the relation block output.
FeatureSequence encode_nonvisual(const Matrix& relation_out,
                                 const EncoderParams& params);

/// Gradient of a loss wrt visual_stub given the gradient wrt the encoder
/// output (both T×d_v): visual_rawᵀ · g.
Matrix visual_stub_grad(const SampleRecord& sample, const Matrix& g_visual);

struct NonvisualGrads {
  Matrix actaware_stub;
  Matrix bbox_embed;
  std::vector<Matrix> object_embeds;
};

/// Backpropagates the non-visual branch: through the ActAware stub into the
/// relation block's per-channel embeddings.
NonvisualGrads nonvisual_backward(const SampleRecord& sample,
                                  const Matrix& relation_out,
                                  const EncoderParams& enc,
                                  const RelationBlockParams& rel,
                                  const Matrix& g_nonvisual);

/// Synthetic labeled sequences: frames are partitioned into `planted_events`
/// contiguous segments, each segment projects one latent state into every
/// channel (plus Gaussian noise of scale noise_sigma), and the label is 1
/// iff the final segment's latent state lies in the positive half-space of
/// its first coordinate. Deterministic given cfg.seed.
std::vector<SampleRecord> generate_synthetic(const PipelineConfig& cfg,
                                             Index count,
                                             Index planted_events,
                                             Scalar noise_sigma);

}  // namespace eventfuse
