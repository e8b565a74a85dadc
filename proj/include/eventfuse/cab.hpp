#pragma once

#include <optional>

#include "eventfuse/datamodel.hpp"
#include "eventfuse/tmm.hpp"
#include "eventfuse/types.hpp"

namespace eventfuse {

/// Event-level attention weights for one branch: a bilinear score against
/// the query (temporally last) event and a projection of [pooled; query].
struct EventAttentionParams {
  Matrix score_weight;  // d×d
  Matrix fuse_weight;   // d_f×2d
};

struct CabParams {
  EventAttentionParams visual;
  EventAttentionParams nonvisual;  // empty when the branch is disabled
  Matrix cross_weight;             // d_f×d_f data-level score
  Matrix out_weight;               // 1×2d_f classifier head
  Matrix out_bias;                 // 1×1
  // Alternative head: tanh projection of [combined; fused_visual] followed
  // by a linear layer. Allocated only when the config selects it.
  Matrix head_proj;  // d_f×2d_f
  Matrix head_out;   // 1×d_f
  Matrix head_bias;  // 1×1
};

/// Intermediates of one forward pass, enough to replay the backward pass
/// and to inspect what the attention did.
struct AttentionTrace {
  Vector alpha_visual;      // event weights, sum to 1
  Vector alpha_nonvisual;   // empty when the branch is disabled
  Vector pooled_visual;     // Σ alpha_n · E_n
  Vector pooled_nonvisual;
  Vector fused_visual;      // F  = tanh(W·[pooled; query])
  Vector fused_nonvisual;   // F′
  std::optional<Scalar> lambda1;  // data-level weights, absent without the
  std::optional<Scalar> lambda2;  // non-visual branch
  Vector combined;          // λ1·F + λ2·F′ (or F alone)
  Scalar probability = 0.0; // strictly inside (0, 1)
};

struct EventAttentionResult {
  Vector fused;
  Vector alpha;
  Vector pooled;
};

/// Attention over the M events of one branch. The query is the temporally
/// last event and participates in its own softmax. With uniform_attention
/// the learned scores are replaced by a flat 1/M weighting.
EventAttentionResult event_attention(const EventSet& events,
                                     const EventAttentionParams& params,
                                     bool uniform_attention = false);

struct DataFusionResult {
  Vector combined;
  Scalar lambda1;
  Scalar lambda2;
};

/// Cross-branch fusion: softmax over the two bilinear scores
/// score(F′, F) and score(F′, F′), then the convex combination. With
/// uniform_attention both weights are fixed at 0.5.
DataFusionResult data_fusion(const Vector& fused_visual,
                             const Vector& fused_nonvisual,
                             const Matrix& cross_weight,
                             bool uniform_attention = false);

/// Classifier head on [combined; partner].
Scalar predict(const Vector& combined, const Vector& partner,
               const CabParams& params, HeadKind head);

/// Full attention block. events_nonvisual may be null when
/// cfg.use_nonvisual is false; ablation flags come from cfg.
AttentionTrace forward(const EventSet& events_visual,
                       const EventSet* events_nonvisual,
                       const CabParams& params, const PipelineConfig& cfg);

struct CabGrads {
  EventAttentionParams visual;
  EventAttentionParams nonvisual;
  Matrix cross_weight;
  Matrix out_weight;
  Matrix out_bias;
  Matrix head_proj;
  Matrix head_out;
  Matrix head_bias;
  Matrix events_visual;     // M×d gradient wrt the pooled event vectors
  Matrix events_nonvisual;
};

/// Analytic gradients of upstream · dp/d(·) for every parameter and for the
/// event vectors of both branches. The trace must come from forward() on
/// the same inputs; cluster assignments are constants of the forward pass.
CabGrads backward(const AttentionTrace& trace, const EventSet& events_visual,
                  const EventSet* events_nonvisual, const CabParams& params,
                  const PipelineConfig& cfg, Scalar upstream);

Json json_from_trace(const AttentionTrace& trace);

}  // namespace eventfuse
