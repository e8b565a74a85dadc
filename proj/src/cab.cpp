#include "eventfuse/cab.hpp"

#include <cmath>

#include "eventfuse/errors.hpp"
#include "eventfuse/numeric.hpp"

namespace eventfuse {

namespace {

Vector concat(const Vector& a, const Vector& b) {
  Vector out(a.size() + b.size());
  out.head(a.size()) = a;
  out.tail(b.size()) = b;
  return out;
}

Matrix outer(const Vector& a, const Vector& b) {
  Matrix out(a.size(), b.size());
  for (Index i = 0; i < a.size(); ++i) {
    for (Index j = 0; j < b.size(); ++j) {
      out(i, j) = a(i) * b(j);
    }
  }
  return out;
}

// d(softmax)/d(scores) applied to an incoming gradient.
Vector softmax_backward(const Vector& alpha, const Vector& g_alpha) {
  const Scalar mixed = alpha.dot(g_alpha);
  return alpha.array() * (g_alpha.array() - mixed);
}

Vector tanh_vec(const Vector& v) {
  Vector out(v.size());
  for (Index i = 0; i < v.size(); ++i) {
    out(i) = std::tanh(v(i));
  }
  return out;
}

}  // namespace

EventAttentionResult event_attention(const EventSet& events,
                                     const EventAttentionParams& params,
                                     bool uniform_attention) {
  const Index m = events.size();
  if (m < 1) {
    throw ArgumentError("event_attention: need at least one event");
  }
  const Index d = events.events.cols();
  if (params.score_weight.rows() != d || params.score_weight.cols() != d) {
    throw ShapeError("event_attention: score weight is " +
                     std::to_string(params.score_weight.rows()) + "x" +
                     std::to_string(params.score_weight.cols()) +
                     " but events have width " + std::to_string(d));
  }
  if (params.fuse_weight.cols() != 2 * d) {
    throw ShapeError("event_attention: fuse weight expects input " +
                     std::to_string(params.fuse_weight.cols()) +
                     " but [pooled; query] has width " + std::to_string(2 * d));
  }

  const Vector query = events.events.row(m - 1).transpose();

  EventAttentionResult res;
  if (uniform_attention) {
    res.alpha = Vector::Constant(m, 1.0 / static_cast<Scalar>(m));
  } else {
    Vector scores(m);
    for (Index n = 0; n < m; ++n) {
      scores(n) = bilinear(query, params.score_weight,
                           events.events.row(n).transpose());
    }
    res.alpha = softmax(scores);
  }

  res.pooled = Vector::Zero(d);
  for (Index n = 0; n < m; ++n) {
    res.pooled += res.alpha(n) * events.events.row(n).transpose();
  }

  const Vector pre = matvec(params.fuse_weight, concat(res.pooled, query));
  res.fused = tanh_vec(pre);
  return res;
}

DataFusionResult data_fusion(const Vector& fused_visual,
                             const Vector& fused_nonvisual,
                             const Matrix& cross_weight,
                             bool uniform_attention) {
  if (fused_visual.size() != fused_nonvisual.size()) {
    throw ShapeError("data_fusion: branch widths differ, " +
                     std::to_string(fused_visual.size()) + " vs " +
                     std::to_string(fused_nonvisual.size()));
  }
  DataFusionResult res;
  if (uniform_attention) {
    res.lambda1 = 0.5;
    res.lambda2 = 0.5;
  } else {
    Vector scores(2);
    scores(0) = bilinear(fused_nonvisual, cross_weight, fused_visual);
    scores(1) = bilinear(fused_nonvisual, cross_weight, fused_nonvisual);
    const Vector lambdas = softmax(scores);
    res.lambda1 = lambdas(0);
    res.lambda2 = lambdas(1);
  }
  res.combined = res.lambda1 * fused_visual + res.lambda2 * fused_nonvisual;
  return res;
}

Scalar predict(const Vector& combined, const Vector& partner,
               const CabParams& params, HeadKind head) {
  Scalar logit;
  if (head == HeadKind::Draft) {
    const Vector hidden =
        tanh_vec(matvec(params.head_proj, concat(combined, partner)));
    logit = matvec(params.head_out, hidden)(0) + params.head_bias(0, 0);
  } else {
    logit =
        matvec(params.out_weight, concat(combined, partner))(0) +
        params.out_bias(0, 0);
  }
  return sigmoid(logit);
}

AttentionTrace forward(const EventSet& events_visual,
                       const EventSet* events_nonvisual,
                       const CabParams& params, const PipelineConfig& cfg) {
  const bool uniform = !cfg.use_cab;
  AttentionTrace trace;

  const EventAttentionResult vis =
      event_attention(events_visual, params.visual, uniform);
  trace.alpha_visual = vis.alpha;
  trace.pooled_visual = vis.pooled;
  trace.fused_visual = vis.fused;

  if (cfg.use_nonvisual) {
    if (events_nonvisual == nullptr) {
      throw ContractError("forward: non-visual events required by config");
    }
    const EventAttentionResult nonvis =
        event_attention(*events_nonvisual, params.nonvisual, uniform);
    trace.alpha_nonvisual = nonvis.alpha;
    trace.pooled_nonvisual = nonvis.pooled;
    trace.fused_nonvisual = nonvis.fused;

    const DataFusionResult fusion = data_fusion(
        vis.fused, nonvis.fused, params.cross_weight, uniform);
    trace.lambda1 = fusion.lambda1;
    trace.lambda2 = fusion.lambda2;
    trace.combined = fusion.combined;

    const Vector& partner =
        cfg.head == HeadKind::Draft ? trace.fused_visual : nonvis.fused;
    trace.probability = predict(trace.combined, partner, params, cfg.head);
  } else {
    trace.combined = vis.fused;
    trace.probability =
        predict(trace.combined, vis.fused, params, cfg.head);
  }

  if (!(trace.probability > 0.0 && trace.probability < 1.0)) {
    throw NumericError("forward: predicted probability left (0, 1)");
  }
  return trace;
}

namespace {

struct BranchGrads {
  EventAttentionParams params;
  Matrix events;
};

BranchGrads branch_backward(const EventSet& events, const Vector& alpha,
                            const Vector& pooled, const Vector& fused,
                            const EventAttentionParams& params,
                            const Vector& g_fused, bool use_cab) {
  const Index m = events.size();
  const Index d = events.events.cols();
  const Vector query = events.events.row(m - 1).transpose();

  BranchGrads out;
  out.params.score_weight = Matrix::Zero(d, d);
  out.params.fuse_weight =
      Matrix::Zero(params.fuse_weight.rows(), params.fuse_weight.cols());
  out.events = Matrix::Zero(m, d);

  // fused = tanh(W_fuse · [pooled; query])
  const Vector g_pre =
      (g_fused.array() * (1.0 - fused.array().square())).matrix();
  out.params.fuse_weight = outer(g_pre, concat(pooled, query));
  Matrix fuse_t = params.fuse_weight.transpose();
  const Vector g_concat = matvec(fuse_t, g_pre);
  const Vector g_pooled = g_concat.head(d);
  Vector g_query = g_concat.tail(d);

  // pooled = Σ alpha_n · E_n
  Vector g_alpha(m);
  for (Index n = 0; n < m; ++n) {
    g_alpha(n) = g_pooled.dot(events.events.row(n).transpose());
    out.events.row(n) += (alpha(n) * g_pooled).transpose();
  }

  if (use_cab) {
    // alpha = softmax of the bilinear scores against the query.
    const Vector g_scores = softmax_backward(alpha, g_alpha);
    Matrix score_t = params.score_weight.transpose();
    for (Index n = 0; n < m; ++n) {
      const Vector event = events.events.row(n).transpose();
      out.params.score_weight += g_scores(n) * outer(query, event);
      out.events.row(n) += (g_scores(n) * matvec(score_t, query)).transpose();
      g_query += g_scores(n) * matvec(params.score_weight, event);
    }
  }

  out.events.row(m - 1) += g_query.transpose();
  return out;
}

void check_trace(const AttentionTrace& trace, const EventSet& events_visual,
                 const EventSet* events_nonvisual,
                 const PipelineConfig& cfg) {
  if (trace.alpha_visual.size() != events_visual.size()) {
    throw ContractError("backward: trace does not match the visual events");
  }
  if (cfg.use_nonvisual) {
    if (events_nonvisual == nullptr ||
        trace.alpha_nonvisual.size() != events_nonvisual->size() ||
        !trace.lambda1.has_value() || !trace.lambda2.has_value()) {
      throw ContractError(
          "backward: trace does not match the non-visual events");
    }
  }
}

}  // namespace

CabGrads backward(const AttentionTrace& trace, const EventSet& events_visual,
                  const EventSet* events_nonvisual, const CabParams& params,
                  const PipelineConfig& cfg, Scalar upstream) {
  check_trace(trace, events_visual, events_nonvisual, cfg);
  const bool use_cab = cfg.use_cab;

  CabGrads grads;
  grads.cross_weight =
      Matrix::Zero(params.cross_weight.rows(), params.cross_weight.cols());
  grads.out_weight =
      Matrix::Zero(params.out_weight.rows(), params.out_weight.cols());
  grads.out_bias = Matrix::Zero(params.out_bias.rows(), params.out_bias.cols());
  grads.head_proj =
      Matrix::Zero(params.head_proj.rows(), params.head_proj.cols());
  grads.head_out = Matrix::Zero(params.head_out.rows(), params.head_out.cols());
  grads.head_bias =
      Matrix::Zero(params.head_bias.rows(), params.head_bias.cols());

  const Scalar p = trace.probability;
  const Scalar g_logit = upstream * p * (1.0 - p);

  // Head: logit = w · [combined; partner] + b (or the tanh-projected form).
  const Vector& partner = cfg.use_nonvisual && cfg.head != HeadKind::Draft
                              ? trace.fused_nonvisual
                              : trace.fused_visual;
  const Index d_f = trace.combined.size();
  Vector g_combined;
  Vector g_partner;
  if (cfg.head == HeadKind::Draft) {
    const Vector cat = concat(trace.combined, partner);
    const Vector hidden = tanh_vec(matvec(params.head_proj, cat));
    grads.head_out = (g_logit * hidden.transpose()).eval();
    grads.head_bias(0, 0) = g_logit;
    const Vector g_hidden = g_logit * params.head_out.row(0).transpose();
    const Vector g_hidden_pre =
        (g_hidden.array() * (1.0 - hidden.array().square())).matrix();
    grads.head_proj = outer(g_hidden_pre, cat);
    Matrix proj_t = params.head_proj.transpose();
    const Vector g_cat = matvec(proj_t, g_hidden_pre);
    g_combined = g_cat.head(d_f);
    g_partner = g_cat.tail(d_f);
  } else {
    const Vector cat = concat(trace.combined, partner);
    grads.out_weight = (g_logit * cat.transpose()).eval();
    grads.out_bias(0, 0) = g_logit;
    const Vector g_cat = g_logit * params.out_weight.row(0).transpose();
    g_combined = g_cat.head(d_f);
    g_partner = g_cat.tail(d_f);
  }

  Vector g_fused_visual = Vector::Zero(d_f);
  Vector g_fused_nonvisual;

  if (cfg.use_nonvisual) {
    g_fused_nonvisual = Vector::Zero(d_f);
    const Scalar l1 = *trace.lambda1;
    const Scalar l2 = *trace.lambda2;
    const Vector& f_vis = trace.fused_visual;
    const Vector& f_nonvis = trace.fused_nonvisual;

    // combined = λ1·F + λ2·F′
    g_fused_visual += l1 * g_combined;
    g_fused_nonvisual += l2 * g_combined;

    if (use_cab) {
      Vector g_lambda(2);
      g_lambda(0) = g_combined.dot(f_vis);
      g_lambda(1) = g_combined.dot(f_nonvis);
      Vector lambdas(2);
      lambdas << l1, l2;
      const Vector g_scores = softmax_backward(lambdas, g_lambda);

      // score1 = F′ᵀ·W·F, score2 = F′ᵀ·W·F′
      grads.cross_weight += g_scores(0) * outer(f_nonvis, f_vis);
      grads.cross_weight += g_scores(1) * outer(f_nonvis, f_nonvis);
      Matrix cross_t = params.cross_weight.transpose();
      g_fused_visual += g_scores(0) * matvec(cross_t, f_nonvis);
      g_fused_nonvisual += g_scores(0) * matvec(params.cross_weight, f_vis);
      g_fused_nonvisual +=
          g_scores(1) * (matvec(params.cross_weight, f_nonvis) +
                         matvec(cross_t, f_nonvis));
    }

    if (cfg.head == HeadKind::Draft) {
      g_fused_visual += g_partner;
    } else {
      g_fused_nonvisual += g_partner;
    }
  } else {
    // combined = F and the head sees [F; F].
    g_fused_visual = g_combined + g_partner;
  }

  const BranchGrads vis = branch_backward(
      events_visual, trace.alpha_visual, trace.pooled_visual,
      trace.fused_visual, params.visual, g_fused_visual, use_cab);
  grads.visual = vis.params;
  grads.events_visual = vis.events;

  if (cfg.use_nonvisual) {
    const BranchGrads nonvis = branch_backward(
        *events_nonvisual, trace.alpha_nonvisual, trace.pooled_nonvisual,
        trace.fused_nonvisual, params.nonvisual, g_fused_nonvisual, use_cab);
    grads.nonvisual = nonvis.params;
    grads.events_nonvisual = nonvis.events;
  } else {
    grads.nonvisual.score_weight = Matrix::Zero(params.nonvisual.score_weight.rows(),
                                                params.nonvisual.score_weight.cols());
    grads.nonvisual.fuse_weight = Matrix::Zero(params.nonvisual.fuse_weight.rows(),
                                               params.nonvisual.fuse_weight.cols());
    grads.events_nonvisual = Matrix();
  }

  return grads;
}

Json json_from_trace(const AttentionTrace& trace) {
  Json j;
  j["alpha_visual"] = json_from_vector(trace.alpha_visual);
  j["alpha_nonvisual"] = trace.alpha_nonvisual.size() > 0
                             ? json_from_vector(trace.alpha_nonvisual)
                             : Json(nullptr);
  j["pooled_visual"] = json_from_vector(trace.pooled_visual);
  j["pooled_nonvisual"] = trace.pooled_nonvisual.size() > 0
                              ? json_from_vector(trace.pooled_nonvisual)
                              : Json(nullptr);
  j["fused_visual"] = json_from_vector(trace.fused_visual);
  j["fused_nonvisual"] = trace.fused_nonvisual.size() > 0
                             ? json_from_vector(trace.fused_nonvisual)
                             : Json(nullptr);
  j["lambda1"] = trace.lambda1 ? Json(*trace.lambda1) : Json(nullptr);
  j["lambda2"] = trace.lambda2 ? Json(*trace.lambda2) : Json(nullptr);
  j["combined"] = json_from_vector(trace.combined);
  j["probability"] = trace.probability;
  return j;
}

}  // namespace eventfuse
