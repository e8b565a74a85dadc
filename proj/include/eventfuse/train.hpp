#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "eventfuse/metrics.hpp"
#include "eventfuse/model.hpp"

namespace eventfuse {

/// Mean binary cross-entropy. Probabilities are clamped to
/// [1e-12, 1−1e-12] before the logs; labels must be 0/1.
Scalar bce_loss(const Vector& p, const std::vector<int>& y);

/// dL/dp_i = (p_i − y_i) / (N · p_i · (1 − p_i)), with the same clamp.
Vector bce_grad(const Vector& p, const std::vector<int>& y);

/// RMSProp state: one running mean of squared gradients per parameter
/// block, keyed by the block name used by for_each_param.
struct OptimizerState {
  Scalar decay = 0.9;
  Scalar epsilon = 1e-8;
  Scalar learning_rate = 1e-5;
  Scalar l2_lambda = 1e-3;
  std::map<std::string, Matrix> sq_avg;
};

OptimizerState make_optimizer(const PipelineConfig& cfg,
                              const ModelParams& params);

/// One RMSProp update in place. The effective gradient includes the L2 term
/// 2·l2_lambda·θ; then v ← decay·v + (1−decay)·g², θ ← θ − lr·g/(√v + ε).
void rmsprop_step(ModelParams& params, const ModelGrads& grads,
                  OptimizerState& state);

struct TrainReport {
  std::vector<Scalar> epoch_loss;          // mean training loss per epoch
  std::vector<MetricReport> val_metrics;   // per epoch, empty when no split
  MetricReport final_train;
  std::optional<MetricReport> final_val;
  std::uint64_t seed = 0;
  PipelineConfig config;
};

Json json_from_report(const TrainReport& report);

struct TrainResult {
  ModelParams params;
  DatasetSchema schema;
  TrainReport report;
};

/// Mini-batch training: seeded shuffle per epoch, encode → merge → attention
/// per sample, mean BCE per batch, analytic backward, RMSProp update.
/// Non-finite loss raises TrainingError naming the epoch and batch.
TrainResult train(const std::vector<SampleRecord>& dataset,
                  const PipelineConfig& cfg);

/// Model probabilities for a set of samples under fixed parameters.
Vector predict_all(const std::vector<SampleRecord>& samples,
                   const ModelParams& params, const PipelineConfig& cfg);

struct GradCheckBlock {
  std::string name;
  Scalar max_rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;  // worst case per parameter block
  Scalar max_rel_error = 0.0;
  Index trials = 0;
  Index redraws = 0;  // instances discarded for crossing a cluster boundary
};

/// Compares the analytic gradient of the full training objective (BCE +
/// L2) against central finite differences on randomized small instances.
/// Instances whose clustering changes under any probe perturbation are
/// redrawn, since the objective is not differentiable there. The optional
/// tamper hook corrupts the analytic gradient (sensitivity testing only).
GradCheckReport grad_check(
    const PipelineConfig& cfg, Index trials,
    const std::function<void(ModelGrads&)>& tamper = nullptr);

/// |a − f| scored relative to max(|a|, |f|); differences at or below
/// abs_floor count as zero.
Scalar grad_discrepancy(const Matrix& analytic, const Matrix& numeric,
                        Scalar abs_floor);

}  // namespace eventfuse
