#include "eventfuse/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "eventfuse/errors.hpp"

namespace eventfuse {

namespace {

constexpr Scalar kProbClamp = 1e-12;

Scalar clamp_prob(Scalar p) {
  return std::min(1.0 - kProbClamp, std::max(kProbClamp, p));
}

void check_labels(const Vector& p, const std::vector<int>& y,
                  const char* where) {
  if (p.size() == 0) {
    throw ArgumentError(std::string(where) + ": empty batch");
  }
  if (static_cast<Index>(y.size()) != p.size()) {
    throw ArgumentError(std::string(where) + ": " + std::to_string(p.size()) +
                        " probabilities vs " + std::to_string(y.size()) +
                        " labels");
  }
  for (int label : y) {
    if (label != 0 && label != 1) {
      throw ArgumentError(std::string(where) + ": labels must be 0 or 1");
    }
  }
}

}  // namespace

Scalar bce_loss(const Vector& p, const std::vector<int>& y) {
  check_labels(p, y, "bce_loss");
  const Scalar n = static_cast<Scalar>(p.size());
  Scalar total = 0.0;
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar prob = clamp_prob(p(i));
    total += y[static_cast<std::size_t>(i)] == 1 ? std::log(prob)
                                                 : std::log(1.0 - prob);
  }
  return -total / n;
}

Vector bce_grad(const Vector& p, const std::vector<int>& y) {
  check_labels(p, y, "bce_grad");
  const Scalar n = static_cast<Scalar>(p.size());
  Vector g(p.size());
  for (Index i = 0; i < p.size(); ++i) {
    const Scalar prob = clamp_prob(p(i));
    const Scalar label = static_cast<Scalar>(y[static_cast<std::size_t>(i)]);
    g(i) = (prob - label) / (n * prob * (1.0 - prob));
  }
  return g;
}

OptimizerState make_optimizer(const PipelineConfig& cfg,
                              const ModelParams& params) {
  OptimizerState state;
  state.decay = cfg.rmsprop_decay;
  state.epsilon = cfg.epsilon;
  state.learning_rate = cfg.learning_rate;
  state.l2_lambda = cfg.l2_lambda;
  for_each_param(params, [&state](const std::string& name, const Matrix& m) {
    state.sq_avg[name] = Matrix::Zero(m.rows(), m.cols());
  });
  return state;
}

void rmsprop_step(ModelParams& params, const ModelGrads& grads,
                  OptimizerState& state) {
  std::vector<std::pair<std::string, Matrix*>> targets;
  for_each_param(params, [&targets](const std::string& name, Matrix& m) {
    targets.emplace_back(name, &m);
  });
  std::size_t i = 0;
  for_each_param(grads, [&](const std::string& name, const Matrix& g) {
    if (i >= targets.size() || targets[i].first != name) {
      throw ContractError("rmsprop_step: gradient blocks out of order");
    }
    Matrix& theta = *targets[i].second;
    ++i;
    if (g.rows() != theta.rows() || g.cols() != theta.cols()) {
      throw ContractError("rmsprop_step: block '" + name +
                          "' gradient shape mismatch");
    }
    if (theta.size() == 0) {
      return;
    }
    auto it = state.sq_avg.find(name);
    if (it == state.sq_avg.end()) {
      throw ContractError("rmsprop_step: no optimizer state for '" + name +
                          "'");
    }
    Matrix& v = it->second;
    const Matrix g_eff = g + 2.0 * state.l2_lambda * theta;
    v = state.decay * v + (1.0 - state.decay) * g_eff.cwiseProduct(g_eff);
    theta -= state.learning_rate *
             g_eff.cwiseQuotient((v.cwiseSqrt().array() + state.epsilon)
                                     .matrix());
  });
}

Vector predict_all(const std::vector<SampleRecord>& samples,
                   const ModelParams& params, const PipelineConfig& cfg) {
  Vector p(static_cast<Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    p(static_cast<Index>(i)) =
        forward_sample(samples[i], params, cfg).trace.probability;
  }
  return p;
}

namespace {

std::vector<int> labels_of(const std::vector<SampleRecord>& samples,
                           const std::vector<Index>& idx) {
  std::vector<int> y;
  y.reserve(idx.size());
  for (Index i : idx) {
    y.push_back(samples[static_cast<std::size_t>(i)].label);
  }
  return y;
}

std::vector<SampleRecord> gather(const std::vector<SampleRecord>& samples,
                                 const std::vector<Index>& idx) {
  std::vector<SampleRecord> out;
  out.reserve(idx.size());
  for (Index i : idx) {
    out.push_back(samples[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace

TrainResult train(const std::vector<SampleRecord>& dataset,
                  const PipelineConfig& cfg) {
  cfg.validate();
  if (dataset.empty()) {
    throw ArgumentError("train: empty dataset");
  }
  const DatasetSchema schema = DatasetSchema::infer(dataset);

  Rng rng(cfg.seed);

  // Seeded split: shuffle once, hold out the tail.
  std::vector<Index> order(dataset.size());
  std::iota(order.begin(), order.end(), Index{0});
  rng.shuffle(order);
  const Index n_val = static_cast<Index>(
      std::floor(cfg.val_fraction * static_cast<Scalar>(dataset.size())));
  std::vector<Index> train_idx(order.begin(), order.end() - n_val);
  std::vector<Index> val_idx(order.end() - n_val, order.end());
  if (train_idx.empty()) {
    throw ArgumentError("train: validation split leaves no training data");
  }

  ModelParams params = init_params(cfg, schema, rng);
  OptimizerState optimizer = make_optimizer(cfg, params);
  const std::vector<SampleRecord> val_samples = gather(dataset, val_idx);
  const std::vector<int> val_labels = labels_of(dataset, val_idx);

  TrainReport report;
  report.seed = cfg.seed;
  report.config = cfg;

  for (Index epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    Scalar loss_sum = 0.0;
    Index seen = 0;
    const Index n_train = static_cast<Index>(train_idx.size());
    for (Index start = 0; start < n_train; start += cfg.batch_size) {
      const Index batch_n = std::min(cfg.batch_size, n_train - start);
      const Index batch_id = start / cfg.batch_size;
      try {
        std::vector<SampleForward> forwards;
        forwards.reserve(static_cast<std::size_t>(batch_n));
        Vector p(batch_n);
        std::vector<int> y;
        for (Index b = 0; b < batch_n; ++b) {
          const SampleRecord& sample =
              dataset[static_cast<std::size_t>(train_idx[static_cast<std::size_t>(start + b)])];
          forwards.push_back(forward_sample(sample, params, cfg));
          p(b) = forwards.back().trace.probability;
          y.push_back(sample.label);
        }
        const Scalar loss = bce_loss(p, y);
        if (!std::isfinite(loss)) {
          throw NumericError("loss is not finite");
        }
        const Vector g_p = bce_grad(p, y);
        ModelGrads grads = zeros_like(params);
        for (Index b = 0; b < batch_n; ++b) {
          const SampleRecord& sample =
              dataset[static_cast<std::size_t>(train_idx[static_cast<std::size_t>(start + b)])];
          accumulate(grads,
                     backward_sample(forwards[static_cast<std::size_t>(b)],
                                     sample, params, cfg, g_p(b)));
        }
        rmsprop_step(params, grads, optimizer);
        loss_sum += loss * static_cast<Scalar>(batch_n);
        seen += batch_n;
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " +
                            std::to_string(epoch) + " batch " +
                            std::to_string(batch_id) + ": " + e.what());
      }
    }
    report.epoch_loss.push_back(loss_sum / static_cast<Scalar>(seen));
    if (!val_samples.empty()) {
      try {
        report.val_metrics.push_back(
            evaluate(predict_all(val_samples, params, cfg), val_labels));
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at epoch " +
                            std::to_string(epoch) + ": " + e.what());
      }
    }
  }

  const std::vector<SampleRecord> train_samples = gather(dataset, train_idx);
  report.final_train = evaluate(predict_all(train_samples, params, cfg),
                                labels_of(dataset, train_idx));
  if (!val_samples.empty()) {
    report.final_val =
        evaluate(predict_all(val_samples, params, cfg), val_labels);
  }

  return TrainResult{std::move(params), schema, std::move(report)};
}

Json json_from_report(const TrainReport& report) {
  Json j;
  j["epoch_loss"] = report.epoch_loss;
  Json val = Json::array();
  for (const MetricReport& m : report.val_metrics) {
    val.push_back(json_from_metrics(m));
  }
  j["val_metrics"] = std::move(val);
  j["final_train"] = json_from_metrics(report.final_train);
  j["final_val"] = report.final_val ? json_from_metrics(*report.final_val)
                                    : Json(nullptr);
  j["seed"] = report.seed;
  j["config"] = report.config;
  return j;
}

Scalar grad_discrepancy(const Matrix& analytic, const Matrix& numeric,
                        Scalar abs_floor) {
  if (analytic.rows() != numeric.rows() || analytic.cols() != numeric.cols()) {
    throw ContractError("grad_discrepancy: shape mismatch");
  }
  Scalar worst = 0.0;
  for (Index i = 0; i < analytic.rows(); ++i) {
    for (Index j = 0; j < analytic.cols(); ++j) {
      const Scalar err = std::abs(analytic(i, j) - numeric(i, j));
      if (err <= abs_floor) {
        continue;
      }
      const Scalar scale =
          std::max(std::abs(analytic(i, j)), std::abs(numeric(i, j)));
      worst = std::max(worst, err / scale);
    }
  }
  return worst;
}

namespace {

// Random record matching the tiny grad-check schema: two traffic channels,
// every channel drawn uniform in [-1, 1], bbox made valid by construction.
SampleRecord random_record(const PipelineConfig& cfg, Rng& rng, Index serial) {
  SampleRecord r;
  r.id = "gradcheck-" + std::to_string(serial);
  r.label = static_cast<int>(rng.below(2));
  auto fill = [&rng](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) {
        m(i, j) = rng.uniform(-1.0, 1.0);
      }
    }
    return m;
  };
  r.visual_raw = fill(cfg.T, cfg.d_raw);
  r.pose = fill(cfg.T, cfg.d2);
  Matrix raw_box = fill(cfg.T, 4);
  r.bbox.resize(cfg.T, 4);
  for (Index f = 0; f < cfg.T; ++f) {
    r.bbox(f, 0) = raw_box(f, 0);
    r.bbox(f, 1) = raw_box(f, 1);
    r.bbox(f, 2) = raw_box(f, 0) + 0.25 + raw_box(f, 2) * raw_box(f, 2);
    r.bbox(f, 3) = raw_box(f, 1) + 0.25 + raw_box(f, 3) * raw_box(f, 3);
  }
  r.traffic_objects.push_back(TrafficChannel{"objects_a", fill(cfg.T, 2)});
  r.traffic_objects.push_back(TrafficChannel{"objects_b", fill(cfg.T, 3)});
  r.validate();
  return r;
}

struct ClusterShape {
  std::vector<Index> centers_visual, assign_visual;
  std::vector<Index> centers_nonvisual, assign_nonvisual;

  static ClusterShape of(const SampleForward& fwd, bool use_nonvisual) {
    ClusterShape s;
    s.centers_visual = fwd.events_visual.centers;
    s.assign_visual = fwd.events_visual.assignment;
    if (use_nonvisual) {
      s.centers_nonvisual = fwd.events_nonvisual.centers;
      s.assign_nonvisual = fwd.events_nonvisual.assignment;
    }
    return s;
  }
  bool operator==(const ClusterShape&) const = default;
};

Scalar l2_penalty(const ModelParams& params, Scalar lambda) {
  Scalar total = 0.0;
  for_each_param(params, [&total](const std::string&, const Matrix& m) {
    total += m.squaredNorm();
  });
  return lambda * total;
}

}  // namespace

GradCheckReport grad_check(const PipelineConfig& cfg, Index trials,
                           const std::function<void(ModelGrads&)>& tamper) {
  cfg.validate();
  const Index width_cap =
      std::max({cfg.d_raw, cfg.d_v, cfg.d1, cfg.d2, cfg.d_nv, cfg.d_f});
  if (cfg.T > 8 || width_cap > 4) {
    throw ArgumentError(
        "grad_check: requires T <= 8 and all widths <= 4; finite differences "
        "over larger models are too slow to be useful");
  }
  if (trials < 0) {
    throw ArgumentError("grad_check: trials must be >= 0");
  }

  GradCheckReport report;
  std::map<std::string, Scalar> worst_by_block;

  Rng rng(cfg.seed);
  const Scalar h = 1e-5;
  const Scalar abs_floor = 1e-7;
  Index completed = 0;
  Index serial = 0;
  const Index max_attempts = trials * 2 + 16;

  while (completed < trials && serial < max_attempts) {
    const SampleRecord record = random_record(cfg, rng, serial);
    ++serial;
    const DatasetSchema schema = DatasetSchema::infer({record});
    ModelParams params = init_params(cfg, schema, rng);
    const std::vector<int> label{record.label};

    const SampleForward base_fwd = forward_sample(record, params, cfg);
    const ClusterShape base_shape =
        ClusterShape::of(base_fwd, cfg.use_nonvisual);

    // Analytic gradient of BCE + L2 at the base point.
    Vector p(1);
    p(0) = base_fwd.trace.probability;
    const Vector g_p = bce_grad(p, label);
    ModelGrads analytic =
        backward_sample(base_fwd, record, params, cfg, g_p(0));
    {
      std::vector<Matrix*> blocks;
      for_each_param(analytic, [&blocks](const std::string&, Matrix& m) {
        blocks.push_back(&m);
      });
      std::size_t i = 0;
      for_each_param(params, [&](const std::string&, const Matrix& theta) {
        if (theta.size() > 0) {
          *blocks[i] += 2.0 * cfg.l2_lambda * theta;
        }
        ++i;
      });
    }
    if (tamper) {
      tamper(analytic);
    }
    std::map<std::string, const Matrix*> analytic_by_name;
    for_each_param(analytic,
                   [&analytic_by_name](const std::string& name, Matrix& m) {
                     analytic_by_name[name] = &m;
                   });

    // Finite differences block by block; bail out if any probe point lands
    // on a different clustering (the objective is non-smooth there).
    bool smooth = true;
    std::vector<std::pair<std::string, Matrix*>> probe_blocks;
    for_each_param(params,
                   [&probe_blocks](const std::string& name, Matrix& m) {
                     probe_blocks.emplace_back(name, &m);
                   });
    std::map<std::string, Scalar> trial_errors;
    for (auto& [name, block] : probe_blocks) {
      if (block->size() == 0 || !smooth) {
        continue;
      }
      const Matrix saved = *block;
      auto functional = [&](const Matrix& candidate) -> Scalar {
        *block = candidate;
        const SampleForward fwd = forward_sample(record, params, cfg);
        if (!(ClusterShape::of(fwd, cfg.use_nonvisual) == base_shape)) {
          smooth = false;
        }
        Vector prob(1);
        prob(0) = fwd.trace.probability;
        return bce_loss(prob, label) + l2_penalty(params, cfg.l2_lambda);
      };
      const Matrix fd = finite_difference_grad(functional, saved, h);
      *block = saved;
      if (!smooth) {
        break;
      }
      trial_errors[name] =
          grad_discrepancy(*analytic_by_name.at(name), fd, abs_floor);
    }

    if (!smooth) {
      ++report.redraws;
      continue;
    }
    for (const auto& [name, err] : trial_errors) {
      worst_by_block[name] = std::max(worst_by_block[name], err);
    }
    ++completed;
  }

  report.trials = completed;
  for (const auto& [name, err] : worst_by_block) {
    report.blocks.push_back(GradCheckBlock{name, err});
    report.max_rel_error = std::max(report.max_rel_error, err);
  }
  return report;
}

}  // namespace eventfuse
