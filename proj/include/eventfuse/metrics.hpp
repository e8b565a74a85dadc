#pragma once

#include <optional>
#include <vector>

#include "eventfuse/json_util.hpp"
#include "eventfuse/types.hpp"

namespace eventfuse {

struct MetricReport {
  std::optional<Scalar> auc;  // absent when y is single-class
  Scalar acc = 0.0;
  Scalar f1 = 0.0;
  Scalar precision = 0.0;
  Scalar recall = 0.0;
  Scalar threshold = 0.5;
  Index n_pos = 0;
  Index n_neg = 0;
};

/// Thresholded classification metrics plus rank-based AUC (Mann-Whitney,
/// ties count 1/2). Predictions use p >= threshold. Lengths must match and
/// be non-empty.
MetricReport evaluate(const Vector& p, const std::vector<int>& y,
                      Scalar threshold = 0.5);

Json json_from_metrics(const MetricReport& m);

}  // namespace eventfuse
