#include "eventfuse/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "eventfuse/errors.hpp"

namespace eventfuse {

MetricReport evaluate(const Vector& p, const std::vector<int>& y,
                      Scalar threshold) {
  const Index n = p.size();
  if (n == 0) {
    throw ArgumentError("evaluate: empty input");
  }
  if (static_cast<Index>(y.size()) != n) {
    throw ArgumentError("evaluate: " + std::to_string(n) +
                        " probabilities vs " + std::to_string(y.size()) +
                        " labels");
  }
  for (int label : y) {
    if (label != 0 && label != 1) {
      throw ArgumentError("evaluate: labels must be 0 or 1");
    }
  }

  MetricReport report;
  report.threshold = threshold;

  Index tp = 0, fp = 0, tn = 0, fn = 0;
  for (Index i = 0; i < n; ++i) {
    const bool predicted = p(i) >= threshold;
    if (y[static_cast<std::size_t>(i)] == 1) {
      ++report.n_pos;
      predicted ? ++tp : ++fn;
    } else {
      ++report.n_neg;
      predicted ? ++fp : ++tn;
    }
  }

  report.acc = static_cast<Scalar>(tp + tn) / static_cast<Scalar>(n);
  report.precision =
      tp + fp > 0 ? static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fp)
                  : 0.0;
  report.recall =
      tp + fn > 0 ? static_cast<Scalar>(tp) / static_cast<Scalar>(tp + fn)
                  : 0.0;
  report.f1 = report.precision + report.recall > 0.0
                  ? 2.0 * report.precision * report.recall /
                        (report.precision + report.recall)
                  : 0.0;

  if (report.n_pos > 0 && report.n_neg > 0) {
    // Midrank formulation: AUC = (R_pos − n_pos(n_pos+1)/2) / (n_pos·n_neg).
    // Midranks are dyadic rationals, so the sum below is exact and the
    // result matches the O(N²) pairwise count bit for bit.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&p](Index a, Index b) { return p(a) < p(b); });
    Scalar rank_sum_pos = 0.0;
    Index i = 0;
    while (i < n) {
      Index j = i;
      while (j + 1 < n && p(order[static_cast<std::size_t>(j + 1)]) ==
                              p(order[static_cast<std::size_t>(i)])) {
        ++j;
      }
      // ranks i+1 .. j+1 (1-based) share the midrank
      const Scalar midrank = static_cast<Scalar>(i + j + 2) / 2.0;
      for (Index k = i; k <= j; ++k) {
        if (y[static_cast<std::size_t>(order[static_cast<std::size_t>(k)])] ==
            1) {
          rank_sum_pos += midrank;
        }
      }
      i = j + 1;
    }
    const Scalar n_pos = static_cast<Scalar>(report.n_pos);
    report.auc = (rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) /
                 (n_pos * static_cast<Scalar>(report.n_neg));
  }

  return report;
}

Json json_from_metrics(const MetricReport& m) {
  Json j;
  j["auc"] = m.auc ? Json(*m.auc) : Json(nullptr);
  j["acc"] = m.acc;
  j["f1"] = m.f1;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["threshold"] = m.threshold;
  j["n_pos"] = m.n_pos;
  j["n_neg"] = m.n_neg;
  return j;
}

}  // namespace eventfuse
