#include "eventfuse/tmm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "eventfuse/errors.hpp"

namespace eventfuse {

namespace {

// Pairwise squared Euclidean distances, symmetric by construction so exact
// ties survive floating point.
Matrix squared_distances(const Matrix& frames) {
  const Index t = frames.rows();
  Matrix d = Matrix::Zero(t, t);
  for (Index i = 0; i < t; ++i) {
    for (Index j = i + 1; j < t; ++j) {
      Scalar acc = 0.0;
      for (Index c = 0; c < frames.cols(); ++c) {
        const Scalar diff = frames(i, c) - frames(j, c);
        acc += diff * diff;
      }
      d(i, j) = acc;
      d(j, i) = acc;
    }
  }
  return d;
}

}  // namespace

DensityProfile compute_density(const Matrix& frames, Index k) {
  const Index t = frames.rows();
  if (t < 2) {
    throw ArgumentError("compute_density: need at least 2 frames");
  }
  if (!frames.allFinite()) {
    throw NumericError("compute_density: non-finite features");
  }
  if (k < 1 || k > t - 1) {
    throw ArgumentError("compute_density: K=" + std::to_string(k) +
                        " outside [1, T-1] with T=" + std::to_string(t));
  }

  const Matrix dist = squared_distances(frames);

  DensityProfile profile;
  profile.rho.resize(t);
  profile.delta.resize(t);
  profile.gamma.resize(t);
  profile.knn_index.resize(t, k);
  profile.duplicate_group.assign(static_cast<std::size_t>(t), 0);

  std::vector<Index> order(static_cast<std::size_t>(t - 1));
  for (Index i = 0; i < t; ++i) {
    order.clear();
    for (Index j = 0; j < t; ++j) {
      if (j != i) order.push_back(j);
    }
    std::sort(order.begin(), order.end(), [&](Index a, Index b) {
      if (dist(i, a) != dist(i, b)) return dist(i, a) < dist(i, b);
      return a < b;
    });
    // Summing the K distances in ascending order keeps rho bit-identical
    // for frames whose neighborhoods are mirror images of each other.
    Scalar acc = 0.0;
    for (Index n = 0; n < k; ++n) {
      profile.knn_index(i, n) = order[static_cast<std::size_t>(n)];
      acc += dist(i, order[static_cast<std::size_t>(n)]);
    }
    profile.rho(i) = std::exp(-acc / static_cast<Scalar>(k));
  }

  for (Index i = 0; i < t; ++i) {
    bool found = false;
    Scalar best = 0.0;
    for (Index j = 0; j < t; ++j) {
      if (profile.rho(j) > profile.rho(i)) {
        if (!found || dist(i, j) < best) best = dist(i, j);
        found = true;
      }
    }
    if (!found) {
      // Global density maximum (possibly tied): separation is the largest
      // distance to any frame.
      for (Index j = 0; j < t; ++j) {
        if (dist(i, j) > best) best = dist(i, j);
      }
    }
    profile.delta(i) = best;
    profile.gamma(i) = profile.rho(i) * profile.delta(i);
  }
  if (!profile.rho.allFinite() || !profile.delta.allFinite() ||
      !profile.gamma.allFinite()) {
    throw NumericError("compute_density: non-finite density or separation");
  }

  for (Index i = 0; i < t; ++i) {
    Index group = i;
    for (Index j = 0; j < i; ++j) {
      if (dist(i, j) == 0.0) {
        group = profile.duplicate_group[static_cast<std::size_t>(j)];
        break;
      }
    }
    profile.duplicate_group[static_cast<std::size_t>(i)] = group;
  }

  return profile;
}

std::vector<Index> select_centers(const DensityProfile& profile, Index m) {
  const Index t = profile.gamma.size();
  if (m < 1 || m > t) {
    throw ArgumentError("select_centers: M=" + std::to_string(m) +
                        " outside [1, T] with T=" + std::to_string(t));
  }
  std::vector<Index> by_gamma(static_cast<std::size_t>(t));
  std::iota(by_gamma.begin(), by_gamma.end(), Index{0});
  std::sort(by_gamma.begin(), by_gamma.end(), [&](Index a, Index b) {
    if (profile.gamma(a) != profile.gamma(b)) {
      return profile.gamma(a) > profile.gamma(b);
    }
    return a < b;
  });

  // Exact duplicates of a chosen center would carve identical Voronoi
  // cells, so distinct feature rows are preferred; when fewer than m
  // distinct rows exist the leftover slots fall back to plain gamma order.
  std::vector<Index> centers;
  std::vector<Index> skipped;
  std::vector<bool> group_taken(static_cast<std::size_t>(t), false);
  for (Index idx : by_gamma) {
    if (static_cast<Index>(centers.size()) == m) break;
    const Index group = profile.duplicate_group[static_cast<std::size_t>(idx)];
    if (group_taken[static_cast<std::size_t>(group)]) {
      skipped.push_back(idx);
    } else {
      group_taken[static_cast<std::size_t>(group)] = true;
      centers.push_back(idx);
    }
  }
  for (std::size_t i = 0;
       i < skipped.size() && static_cast<Index>(centers.size()) < m; ++i) {
    centers.push_back(skipped[i]);
  }

  std::sort(centers.begin(), centers.end());
  return centers;
}

EventSet assign_and_pool(const Matrix& frames,
                         const std::vector<Index>& centers) {
  const Index t = frames.rows();
  const Index m = static_cast<Index>(centers.size());
  if (m < 1) {
    throw ArgumentError("assign_and_pool: need at least one center");
  }
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (centers[c] < 0 || centers[c] >= t) {
      throw ArgumentError("assign_and_pool: center index out of range");
    }
    if (c > 0 && centers[c] <= centers[c - 1]) {
      throw ArgumentError("assign_and_pool: centers must be strictly increasing");
    }
  }

  const Matrix dist = squared_distances(frames);

  EventSet out;
  out.centers = centers;
  out.assignment.assign(static_cast<std::size_t>(t), 0);
  out.member_counts.assign(static_cast<std::size_t>(m), 0);

  std::vector<Index> cluster_of_center(static_cast<std::size_t>(t), -1);
  for (Index c = 0; c < m; ++c) {
    cluster_of_center[static_cast<std::size_t>(centers[static_cast<std::size_t>(c)])] = c;
  }

  for (Index f = 0; f < t; ++f) {
    const Index own = cluster_of_center[static_cast<std::size_t>(f)];
    if (own >= 0) {
      out.assignment[static_cast<std::size_t>(f)] = own;
      continue;
    }
    Index best = 0;
    for (Index c = 1; c < m; ++c) {
      const Index cand_frame = centers[static_cast<std::size_t>(c)];
      const Index best_frame = centers[static_cast<std::size_t>(best)];
      const Scalar cand_d = dist(f, cand_frame);
      const Scalar best_d = dist(f, best_frame);
      if (cand_d < best_d) {
        best = c;
      } else if (cand_d == best_d) {
        const Index cand_gap = std::abs(cand_frame - f);
        const Index best_gap = std::abs(best_frame - f);
        if (cand_gap < best_gap) best = c;
        // equal gap keeps the earlier (lower-index) center
      }
    }
    out.assignment[static_cast<std::size_t>(f)] = best;
  }

  out.events = Matrix::Zero(m, frames.cols());
  for (Index f = 0; f < t; ++f) {
    const Index c = out.assignment[static_cast<std::size_t>(f)];
    out.events.row(c) += frames.row(f);
    ++out.member_counts[static_cast<std::size_t>(c)];
  }
  for (Index c = 0; c < m; ++c) {
    out.events.row(c) /= static_cast<Scalar>(out.member_counts[static_cast<std::size_t>(c)]);
  }
  return out;
}

EventSet merge(const FeatureSequence& seq, const PipelineConfig& cfg) {
  const Index t = seq.data.rows();
  if (!cfg.use_tmm) {
    // Bypass: every frame is its own event.
    EventSet out;
    out.centers.resize(static_cast<std::size_t>(t));
    std::iota(out.centers.begin(), out.centers.end(), Index{0});
    out.assignment = out.centers;
    out.events = seq.data;
    out.member_counts.assign(static_cast<std::size_t>(t), 1);
    return out;
  }
  const DensityProfile profile = compute_density(seq.data, cfg.K);
  const std::vector<Index> centers = select_centers(profile, cfg.M);
  return assign_and_pool(seq.data, centers);
}

Json json_from_profile(const DensityProfile& profile) {
  Json j;
  j["rho"] = json_from_vector(profile.rho);
  j["delta"] = json_from_vector(profile.delta);
  j["gamma"] = json_from_vector(profile.gamma);
  Json knn = Json::array();
  for (Index i = 0; i < profile.knn_index.rows(); ++i) {
    Json row = Json::array();
    for (Index n = 0; n < profile.knn_index.cols(); ++n) {
      row.push_back(profile.knn_index(i, n));
    }
    knn.push_back(std::move(row));
  }
  j["knn_index"] = std::move(knn);
  return j;
}

Json json_from_events(const EventSet& events) {
  Json j;
  j["centers"] = events.centers;
  j["assignment"] = events.assignment;
  j["events"] = json_from_matrix(events.events);
  j["member_counts"] = events.member_counts;
  return j;
}

}  // namespace eventfuse
