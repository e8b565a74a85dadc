#pragma once

#include <vector>

#include "eventfuse/datamodel.hpp"
#include "eventfuse/types.hpp"

namespace eventfuse {

/// Density-peaks statistics for the T frames of one sequence.
///
/// rho(t)   = exp(−mean squared distance to the K nearest neighbors),
///            so rho ∈ (0, 1], higher for frames in tight groups.
/// delta(t) = squared distance to the nearest strictly denser frame, or the
///            maximum squared distance to any frame when none is denser.
/// gamma(t) = rho(t) · delta(t), the center-candidate score.
struct DensityProfile {
  Vector rho;
  Vector delta;
  Vector gamma;
  IndexMatrix knn_index;               // T×K neighbor indices, nearest first
  std::vector<Index> duplicate_group;  // lowest frame index with identical
                                       // features; groups exact duplicates
};

/// M pooled events of one branch, in temporal order of their centers.
struct EventSet {
  std::vector<Index> centers;     // M frame indices, strictly increasing
  std::vector<Index> assignment;  // length T, cluster id in [0, M)
  Matrix events;                  // M×d, row m = mean of member frames
  std::vector<Index> member_counts;

  Index size() const { return static_cast<Index>(centers.size()); }
};

/// Computes rho/delta/gamma over the rows of `frames` using squared
/// Euclidean distances. The KNN excludes the frame itself; k must lie in
/// [1, T−1]. Ties in density fall to the "no denser point" branch only for
/// frames at the global density maximum.
DensityProfile compute_density(const Matrix& frames, Index k);

/// Picks the m frames with the largest gamma as cluster centers, preferring
/// frames with distinct feature rows: exact duplicates of an already chosen
/// center are skipped while distinct candidates remain, then the remaining
/// slots are filled in gamma order. Ties break toward the smaller frame
/// index. Returns centers sorted by temporal position.
std::vector<Index> select_centers(const DensityProfile& profile, Index m);

/// Assigns every frame to the nearest center (squared distance, ties to the
/// temporally nearest then lowest-index center; centers always own
/// themselves) and average-pools each cluster into one event vector.
EventSet assign_and_pool(const Matrix& frames,
                         const std::vector<Index>& centers);

/// Full temporal merging for one branch: density → centers → pooling.
/// With cfg.use_tmm == false every frame becomes its own event.
EventSet merge(const FeatureSequence& seq, const PipelineConfig& cfg);

Json json_from_profile(const DensityProfile& profile);
Json json_from_events(const EventSet& events);

}  // namespace eventfuse
