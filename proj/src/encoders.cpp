#include "eventfuse/encoders.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <string>

#include "eventfuse/errors.hpp"

namespace eventfuse {

namespace {

void check_channel_width(const Matrix& data, const Matrix& embed,
                         const std::string& channel) {
  if (data.cols() != embed.rows()) {
    throw ShapeError("relation_block: channel '" + channel + "' has width " +
                     std::to_string(data.cols()) + " but its embedding expects " +
                     std::to_string(embed.rows()));
  }
}

}  // namespace

Matrix relation_block(const SampleRecord& sample,
                      const RelationBlockParams& params) {
  if (sample.traffic_objects.size() != params.object_embeds.size()) {
    throw ShapeError("relation_block: sample has " +
                     std::to_string(sample.traffic_objects.size()) +
                     " traffic channels but params expect " +
                     std::to_string(params.object_embeds.size()));
  }
  check_channel_width(sample.bbox, params.bbox_embed, "bbox");
  const Index d1 = params.bbox_embed.cols();
  const Index t = sample.frames();
  const Index n = static_cast<Index>(sample.traffic_objects.size());

  Index width = d1 * (n + 1) + sample.pose.cols();
  Matrix out(t, width);
  Index col = 0;
  out.block(0, col, t, d1) = matmul(sample.bbox, params.bbox_embed);
  col += d1;
  for (Index j = 0; j < n; ++j) {
    const TrafficChannel& ch = sample.traffic_objects[static_cast<std::size_t>(j)];
    const Matrix& embed = params.object_embeds[static_cast<std::size_t>(j)];
    check_channel_width(ch.data, embed, ch.name);
    if (embed.cols() != d1) {
      throw ShapeError("relation_block: embedding for '" + ch.name +
                       "' outputs width " + std::to_string(embed.cols()) +
                       ", expected d1=" + std::to_string(d1));
    }
    out.block(0, col, t, d1) = matmul(ch.data, embed);
    col += d1;
  }
  out.block(0, col, t, sample.pose.cols()) = sample.pose;
  return out;
}

FeatureSequence encode_visual(const SampleRecord& sample,
                              const EncoderParams& params) {
  if (sample.visual_raw.cols() != params.visual_stub.rows()) {
    throw ShapeError("encode_visual: visual_raw width " +
                     std::to_string(sample.visual_raw.cols()) +
                     " does not match stub input " +
                     std::to_string(params.visual_stub.rows()));
  }
  return FeatureSequence{FeatureSequence::Branch::Visual,
                         matmul(sample.visual_raw, params.visual_stub)};
}

FeatureSequence encode_nonvisual(const Matrix& relation_out,
                                 const EncoderParams& params) {
  if (relation_out.cols() != params.actaware_stub.rows()) {
    throw ShapeError("encode_nonvisual: relation width " +
                     std::to_string(relation_out.cols()) +
                     " does not match stub input " +
                     std::to_string(params.actaware_stub.rows()));
  }
  return FeatureSequence{FeatureSequence::Branch::NonVisual,
                         matmul(relation_out, params.actaware_stub)};
}

Matrix visual_stub_grad(const SampleRecord& sample, const Matrix& g_visual) {
  Matrix raw_t = sample.visual_raw.transpose();
  return matmul(raw_t, g_visual);
}

NonvisualGrads nonvisual_backward(const SampleRecord& sample,
                                  const Matrix& relation_out,
                                  const EncoderParams& enc,
                                  const RelationBlockParams& rel,
                                  const Matrix& g_nonvisual) {
  NonvisualGrads grads;
  Matrix relation_t = relation_out.transpose();
  grads.actaware_stub = matmul(relation_t, g_nonvisual);

  Matrix stub_t = enc.actaware_stub.transpose();
  const Matrix g_relation = matmul(g_nonvisual, stub_t);

  const Index t = sample.frames();
  const Index d1 = rel.bbox_embed.cols();
  Index col = 0;
  Matrix bbox_t = sample.bbox.transpose();
  grads.bbox_embed = matmul(bbox_t, Matrix(g_relation.block(0, col, t, d1)));
  col += d1;
  for (const TrafficChannel& ch : sample.traffic_objects) {
    Matrix ch_t = ch.data.transpose();
    grads.object_embeds.push_back(
        matmul(ch_t, Matrix(g_relation.block(0, col, t, d1))));
    col += d1;
  }
  // Pose passes through unembedded; no parameters behind it.
  return grads;
}

namespace {

// Channel layout emitted by the generator; widths are small so desk-scale
// training stays fast.
struct GeneratorChannel {
  const char* name;
  Index width;
};

constexpr std::array<GeneratorChannel, 6> kTrafficChannels = {{
    {"traffic_neighbor", 6},
    {"traffic_light", 3},
    {"traffic_sign", 3},
    {"crosswalk", 2},
    {"station", 2},
    {"ego_motion", 3},
}};

constexpr Index kLatentDim = 8;

// The visual channel sees the label coordinate only weakly, so the
// non-visual branch carries most of the crossing signal.
constexpr Scalar kVisualLabelScale = 0.35;

Matrix random_projection(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  const Scalar scale = 1.0 / std::sqrt(static_cast<Scalar>(kLatentDim));
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = rng.normal() * scale;
    }
  }
  return m;
}

Vector project(const Matrix& projection, const Vector& latent) {
  // latentᵀ · A, returned as a row of channel values.
  Vector out(projection.cols());
  for (Index j = 0; j < projection.cols(); ++j) {
    Scalar acc = 0.0;
    for (Index i = 0; i < projection.rows(); ++i) {
      acc += latent(i) * projection(i, j);
    }
    out(j) = acc;
  }
  return out;
}

}  // namespace

std::vector<SampleRecord> generate_synthetic(const PipelineConfig& cfg,
                                             Index count,
                                             Index planted_events,
                                             Scalar noise_sigma) {
  if (planted_events < 1 || planted_events > cfg.T) {
    throw ArgumentError("generate_synthetic: planted_events=" +
                        std::to_string(planted_events) +
                        " outside [1, T] with T=" + std::to_string(cfg.T));
  }
  if (noise_sigma < 0.0) {
    throw ArgumentError("generate_synthetic: noise_sigma must be >= 0");
  }
  if (count < 0) {
    throw ArgumentError("generate_synthetic: count must be >= 0");
  }

  Rng rng(cfg.seed);

  // Dataset-level projections: every sample shares the same channel
  // semantics, individual samples differ in latent states and noise.
  Matrix proj_visual = random_projection(rng, kLatentDim, cfg.d_raw);
  proj_visual.row(0) *= kVisualLabelScale;
  const Matrix proj_bbox = random_projection(rng, kLatentDim, 4);
  const Matrix proj_pose = random_projection(rng, kLatentDim, cfg.d2);
  std::vector<Matrix> proj_traffic;
  for (const GeneratorChannel& ch : kTrafficChannels) {
    proj_traffic.push_back(random_projection(rng, kLatentDim, ch.width));
  }

  std::vector<SampleRecord> records;
  records.reserve(static_cast<std::size_t>(count));

  std::vector<Index> cut_pool;
  for (Index s = 0; s < count; ++s) {
    const Index t = cfg.T;
    // Segment boundaries: planted_events−1 distinct cuts in [1, T−1].
    cut_pool.resize(static_cast<std::size_t>(t - 1));
    std::iota(cut_pool.begin(), cut_pool.end(), Index{1});
    rng.shuffle(cut_pool);
    std::vector<Index> cuts(cut_pool.begin(),
                            cut_pool.begin() + (planted_events - 1));
    std::sort(cuts.begin(), cuts.end());
    cuts.push_back(t);

    std::vector<Index> segment_of_frame(static_cast<std::size_t>(t));
    std::vector<PlantedSegment> segments;
    Index start = 0;
    for (Index seg = 0; seg < planted_events; ++seg) {
      const Index end = cuts[static_cast<std::size_t>(seg)];
      for (Index f = start; f < end; ++f) {
        segment_of_frame[static_cast<std::size_t>(f)] = seg;
      }
      segments.push_back(
          PlantedSegment{start, end - 1, static_cast<int>(seg)});
      start = end;
    }

    Matrix latents(planted_events, kLatentDim);
    for (Index seg = 0; seg < planted_events; ++seg) {
      for (Index i = 0; i < kLatentDim; ++i) {
        latents(seg, i) = rng.normal();
      }
    }

    SampleRecord r;
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "synth-%06lld",
                    static_cast<long long>(s));
      r.id = buf;
    }
    r.label = latents(planted_events - 1, 0) > 0.0 ? 1 : 0;
    r.planted_segments = segments;

    auto fill_channel = [&](const Matrix& projection) {
      Matrix data(t, projection.cols());
      for (Index f = 0; f < t; ++f) {
        const Index seg = segment_of_frame[static_cast<std::size_t>(f)];
        Vector row = project(projection, latents.row(seg).transpose());
        if (noise_sigma > 0.0) {
          for (Index c = 0; c < row.size(); ++c) {
            row(c) += noise_sigma * rng.normal();
          }
        }
        data.row(f) = row.transpose();
      }
      return data;
    };

    r.visual_raw = fill_channel(proj_visual);
    const Matrix bbox_raw = fill_channel(proj_bbox);
    r.bbox.resize(t, 4);
    for (Index f = 0; f < t; ++f) {
      // (a, b, c, d) → a valid box; the squared extents keep x1<=x2, y1<=y2
      // for any noise while staying piecewise constant at zero noise.
      const Scalar a = bbox_raw(f, 0);
      const Scalar b = bbox_raw(f, 1);
      const Scalar c = bbox_raw(f, 2);
      const Scalar d = bbox_raw(f, 3);
      r.bbox(f, 0) = a;
      r.bbox(f, 1) = b;
      r.bbox(f, 2) = a + 0.5 + c * c;
      r.bbox(f, 3) = b + 0.5 + d * d;
    }
    r.pose = fill_channel(proj_pose);
    for (std::size_t ch = 0; ch < kTrafficChannels.size(); ++ch) {
      r.traffic_objects.push_back(TrafficChannel{
          kTrafficChannels[ch].name, fill_channel(proj_traffic[ch])});
    }

    r.validate();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace eventfuse
