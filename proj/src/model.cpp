#include "eventfuse/model.hpp"

#include <cmath>
#include <fstream>

#include "eventfuse/errors.hpp"

namespace eventfuse {

DatasetSchema DatasetSchema::infer(const std::vector<SampleRecord>& records) {
  if (records.empty()) {
    throw ArgumentError("DatasetSchema::infer: empty dataset");
  }
  const SampleRecord& first = records.front();
  DatasetSchema schema;
  schema.d_raw = first.visual_raw.cols();
  schema.d2 = first.pose.cols();
  for (const TrafficChannel& ch : first.traffic_objects) {
    schema.traffic.emplace_back(ch.name, ch.data.cols());
  }
  for (const SampleRecord& r : records) {
    schema.check_sample(r);
  }
  return schema;
}

void DatasetSchema::check_sample(const SampleRecord& sample) const {
  auto fail = [&sample](const std::string& what) {
    throw ValidationError("record '" + sample.id + "': " + what);
  };
  if (sample.visual_raw.cols() != d_raw) {
    fail("visual_raw width " + std::to_string(sample.visual_raw.cols()) +
         " != schema d_raw " + std::to_string(d_raw));
  }
  if (sample.pose.cols() != d2) {
    fail("pose width " + std::to_string(sample.pose.cols()) +
         " != schema d2 " + std::to_string(d2));
  }
  if (sample.traffic_objects.size() != traffic.size()) {
    fail("traffic channel count " +
         std::to_string(sample.traffic_objects.size()) + " != schema " +
         std::to_string(traffic.size()));
  }
  for (std::size_t i = 0; i < traffic.size(); ++i) {
    const TrafficChannel& ch = sample.traffic_objects[i];
    if (ch.name != traffic[i].first) {
      fail("traffic channel " + std::to_string(i) + " named '" + ch.name +
           "', schema expects '" + traffic[i].first + "'");
    }
    if (ch.data.cols() != traffic[i].second) {
      fail("traffic channel '" + ch.name + "' width " +
           std::to_string(ch.data.cols()) + " != schema " +
           std::to_string(traffic[i].second));
    }
  }
}

namespace {

Matrix xavier(Rng& rng, Index rows, Index cols) {
  const Scalar bound =
      std::sqrt(6.0 / static_cast<Scalar>(rows + cols));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = rng.uniform(-bound, bound);
    }
  }
  return m;
}

Index relation_width(const PipelineConfig& cfg, const DatasetSchema& schema) {
  const Index n = static_cast<Index>(schema.traffic.size());
  return cfg.d1 * (n + 1) + schema.d2;
}

}  // namespace

ModelParams init_params(const PipelineConfig& cfg, const DatasetSchema& schema,
                        Rng& rng) {
  ModelParams p;
  p.encoder.visual_stub = xavier(rng, schema.d_raw, cfg.d_v);
  if (cfg.use_nonvisual) {
    p.relation.bbox_embed = xavier(rng, 4, cfg.d1);
    for (const auto& [name, width] : schema.traffic) {
      (void)name;
      p.relation.object_embeds.push_back(xavier(rng, width, cfg.d1));
    }
    p.encoder.actaware_stub =
        xavier(rng, relation_width(cfg, schema), cfg.d_nv);
  }

  p.cab.visual.score_weight =
      cfg.use_cab ? xavier(rng, cfg.d_v, cfg.d_v) : Matrix::Zero(cfg.d_v, cfg.d_v);
  p.cab.visual.fuse_weight = xavier(rng, cfg.d_f, 2 * cfg.d_v);
  if (cfg.use_nonvisual) {
    p.cab.nonvisual.score_weight = cfg.use_cab
                                       ? xavier(rng, cfg.d_nv, cfg.d_nv)
                                       : Matrix::Zero(cfg.d_nv, cfg.d_nv);
    p.cab.nonvisual.fuse_weight = xavier(rng, cfg.d_f, 2 * cfg.d_nv);
    p.cab.cross_weight = cfg.use_cab ? xavier(rng, cfg.d_f, cfg.d_f)
                                     : Matrix::Zero(cfg.d_f, cfg.d_f);
  }
  if (cfg.head == HeadKind::Draft) {
    p.cab.head_proj = xavier(rng, cfg.d_f, 2 * cfg.d_f);
    p.cab.head_out = xavier(rng, 1, cfg.d_f);
    p.cab.head_bias = Matrix::Zero(1, 1);
    p.cab.out_weight = Matrix::Zero(1, 2 * cfg.d_f);
    p.cab.out_bias = Matrix::Zero(1, 1);
  } else {
    p.cab.out_weight = xavier(rng, 1, 2 * cfg.d_f);
    p.cab.out_bias = Matrix::Zero(1, 1);
  }
  return p;
}

namespace {

template <typename Params, typename Fn>
void visit_params(Params& params, Fn&& fn) {
  fn("encoder.visual_stub", params.encoder.visual_stub);
  fn("encoder.actaware_stub", params.encoder.actaware_stub);
  fn("relation.bbox_embed", params.relation.bbox_embed);
  for (std::size_t i = 0; i < params.relation.object_embeds.size(); ++i) {
    fn("relation.object_embeds." + std::to_string(i),
       params.relation.object_embeds[i]);
  }
  fn("cab.visual.score_weight", params.cab.visual.score_weight);
  fn("cab.visual.fuse_weight", params.cab.visual.fuse_weight);
  fn("cab.nonvisual.score_weight", params.cab.nonvisual.score_weight);
  fn("cab.nonvisual.fuse_weight", params.cab.nonvisual.fuse_weight);
  fn("cab.cross_weight", params.cab.cross_weight);
  fn("cab.out_weight", params.cab.out_weight);
  fn("cab.out_bias", params.cab.out_bias);
  fn("cab.head_proj", params.cab.head_proj);
  fn("cab.head_out", params.cab.head_out);
  fn("cab.head_bias", params.cab.head_bias);
}

}  // namespace

void for_each_param(
    ModelParams& params,
    const std::function<void(const std::string&, Matrix&)>& fn) {
  visit_params(params, fn);
}

void for_each_param(
    const ModelParams& params,
    const std::function<void(const std::string&, const Matrix&)>& fn) {
  visit_params(params, fn);
}

ModelGrads zeros_like(const ModelParams& like) {
  ModelGrads grads = like;
  for_each_param(grads, [](const std::string&, Matrix& m) {
    m.setZero();
  });
  return grads;
}

void accumulate(ModelGrads& grads, const ModelGrads& other) {
  std::vector<Matrix*> mine;
  for_each_param(grads, [&mine](const std::string&, Matrix& m) {
    mine.push_back(&m);
  });
  std::size_t i = 0;
  for_each_param(other,
                 [&mine, &i](const std::string& name, const Matrix& m) {
                   if (i >= mine.size() || mine[i]->rows() != m.rows() ||
                       mine[i]->cols() != m.cols()) {
                     throw ContractError("accumulate: gradient block '" +
                                         name + "' has mismatched shape");
                   }
                   *mine[i] += m;
                   ++i;
                 });
}

SampleForward forward_sample(const SampleRecord& sample,
                             const ModelParams& params,
                             const PipelineConfig& cfg) {
  if (sample.frames() != cfg.T) {
    throw ValidationError("record '" + sample.id + "' has " +
                          std::to_string(sample.frames()) +
                          " frames, config expects " + std::to_string(cfg.T));
  }
  SampleForward fwd;
  fwd.visual = encode_visual(sample, params.encoder);
  fwd.events_visual = merge(fwd.visual, cfg);

  if (cfg.use_nonvisual) {
    fwd.relation_out = relation_block(sample, params.relation);
    fwd.nonvisual = encode_nonvisual(fwd.relation_out, params.encoder);
    fwd.events_nonvisual = merge(fwd.nonvisual, cfg);
    fwd.trace =
        forward(fwd.events_visual, &fwd.events_nonvisual, params.cab, cfg);
  } else {
    fwd.trace = forward(fwd.events_visual, nullptr, params.cab, cfg);
  }
  return fwd;
}

namespace {

// Average pooling backward: each event row fans out equally to its members.
Matrix unpool(const Matrix& g_events, const EventSet& events, Index t) {
  Matrix g_frames = Matrix::Zero(t, g_events.cols());
  for (Index f = 0; f < t; ++f) {
    const Index c = events.assignment[static_cast<std::size_t>(f)];
    g_frames.row(f) =
        g_events.row(c) /
        static_cast<Scalar>(events.member_counts[static_cast<std::size_t>(c)]);
  }
  return g_frames;
}

}  // namespace

ModelGrads backward_sample(const SampleForward& fwd,
                           const SampleRecord& sample,
                           const ModelParams& params,
                           const PipelineConfig& cfg, Scalar dloss_dp) {
  const EventSet* nonvis_events =
      cfg.use_nonvisual ? &fwd.events_nonvisual : nullptr;
  const CabGrads cab_grads = backward(fwd.trace, fwd.events_visual,
                                      nonvis_events, params.cab, cfg,
                                      dloss_dp);

  ModelGrads grads = zeros_like(params);
  grads.cab.visual = cab_grads.visual;
  grads.cab.nonvisual = cab_grads.nonvisual;
  grads.cab.cross_weight = cab_grads.cross_weight;
  grads.cab.out_weight = cab_grads.out_weight;
  grads.cab.out_bias = cab_grads.out_bias;
  grads.cab.head_proj = cab_grads.head_proj;
  grads.cab.head_out = cab_grads.head_out;
  grads.cab.head_bias = cab_grads.head_bias;

  const Index t = cfg.T;
  const Matrix g_visual_frames =
      unpool(cab_grads.events_visual, fwd.events_visual, t);
  grads.encoder.visual_stub = visual_stub_grad(sample, g_visual_frames);

  if (cfg.use_nonvisual) {
    const Matrix g_nonvisual_frames =
        unpool(cab_grads.events_nonvisual, fwd.events_nonvisual, t);
    const NonvisualGrads nv = nonvisual_backward(
        sample, fwd.relation_out, params.encoder, params.relation,
        g_nonvisual_frames);
    grads.encoder.actaware_stub = nv.actaware_stub;
    grads.relation.bbox_embed = nv.bbox_embed;
    grads.relation.object_embeds = nv.object_embeds;
  }
  return grads;
}

Json checkpoint_to_json(const ModelParams& params, const PipelineConfig& cfg,
                        const DatasetSchema& schema) {
  Json j;
  j["format"] = "eventfuse-checkpoint-v1";
  j["config"] = cfg;
  Json traffic = Json::array();
  for (const auto& [name, width] : schema.traffic) {
    traffic.push_back(Json{{"name", name}, {"width", width}});
  }
  j["schema"] =
      Json{{"d_raw", schema.d_raw}, {"d2", schema.d2}, {"traffic", traffic}};
  Json blocks;
  for_each_param(params, [&blocks](const std::string& name, const Matrix& m) {
    blocks[name] = json_from_matrix(m);
  });
  j["params"] = std::move(blocks);
  return j;
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const PipelineConfig& cfg, const DatasetSchema& schema) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write checkpoint '" + path + "'");
  }
  out << checkpoint_to_json(params, cfg, schema).dump(2) << '\n';
  if (!out) {
    throw IoError("write failed for checkpoint '" + path + "'");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open checkpoint '" + path + "'");
  }
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  Checkpoint ckpt;
  try {
    ckpt.config = j.at("config").get<PipelineConfig>();
    const Json& schema = j.at("schema");
    ckpt.schema.d_raw = schema.at("d_raw").get<Index>();
    ckpt.schema.d2 = schema.at("d2").get<Index>();
    for (const Json& ch : schema.at("traffic")) {
      ckpt.schema.traffic.emplace_back(ch.at("name").get<std::string>(),
                                       ch.at("width").get<Index>());
    }
    // The visitor only sees blocks that exist, so the per-channel embedding
    // slots must be there before it runs.
    ckpt.params.relation.object_embeds.resize(ckpt.schema.traffic.size());
    const Json& blocks = j.at("params");
    for_each_param(ckpt.params,
                   [&blocks](const std::string& name, Matrix& m) {
                     if (!blocks.contains(name)) {
                       throw ParseError("checkpoint missing parameter '" +
                                        name + "'");
                     }
                     m = matrix_from_json(blocks.at(name), name);
                   });
  } catch (const Json::exception& e) {
    throw ParseError("checkpoint '" + path + "': " + e.what());
  }
  check_param_shapes(ckpt.params, ckpt.config, ckpt.schema);
  return ckpt;
}

void check_param_shapes(const ModelParams& params, const PipelineConfig& cfg,
                        const DatasetSchema& schema) {
  auto expect = [](const Matrix& m, Index rows, Index cols,
                   const std::string& name) {
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError("parameter '" + name + "' has shape " +
                       std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", config expects " +
                       std::to_string(rows) + "x" + std::to_string(cols));
    }
  };
  expect(params.encoder.visual_stub, schema.d_raw, cfg.d_v,
         "encoder.visual_stub");
  if (cfg.use_nonvisual) {
    expect(params.encoder.actaware_stub, cfg.d1 * (static_cast<Index>(schema.traffic.size()) + 1) + schema.d2,
           cfg.d_nv, "encoder.actaware_stub");
    expect(params.relation.bbox_embed, 4, cfg.d1, "relation.bbox_embed");
    if (params.relation.object_embeds.size() != schema.traffic.size()) {
      throw ShapeError("parameter 'relation.object_embeds' has " +
                       std::to_string(params.relation.object_embeds.size()) +
                       " blocks, schema expects " +
                       std::to_string(schema.traffic.size()));
    }
    for (std::size_t i = 0; i < schema.traffic.size(); ++i) {
      expect(params.relation.object_embeds[i], schema.traffic[i].second,
             cfg.d1, "relation.object_embeds." + std::to_string(i));
    }
    expect(params.cab.nonvisual.score_weight, cfg.d_nv, cfg.d_nv,
           "cab.nonvisual.score_weight");
    expect(params.cab.nonvisual.fuse_weight, cfg.d_f, 2 * cfg.d_nv,
           "cab.nonvisual.fuse_weight");
    expect(params.cab.cross_weight, cfg.d_f, cfg.d_f, "cab.cross_weight");
  }
  expect(params.cab.visual.score_weight, cfg.d_v, cfg.d_v,
         "cab.visual.score_weight");
  expect(params.cab.visual.fuse_weight, cfg.d_f, 2 * cfg.d_v,
         "cab.visual.fuse_weight");
  expect(params.cab.out_weight, 1, 2 * cfg.d_f, "cab.out_weight");
  expect(params.cab.out_bias, 1, 1, "cab.out_bias");
  if (cfg.head == HeadKind::Draft) {
    expect(params.cab.head_proj, cfg.d_f, 2 * cfg.d_f, "cab.head_proj");
    expect(params.cab.head_out, 1, cfg.d_f, "cab.head_out");
    expect(params.cab.head_bias, 1, 1, "cab.head_bias");
  }
}

}  // namespace eventfuse
