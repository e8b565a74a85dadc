#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "eventfuse/encoders.hpp"
#include "eventfuse/errors.hpp"
#include "oracles.hpp"

using namespace eventfuse;

namespace {

Matrix random_matrix(Rng& rng, Index rows, Index cols) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) {
      m(i, j) = rng.uniform(-1.0, 1.0);
    }
  }
  return m;
}

SampleRecord sample_with(const Matrix& bbox, const Matrix& pose,
                         std::vector<TrafficChannel> traffic,
                         const Matrix& visual) {
  SampleRecord r;
  r.id = "t";
  r.label = 0;
  r.visual_raw = visual;
  r.bbox = bbox;
  r.pose = pose;
  r.traffic_objects = std::move(traffic);
  return r;
}

Index distinct_rows(const Matrix& m) {
  std::set<std::vector<Scalar>> rows;
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<Scalar> row(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) {
      row[static_cast<std::size_t>(j)] = m(i, j);
    }
    rows.insert(std::move(row));
  }
  return static_cast<Index>(rows.size());
}

}  // namespace

TEST_CASE("relation block of zeros is zero with the documented width") {
  const Index t = 4, d1 = 3, d2 = 5;
  Matrix bbox = Matrix::Zero(t, 4);
  RelationBlockParams params;
  params.bbox_embed = Matrix::Ones(4, d1);
  params.object_embeds.push_back(Matrix::Ones(2, d1));
  const SampleRecord r = sample_with(
      bbox, Matrix::Zero(t, d2), {TrafficChannel{"x", Matrix::Zero(t, 2)}},
      Matrix::Ones(t, 2));
  const Matrix out = relation_block(r, params);
  CHECK(out.rows() == t);
  CHECK(out.cols() == d1 * 2 + d2);
  CHECK((out.array() == 0.0).all());
}

TEST_CASE("relation block matches a hand-computed row") {
  const Index t = 2;
  Matrix bbox(t, 4);
  bbox << 1, 2, 3, 4, 0, 0, 1, 1;
  Matrix pose(t, 3);
  pose << 7, 8, 9, 0, 0, 0;
  Matrix obj(t, 2);
  obj << 5, 6, 0, 0;

  RelationBlockParams params;
  params.bbox_embed = Matrix::Zero(4, 2);
  params.bbox_embed(0, 0) = 1.0;  // picks x1
  params.bbox_embed(3, 1) = 2.0;  // doubles y2
  params.object_embeds.push_back(Matrix::Identity(2, 2));

  const SampleRecord r =
      sample_with(bbox, pose, {TrafficChannel{"obj", obj}}, Matrix::Ones(t, 1));
  const Matrix out = relation_block(r, params);
  // row 0: bbox [1,2,3,4]·W = [1, 8]; obj [5,6]·I = [5, 6]; pose [7,8,9]
  Matrix expected(1, 7);
  expected << 1, 8, 5, 6, 7, 8, 9;
  CHECK((out.row(0).array() == expected.array()).all());
}

TEST_CASE("relation block width formula at reference sizes") {
  const Index t = 16, d1 = 32, d2 = 36;
  RelationBlockParams params;
  params.bbox_embed = Matrix::Zero(4, d1);
  std::vector<TrafficChannel> traffic;
  for (int j = 0; j < 6; ++j) {
    traffic.push_back(TrafficChannel{"ch" + std::to_string(j),
                                     Matrix::Zero(t, 3)});
    params.object_embeds.push_back(Matrix::Zero(3, d1));
  }
  const SampleRecord r = sample_with(Matrix::Zero(t, 4), Matrix::Zero(t, d2),
                                     std::move(traffic), Matrix::Zero(t, 1));
  const Matrix out = relation_block(r, params);
  CHECK(out.rows() == 16);
  CHECK(out.cols() == 260);  // 32·(6+1) + 36
}

TEST_CASE("relation block names the offending channel") {
  RelationBlockParams params;
  params.bbox_embed = Matrix::Zero(4, 2);
  params.object_embeds.push_back(Matrix::Zero(3, 2));  // expects width 3
  const SampleRecord r = sample_with(
      Matrix::Zero(4, 4), Matrix::Zero(4, 2),
      {TrafficChannel{"light", Matrix::Zero(4, 2)}}, Matrix::Zero(4, 1));
  CHECK_THROWS_WITH_AS(relation_block(r, params), doctest::Contains("light"),
                       ShapeError);
}

TEST_CASE("identity stub encodes to the input, zeros to zero") {
  Rng rng(5);
  const Matrix visual = random_matrix(rng, 6, 4);
  const SampleRecord r = sample_with(Matrix::Zero(6, 4), Matrix::Zero(6, 2),
                                     {}, visual);
  EncoderParams enc;
  enc.visual_stub = Matrix::Identity(4, 4);
  const FeatureSequence seq = encode_visual(r, enc);
  CHECK(seq.branch == FeatureSequence::Branch::Visual);
  CHECK((seq.data.array() == visual.array()).all());

  enc.visual_stub = random_matrix(rng, 4, 3);
  SampleRecord zero = r;
  zero.visual_raw.setZero();
  CHECK((encode_visual(zero, enc).data.array() == 0.0).all());
}

TEST_CASE("stub encoding equals the matmul oracle") {
  Rng rng(6);
  const Matrix relation = random_matrix(rng, 16, 260);
  EncoderParams enc;
  enc.actaware_stub = random_matrix(rng, 260, 384);
  const FeatureSequence seq = encode_nonvisual(relation, enc);
  CHECK(seq.branch == FeatureSequence::Branch::NonVisual);
  const Matrix want = oracle::matmul(relation, enc.actaware_stub);
  CHECK((seq.data.array() == want.array()).all());
}

TEST_CASE("relation block is linear in the embedded channels") {
  Rng rng(8);
  RelationBlockParams params;
  params.bbox_embed = random_matrix(rng, 4, 3);
  params.object_embeds.push_back(random_matrix(rng, 2, 3));

  Matrix bbox = random_matrix(rng, 5, 4);
  bbox.col(2) = (bbox.col(0).array() + 1.0).matrix();  // keep boxes valid
  bbox.col(3) = (bbox.col(1).array() + 1.0).matrix();
  const Matrix obj = random_matrix(rng, 5, 2);
  const SampleRecord one = sample_with(bbox, Matrix::Zero(5, 2),
                                       {TrafficChannel{"o", obj}},
                                       Matrix::Ones(5, 1));
  SampleRecord doubled = one;
  doubled.bbox = 2.0 * bbox;
  doubled.traffic_objects[0].data = 2.0 * obj;

  // Scaling by 2 is exact in floating point, so equality is bitwise.
  const Matrix a = relation_block(one, params);
  const Matrix b = relation_block(doubled, params);
  CHECK((b.array() == (2.0 * a).array()).all());
}

TEST_CASE("encoders are frame-local") {
  Rng rng(12);
  const Matrix visual = random_matrix(rng, 6, 3);
  EncoderParams enc;
  enc.visual_stub = random_matrix(rng, 3, 4);
  const SampleRecord r = sample_with(Matrix::Zero(6, 4), Matrix::Zero(6, 2),
                                     {}, visual);
  SampleRecord reversed = r;
  reversed.visual_raw = visual.colwise().reverse();

  const Matrix fwd = encode_visual(r, enc).data;
  const Matrix rev = encode_visual(reversed, enc).data;
  CHECK((rev.array() == fwd.colwise().reverse().array()).all());
}

TEST_CASE("zero noise plants exactly the requested number of states") {
  PipelineConfig cfg;
  cfg.seed = 900;
  cfg.d_raw = 7;
  cfg.d2 = 5;
  const auto records = generate_synthetic(cfg, 10, 3, 0.0);
  REQUIRE(records.size() == 10);
  for (const SampleRecord& r : records) {
    CHECK(distinct_rows(r.visual_raw) == 3);
    CHECK(distinct_rows(r.pose) == 3);
    CHECK(distinct_rows(r.bbox) == 3);
    for (const TrafficChannel& ch : r.traffic_objects) {
      CHECK(distinct_rows(ch.data) == 3);
    }
    REQUIRE(r.planted_segments.has_value());
    CHECK(r.planted_segments->size() == 3);
    // segments tile [0, T) contiguously
    Index next = 0;
    for (const PlantedSegment& s : *r.planted_segments) {
      CHECK(s.start_frame == next);
      CHECK(s.end_frame >= s.start_frame);
      next = s.end_frame + 1;
    }
    CHECK(next == cfg.T);
  }
}

TEST_CASE("generator is deterministic per seed") {
  PipelineConfig cfg;
  cfg.seed = 1234;
  cfg.d_raw = 5;
  const auto a = generate_synthetic(cfg, 8, 3, 0.1);
  const auto b = generate_synthetic(cfg, 8, 3, 0.1);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
  }
  cfg.seed = 1235;
  const auto c = generate_synthetic(cfg, 8, 3, 0.1);
  CHECK_FALSE(a[0] == c[0]);
}

TEST_CASE("labels stay roughly balanced") {
  PipelineConfig cfg;
  cfg.seed = 77;
  cfg.d_raw = 4;
  cfg.d2 = 4;
  const auto records = generate_synthetic(cfg, 1000, 3, 0.1);
  int positives = 0;
  for (const SampleRecord& r : records) {
    positives += r.label;
  }
  const double fraction = static_cast<double>(positives) / 1000.0;
  CHECK(fraction >= 0.4);
  CHECK(fraction <= 0.6);
}

TEST_CASE("generator rejects impossible segment counts") {
  PipelineConfig cfg;
  CHECK_THROWS_AS(generate_synthetic(cfg, 1, 20, 0.0), ArgumentError);
  CHECK_THROWS_AS(generate_synthetic(cfg, 1, 0, 0.0), ArgumentError);
  CHECK_THROWS_AS(generate_synthetic(cfg, 1, 3, -0.5), ArgumentError);
  CHECK(generate_synthetic(cfg, 0, 3, 0.0).empty());
}
