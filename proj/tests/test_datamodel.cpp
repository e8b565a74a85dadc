#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>

#include "eventfuse/datamodel.hpp"
#include "eventfuse/encoders.hpp"
#include "eventfuse/errors.hpp"

using namespace eventfuse;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("eventfuse-datamodel-" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const {
    return (path / name).string();
  }
};

SampleRecord small_record(Index t = 16) {
  SampleRecord r;
  r.id = "sample-0";
  r.label = 1;
  r.visual_raw = Matrix::Constant(t, 3, 0.25);
  r.bbox = Matrix::Zero(t, 4);
  for (Index f = 0; f < t; ++f) {
    r.bbox(f, 2) = 1.0;
    r.bbox(f, 3) = 2.0;
  }
  r.pose = Matrix::Constant(t, 6, -0.5);
  r.traffic_objects.push_back(TrafficChannel{"light", Matrix::Zero(t, 2)});
  r.planted_segments = std::vector<PlantedSegment>{{0, t - 1, 0}};
  return r;
}

}  // namespace

TEST_CASE("empty file loads as an empty dataset") {
  TempDir dir;
  const std::string path = dir.file("empty.jsonl");
  std::ofstream(path).close();
  CHECK(load_dataset(path).empty());
}

TEST_CASE("one record round-trips through the file format") {
  TempDir dir;
  const SampleRecord r = small_record();
  save_dataset({r}, dir.file("one.jsonl"));
  const auto loaded = load_dataset(dir.file("one.jsonl"));
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0] == r);
  CHECK(loaded[0].frames() == 16);
  CHECK(loaded[0].pose.rows() == 16);
  CHECK(loaded[0].bbox.rows() == 16);
}

TEST_CASE("pose frame count mismatch is rejected naming the field") {
  SampleRecord r = small_record();
  r.pose = Matrix::Zero(15, 6);
  CHECK_THROWS_WITH_AS(r.validate(),
                       doctest::Contains("pose"), ValidationError);
}

TEST_CASE("validation catches bad boxes and labels") {
  SampleRecord bad_box = small_record();
  bad_box.bbox(3, 2) = bad_box.bbox(3, 0) - 1.0;  // x2 < x1
  CHECK_THROWS_AS(bad_box.validate(), ValidationError);

  SampleRecord bad_label = small_record();
  bad_label.label = 2;
  CHECK_THROWS_AS(bad_label.validate(), ValidationError);

  SampleRecord fine = small_record();
  CHECK_NOTHROW(fine.validate());
}

TEST_CASE("malformed lines report the line number") {
  TempDir dir;
  const std::string path = dir.file("broken.jsonl");
  {
    std::ofstream out(path);
    out << json_from_record(small_record()).dump() << "\n";
    out << "{not json\n";
  }
  CHECK_THROWS_WITH_AS(load_dataset(path), doctest::Contains("line 2"),
                       ParseError);
}

TEST_CASE("io errors for missing and unwritable paths") {
  CHECK_THROWS_AS(load_dataset("/no/such/dataset.jsonl"), IoError);
  CHECK_THROWS_AS(save_dataset({small_record()}, "/no/such/dir/out.jsonl"),
                  IoError);
}

TEST_CASE("empty dataset saves to an empty file and loads back") {
  TempDir dir;
  const std::string path = dir.file("none.jsonl");
  save_dataset({}, path);
  CHECK(fs::file_size(path) == 0);
  CHECK(load_dataset(path).empty());
}

TEST_CASE("random datasets round-trip exactly") {
  TempDir dir;
  PipelineConfig cfg;
  cfg.seed = 2024;
  cfg.d_raw = 5;
  cfg.d2 = 4;
  const auto records = generate_synthetic(cfg, 25, 3, 0.2);
  const std::string path = dir.file("round.jsonl");
  save_dataset(records, path);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i] == records[i]);
  }
}

TEST_CASE("config defaults are valid and json round-trips") {
  PipelineConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.T == 16);
  CHECK(cfg.M == 3);
  CHECK(cfg.d1 == 32);
  CHECK(cfg.d_nv == 384);
  CHECK(cfg.learning_rate == 1e-5);
  CHECK(cfg.l2_lambda == 1e-3);
  CHECK(cfg.batch_size == 2);

  cfg.M = 5;
  cfg.head = HeadKind::Draft;
  cfg.use_tmm = false;
  const Json j = cfg;
  const PipelineConfig back = j.get<PipelineConfig>();
  CHECK(back.M == 5);
  CHECK(back.head == HeadKind::Draft);
  CHECK_FALSE(back.use_tmm);
}

TEST_CASE("config invariants are enforced") {
  PipelineConfig cfg;
  cfg.M = cfg.T;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = PipelineConfig{};
  cfg.K = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = PipelineConfig{};
  cfg.learning_rate = -1e-5;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  cfg = PipelineConfig{};
  cfg.rmsprop_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);

  const Json bad_head = Json{{"head", "bogus"}};
  CHECK_THROWS_AS(bad_head.get<PipelineConfig>(), ValidationError);
}

TEST_CASE("partial config json keeps defaults for absent keys") {
  const Json j = Json{{"M", 4}, {"use_cab", false}};
  const PipelineConfig cfg = j.get<PipelineConfig>();
  CHECK(cfg.M == 4);
  CHECK_FALSE(cfg.use_cab);
  CHECK(cfg.T == 16);
  CHECK(cfg.d_f == 128);
}
