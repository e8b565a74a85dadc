#include "eventfuse/datamodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <utility>

#include "eventfuse/errors.hpp"

namespace eventfuse {

Json json_from_matrix(const Matrix& m) {
  Json rows = Json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Index j = 0; j < m.cols(); ++j) {
      row.push_back(m(i, j));
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) {
    throw ParseError("field '" + field + "' must be an array of rows");
  }
  const Index rows = static_cast<Index>(j.size());
  Index cols = -1;
  Matrix m;
  for (Index i = 0; i < rows; ++i) {
    const Json& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array()) {
      throw ParseError("field '" + field + "' row " + std::to_string(i) +
                       " is not an array");
    }
    if (cols < 0) {
      cols = static_cast<Index>(row.size());
      m.resize(rows, cols);
    } else if (static_cast<Index>(row.size()) != cols) {
      throw ParseError("field '" + field + "' is not rectangular at row " +
                       std::to_string(i));
    }
    for (Index c = 0; c < cols; ++c) {
      const Json& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number()) {
        throw ParseError("field '" + field + "' has a non-numeric entry");
      }
      m(i, c) = cell.get<Scalar>();
    }
  }
  if (rows == 0) {
    m.resize(0, 0);
  }
  if (!m.allFinite()) {
    throw ValidationError("field '" + field + "' contains non-finite values");
  }
  return m;
}

Json json_from_vector(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) {
    a.push_back(v(i));
  }
  return a;
}

Vector vector_from_json(const Json& j, const std::string& field) {
  if (!j.is_array()) {
    throw ParseError("field '" + field + "' must be an array");
  }
  Vector v(static_cast<Index>(j.size()));
  for (Index i = 0; i < v.size(); ++i) {
    const Json& cell = j[static_cast<std::size_t>(i)];
    if (!cell.is_number()) {
      throw ParseError("field '" + field + "' has a non-numeric entry");
    }
    v(i) = cell.get<Scalar>();
  }
  return v;
}

namespace {

void check(bool ok, const std::string& record_id, const std::string& message) {
  if (!ok) {
    throw ValidationError("record '" + record_id + "': " + message);
  }
}

}  // namespace

void SampleRecord::validate() const {
  const Index t = visual_raw.rows();
  check(t >= 2, id, "visual_raw must have at least 2 frames");
  check(visual_raw.cols() >= 1, id, "visual_raw must have at least 1 column");
  check(label == 0 || label == 1, id, "label must be 0 or 1");
  check(bbox.rows() == t, id,
        "bbox has " + std::to_string(bbox.rows()) + " rows, expected " +
            std::to_string(t));
  check(bbox.cols() == 4, id, "bbox must have 4 columns");
  check(pose.rows() == t, id,
        "pose has " + std::to_string(pose.rows()) + " rows, expected " +
            std::to_string(t));
  check(pose.cols() >= 1, id, "pose must have at least 1 column");
  for (Index f = 0; f < t; ++f) {
    check(bbox(f, 0) <= bbox(f, 2), id,
          "bbox frame " + std::to_string(f) + " violates x1 <= x2");
    check(bbox(f, 1) <= bbox(f, 3), id,
          "bbox frame " + std::to_string(f) + " violates y1 <= y2");
  }
  for (const TrafficChannel& ch : traffic_objects) {
    check(!ch.name.empty(), id, "traffic channel with empty name");
    check(ch.data.rows() == t, id,
          "traffic channel '" + ch.name + "' has " +
              std::to_string(ch.data.rows()) + " rows, expected " +
              std::to_string(t));
    check(ch.data.cols() >= 1, id,
          "traffic channel '" + ch.name + "' must have at least 1 column");
  }
  check(visual_raw.allFinite() && bbox.allFinite() && pose.allFinite(), id,
        "non-finite feature value");
  for (const TrafficChannel& ch : traffic_objects) {
    check(ch.data.allFinite(), id,
          "traffic channel '" + ch.name + "' has non-finite values");
  }
  if (planted_segments) {
    for (const PlantedSegment& s : *planted_segments) {
      check(s.start_frame >= 0 && s.end_frame < t &&
                s.start_frame <= s.end_frame,
            id, "planted_segments out of range");
    }
  }
}

namespace {

bool same_matrix(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         (a.size() == 0 || (a.array() == b.array()).all());
}

}  // namespace

bool operator==(const TrafficChannel& a, const TrafficChannel& b) {
  return a.name == b.name && same_matrix(a.data, b.data);
}

bool operator==(const PlantedSegment& a, const PlantedSegment& b) {
  return a.start_frame == b.start_frame && a.end_frame == b.end_frame &&
         a.segment_id == b.segment_id;
}

bool operator==(const SampleRecord& a, const SampleRecord& b) {
  return a.id == b.id && a.label == b.label &&
         same_matrix(a.visual_raw, b.visual_raw) &&
         same_matrix(a.bbox, b.bbox) && same_matrix(a.pose, b.pose) &&
         a.traffic_objects == b.traffic_objects &&
         a.planted_segments == b.planted_segments;
}

void PipelineConfig::validate() const {
  if (T < 2) throw ValidationError("config: T must be >= 2");
  if (M < 1 || M >= T) throw ValidationError("config: need 1 <= M < T");
  if (K < 1 || K >= T) throw ValidationError("config: need 1 <= K < T");
  const std::pair<Index, const char*> widths[] = {
      {d_raw, "d_raw"}, {d_v, "d_v"},   {d1, "d1"},
      {d2, "d2"},       {d_nv, "d_nv"}, {d_f, "d_f"}};
  for (const auto& [value, name] : widths) {
    if (value < 1) {
      throw ValidationError(std::string("config: ") + name + " must be >= 1");
    }
  }
  if (!(learning_rate >= 0.0)) {
    throw ValidationError("config: learning_rate must be >= 0");
  }
  if (!(l2_lambda >= 0.0)) {
    throw ValidationError("config: l2_lambda must be >= 0");
  }
  if (!(rmsprop_decay > 0.0 && rmsprop_decay < 1.0)) {
    throw ValidationError("config: rmsprop_decay must be in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ValidationError("config: epsilon must be > 0");
  if (batch_size < 1) throw ValidationError("config: batch_size must be >= 1");
  if (epochs < 0) throw ValidationError("config: epochs must be >= 0");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    throw ValidationError("config: val_fraction must be in [0, 1)");
  }
}

void to_json(Json& j, const PipelineConfig& cfg) {
  j = Json{{"T", cfg.T},
           {"M", cfg.M},
           {"K", cfg.K},
           {"d_raw", cfg.d_raw},
           {"d_v", cfg.d_v},
           {"d1", cfg.d1},
           {"d2", cfg.d2},
           {"d_nv", cfg.d_nv},
           {"d_f", cfg.d_f},
           {"learning_rate", cfg.learning_rate},
           {"l2_lambda", cfg.l2_lambda},
           {"rmsprop_decay", cfg.rmsprop_decay},
           {"epsilon", cfg.epsilon},
           {"batch_size", cfg.batch_size},
           {"epochs", cfg.epochs},
           {"val_fraction", cfg.val_fraction},
           {"seed", cfg.seed},
           {"use_nonvisual", cfg.use_nonvisual},
           {"use_tmm", cfg.use_tmm},
           {"use_cab", cfg.use_cab},
           {"head", cfg.head == HeadKind::Draft ? "draft" : "default"}};
}

void from_json(const Json& j, PipelineConfig& cfg) {
  cfg = PipelineConfig{};  // absent keys keep their defaults
  auto get = [&j](const char* key, auto& into) {
    if (j.contains(key)) {
      j.at(key).get_to(into);
    }
  };
  get("T", cfg.T);
  get("M", cfg.M);
  get("K", cfg.K);
  get("d_raw", cfg.d_raw);
  get("d_v", cfg.d_v);
  get("d1", cfg.d1);
  get("d2", cfg.d2);
  get("d_nv", cfg.d_nv);
  get("d_f", cfg.d_f);
  get("learning_rate", cfg.learning_rate);
  get("l2_lambda", cfg.l2_lambda);
  get("rmsprop_decay", cfg.rmsprop_decay);
  get("epsilon", cfg.epsilon);
  get("batch_size", cfg.batch_size);
  get("epochs", cfg.epochs);
  get("val_fraction", cfg.val_fraction);
  get("seed", cfg.seed);
  get("use_nonvisual", cfg.use_nonvisual);
  get("use_tmm", cfg.use_tmm);
  get("use_cab", cfg.use_cab);
  if (j.contains("head")) {
    const std::string head = j.at("head").get<std::string>();
    if (head == "draft") {
      cfg.head = HeadKind::Draft;
    } else if (head == "default") {
      cfg.head = HeadKind::Default;
    } else {
      throw ValidationError("config: head must be 'default' or 'draft'");
    }
  }
}

Json json_from_record(const SampleRecord& r) {
  Json j;
  j["id"] = r.id;
  j["label"] = r.label;
  j["visual_raw"] = json_from_matrix(r.visual_raw);
  j["bbox"] = json_from_matrix(r.bbox);
  j["pose"] = json_from_matrix(r.pose);
  Json channels = Json::array();
  for (const TrafficChannel& ch : r.traffic_objects) {
    channels.push_back(
        Json{{"name", ch.name}, {"data", json_from_matrix(ch.data)}});
  }
  j["traffic_objects"] = std::move(channels);
  if (r.planted_segments) {
    Json segs = Json::array();
    for (const PlantedSegment& s : *r.planted_segments) {
      segs.push_back(Json{{"start_frame", s.start_frame},
                          {"end_frame", s.end_frame},
                          {"segment_id", s.segment_id}});
    }
    j["planted_segments"] = std::move(segs);
  }
  return j;
}

SampleRecord record_from_json(const Json& j) {
  SampleRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.label = j.at("label").get<int>();
    r.visual_raw = matrix_from_json(j.at("visual_raw"), "visual_raw");
    r.bbox = matrix_from_json(j.at("bbox"), "bbox");
    r.pose = matrix_from_json(j.at("pose"), "pose");
    for (const Json& ch : j.at("traffic_objects")) {
      TrafficChannel channel;
      channel.name = ch.at("name").get<std::string>();
      channel.data = matrix_from_json(ch.at("data"),
                                      "traffic_objects." + channel.name);
      r.traffic_objects.push_back(std::move(channel));
    }
    if (j.contains("planted_segments")) {
      std::vector<PlantedSegment> segs;
      for (const Json& s : j.at("planted_segments")) {
        segs.push_back(PlantedSegment{s.at("start_frame").get<Index>(),
                                      s.at("end_frame").get<Index>(),
                                      s.at("segment_id").get<int>()});
      }
      r.planted_segments = std::move(segs);
    }
  } catch (const Json::exception& e) {
    throw ParseError(std::string("malformed record: ") + e.what());
  }
  return r;
}

std::vector<SampleRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open dataset file '" + path + "'");
  }
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_number) + ": " +
                       e.what());
    }
    SampleRecord r;
    try {
      r = record_from_json(j);
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line_number) + ": " +
                       e.what());
    }
    r.validate();
    records.push_back(std::move(r));
  }
  return records;
}

void save_dataset(const std::vector<SampleRecord>& records,
                  const std::string& path) {
  for (const SampleRecord& r : records) {
    r.validate();
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw IoError("cannot write dataset file '" + path + "'");
  }
  for (const SampleRecord& r : records) {
    out << json_from_record(r).dump() << '\n';
  }
  if (!out) {
    throw IoError("write failed for dataset file '" + path + "'");
  }
}

}  // namespace eventfuse
