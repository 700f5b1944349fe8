#include "latticeprop/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace latticeprop {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("short write to " + path);
}

static ordered_json parse(const std::string& path) {
  try {
    return ordered_json::parse(read_text_file(path));
  } catch (const json::parse_error& err) {
    throw IoError("invalid JSON in " + path + ": " + err.what());
  }
}

SceneFile read_scene(const std::string& path) {
  const ordered_json doc = parse(path);
  SceneFile scene;
  try {
    const auto& image = doc.at("image");
    scene.lattice = build_lattice(image.at("h").get<int>(),
                                  image.at("w").get<int>(),
                                  image.at("d").get<int>());
    for (const auto& entry : doc.at("boxes")) {
      OrientedBox box;
      box.cx = entry.at("cx").get<double>();
      box.cy = entry.at("cy").get<double>();
      box.w = entry.at("w").get<double>();
      box.h = entry.at("h").get<double>();
      box.angle = entry.at("angle_rad").get<double>();
      scene.boxes.push_back(box);
    }
  } catch (const json::exception& err) {
    throw IoError("malformed scene file " + path + ": " + err.what());
  }
  return scene;
}

void write_scene(const std::string& path, const Lattice& lattice,
                 const std::vector<OrientedBox>& boxes) {
  ordered_json doc;
  doc["image"] = {{"h", lattice.height_px},
                  {"w", lattice.width_px},
                  {"d", lattice.factor}};
  doc["boxes"] = ordered_json::array();
  for (const auto& box : boxes)
    doc["boxes"].push_back({{"cx", box.cx},
                            {"cy", box.cy},
                            {"w", box.w},
                            {"h", box.h},
                            {"angle_rad", box.angle}});
  write_text_file(path, doc.dump(2) + "\n");
}

FieldFile read_field(const std::string& path) {
  const ordered_json doc = parse(path);
  FieldFile field;
  try {
    field.rows = doc.at("rows").get<int>();
    field.cols = doc.at("cols").get<int>();
    field.factor = doc.at("factor").get<int>();
    for (const auto& row : doc.at("logits")) {
      SlotWeights w{};
      if (row.size() != kSlotCount)
        throw IoError("field row in " + path + " does not hold 5 logits");
      for (int s = 0; s < kSlotCount; ++s) w[s] = row[static_cast<size_t>(s)].get<double>();
      field.logits.push_back(w);
    }
  } catch (const json::exception& err) {
    throw IoError("malformed field file " + path + ": " + err.what());
  }
  if (static_cast<int>(field.logits.size()) != field.rows * field.cols)
    throw IoError("field file " + path + " holds " +
                  std::to_string(field.logits.size()) + " rows for a " +
                  std::to_string(field.rows) + "x" +
                  std::to_string(field.cols) + " lattice");
  return field;
}

static ordered_json logits_json(const std::vector<SlotWeights>& logits) {
  ordered_json rows = ordered_json::array();
  for (const auto& w : logits) {
    ordered_json row = ordered_json::array();
    for (int s = 0; s < kSlotCount; ++s) row.push_back(w[static_cast<size_t>(s)]);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_field(const std::string& path, const Lattice& lattice,
                 const std::vector<SlotWeights>& logits) {
  ordered_json doc;
  doc["rows"] = lattice.rows;
  doc["cols"] = lattice.cols;
  doc["factor"] = lattice.factor;
  doc["logits"] = logits_json(logits);
  write_text_file(path, doc.dump() + "\n");
}

ModelFile read_model(const std::string& path) {
  const ordered_json doc = parse(path);
  ModelFile model;
  try {
    model.rows = doc.at("rows").get<int>();
    model.cols = doc.at("cols").get<int>();
    model.factor = doc.at("factor").get<int>();
    for (const auto& row : doc.at("field_logits")) {
      SlotWeights w{};
      for (int s = 0; s < kSlotCount; ++s) w[s] = row.at(static_cast<size_t>(s)).get<double>();
      model.field_logits.push_back(w);
    }
    for (const auto& row : doc.at("fg_logits"))
      model.fg_logits.push_back({row.at(0).get<double>(), row.at(1).get<double>()});
    for (const auto& row : doc.at("geometry")) {
      SlotWeights w{};
      for (int s = 0; s < kSlotCount; ++s) w[s] = row.at(static_cast<size_t>(s)).get<double>();
      model.geo.push_back(w);
    }
  } catch (const json::exception& err) {
    throw IoError("malformed model file " + path + ": " + err.what());
  }
  return model;
}

void write_model(const std::string& path, const Lattice& lattice,
                 const TrainResult& result) {
  ordered_json doc;
  doc["rows"] = lattice.rows;
  doc["cols"] = lattice.cols;
  doc["factor"] = lattice.factor;
  doc["field_logits"] = logits_json(result.field_logits);
  ordered_json fg = ordered_json::array();
  for (const auto& pair : result.fg_logits)
    fg.push_back({pair[0], pair[1]});
  doc["fg_logits"] = std::move(fg);
  doc["geometry"] = logits_json(result.geo);
  write_text_file(path, doc.dump() + "\n");
}

void write_detections(const std::string& path,
                      const std::vector<ScoredBox>& boxes) {
  ordered_json doc;
  doc["boxes"] = ordered_json::array();
  for (const auto& scored : boxes)
    doc["boxes"].push_back({{"cx", scored.box.cx},
                            {"cy", scored.box.cy},
                            {"w", scored.box.w},
                            {"h", scored.box.h},
                            {"angle_rad", scored.box.angle},
                            {"score", scored.score}});
  write_text_file(path, doc.dump(2) + "\n");
}

std::vector<ScoredBox> read_detections(const std::string& path) {
  const ordered_json doc = parse(path);
  std::vector<ScoredBox> out;
  try {
    for (const auto& entry : doc.at("boxes")) {
      ScoredBox scored;
      scored.box.cx = entry.at("cx").get<double>();
      scored.box.cy = entry.at("cy").get<double>();
      scored.box.w = entry.at("w").get<double>();
      scored.box.h = entry.at("h").get<double>();
      scored.box.angle = entry.at("angle_rad").get<double>();
      scored.score = entry.value("score", 1.0);
      out.push_back(scored);
    }
  } catch (const json::exception& err) {
    throw IoError("malformed detections file " + path + ": " + err.what());
  }
  return out;
}

void write_metrics(const std::string& path, const DetectionMetrics& metrics) {
  ordered_json doc;
  doc["precision"] = metrics.precision;
  doc["recall"] = metrics.recall;
  doc["f_score"] = metrics.f_score;
  doc["matches"] = ordered_json::array();
  for (const auto& [p, g] : metrics.matches)
    doc["matches"].push_back({p, g});
  write_text_file(path, doc.dump(2) + "\n");
}

void write_trap_map(const std::string& path, const std::vector<int>& trap_of,
                    const std::vector<int>& candidates) {
  ordered_json doc;
  doc["trap_of"] = trap_of;
  doc["candidates"] = candidates;
  write_text_file(path, doc.dump() + "\n");
}

void write_omega(const std::string& path, const VectorFieldView& view) {
  ordered_json doc = ordered_json::array();
  for (const auto& v : view.omega) doc.push_back({v[0], v[1]});
  write_text_file(path, doc.dump() + "\n");
}

void write_flow_matrix(const std::string& path, const FlowMatrix& m) {
  std::ostringstream out;
  char line[96];
  for (int n = 0; n < m.size; ++n)
    for (const auto& [row, value] : m.cols[static_cast<size_t>(n)]) {
      std::snprintf(line, sizeof(line), "%d %d %.17g\n", row, n, value);
      out << line;
    }
  write_text_file(path, out.str());
}

void write_mc_counters(const std::string& path, const McCounters& counters) {
  ordered_json doc;
  doc["expand_flops"] = counters.expand_flops;
  doc["inflate_ops"] = counters.inflate_ops;
  doc["pruned_entries"] = counters.pruned_entries;
  doc["peak_nnz"] = counters.peak_nnz;
  doc["iterations"] = counters.iterations;
  write_text_file(path, doc.dump(2) + "\n");
}

void write_trace_csv(const std::string& path,
                     const std::vector<TrainRecord>& trace) {
  std::ostringstream out;
  out << "iter,total,l_fg,l_center,l_box\n";
  char line[160];
  for (const auto& record : trace) {
    std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g\n",
                  record.iter, record.loss.total, record.loss.l_fg,
                  record.loss.l_center, record.loss.l_box);
    out << line;
  }
  write_text_file(path, out.str());
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& bytes) {
  if (static_cast<size_t>(width) * height != bytes.size())
    throw ShapeMismatch("write_pgm: " + std::to_string(bytes.size()) +
                        " bytes for " + std::to_string(width) + "x" +
                        std::to_string(height));
  std::ostringstream out;
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  write_text_file(path, out.str());
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb) {
  if (static_cast<size_t>(width) * height * 3 != rgb.size())
    throw ShapeMismatch("write_ppm: " + std::to_string(rgb.size()) +
                        " bytes for " + std::to_string(width) + "x" +
                        std::to_string(height));
  std::ostringstream out;
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()),
            static_cast<std::streamsize>(rgb.size()));
  write_text_file(path, out.str());
}

std::string fnv1a_hex(const std::string& bytes) {
  uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, hash);
  return buf;
}

std::string hash_file(const std::string& path) {
  return fnv1a_hex(read_text_file(path));
}

}  // namespace latticeprop
