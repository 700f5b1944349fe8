#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latticeprop/geometry.hpp"
#include "latticeprop/gps.hpp"
#include "latticeprop/lattice.hpp"
#include "latticeprop/learn.hpp"
#include "latticeprop/mcl.hpp"

namespace latticeprop {

// Scene file: {"image":{"h","w","d"},"boxes":[{"cx","cy","w","h","angle_rad"}]}
struct SceneFile {
  Lattice lattice;
  std::vector<OrientedBox> boxes;
};

SceneFile read_scene(const std::string& path);
void write_scene(const std::string& path, const Lattice& lattice,
                 const std::vector<OrientedBox>& boxes);

// Field file: {"rows","cols","factor","logits":[[5 reals] x node_count]}
struct FieldFile {
  int rows = 0;
  int cols = 0;
  int factor = 0;
  std::vector<SlotWeights> logits;
};

FieldFile read_field(const std::string& path);
void write_field(const std::string& path, const Lattice& lattice,
                 const std::vector<SlotWeights>& logits);

// Trained model: field logits plus foreground logits and geometry outputs.
struct ModelFile {
  int rows = 0;
  int cols = 0;
  int factor = 0;
  std::vector<SlotWeights> field_logits;
  std::vector<std::array<double, 2>> fg_logits;
  std::vector<SlotWeights> geo;
};

ModelFile read_model(const std::string& path);
void write_model(const std::string& path, const Lattice& lattice,
                 const TrainResult& result);

void write_detections(const std::string& path,
                      const std::vector<ScoredBox>& boxes);
std::vector<ScoredBox> read_detections(const std::string& path);

void write_metrics(const std::string& path, const DetectionMetrics& metrics);

void write_trap_map(const std::string& path, const std::vector<int>& trap_of,
                    const std::vector<int>& candidates);

void write_omega(const std::string& path, const VectorFieldView& view);

// Coordinate-list dump, "m n value" lines sorted by (n, m).
void write_flow_matrix(const std::string& path, const FlowMatrix& m);

void write_mc_counters(const std::string& path, const McCounters& counters);

void write_trace_csv(const std::string& path,
                     const std::vector<TrainRecord>& trace);

// Binary grayscale PGM (P5), one byte per node.
void write_pgm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& bytes);

// Binary RGB PPM (P6).
void write_ppm(const std::string& path, int width, int height,
               const std::vector<uint8_t>& rgb);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a 64-bit content hash, hex-encoded; used for input digests in run
// manifests.
std::string fnv1a_hex(const std::string& bytes);
std::string hash_file(const std::string& path);

}  // namespace latticeprop
