// latticeprop: scene generation, inference (cp | gps | mc), training,
// benchmarking, rendering and evaluation on synthetic lattice scenes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latticeprop/cp.hpp"
#include "latticeprop/geometry.hpp"
#include "latticeprop/gps.hpp"
#include "latticeprop/io.hpp"
#include "latticeprop/lattice.hpp"
#include "latticeprop/learn.hpp"
#include "latticeprop/log.hpp"
#include "latticeprop/mcl.hpp"
#include "latticeprop/synth.hpp"

namespace lp = latticeprop;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

// exit codes: 2 invalid args, 3 placement, 4 file, 5 algorithm, 6 diverged
int exit_code_for(const lp::Error& err) {
  const std::string& name = err.name();
  if (name == "PlacementFailed") return 3;
  if (name == "IoError") return 4;
  if (name == "DivergedLoss") return 6;
  return 5;
}

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

struct Manifest {
  std::string command;
  ordered_json config = ordered_json::object();
  ordered_json inputs = ordered_json::object();
  ordered_json outputs = ordered_json::array();
  ordered_json timing = ordered_json::object();

  void add_input(const std::string& path) {
    inputs[path] = lp::hash_file(path);
  }
  void write(const std::string& primary_output) const {
    ordered_json doc;
    doc["command"] = command;
    doc["version"] = kVersion;
    doc["config"] = config;
    doc["inputs"] = inputs;
    doc["outputs"] = outputs;
    doc["timing"] = timing;  // the only key golden comparisons may ignore
    lp::write_text_file(primary_output + ".manifest.json", doc.dump(2) + "\n");
  }
};

struct SceneBundle {
  lp::Lattice lattice;
  std::vector<lp::OrientedBox> boxes;
  lp::SceneLabels labels;
};

SceneBundle load_scene(const std::string& path) {
  const lp::SceneFile file = lp::read_scene(path);
  SceneBundle bundle;
  bundle.lattice = file.lattice;
  bundle.boxes = file.boxes;
  bundle.labels = lp::label_scene(file.lattice, file.boxes);
  return bundle;
}

// Per-node inputs for the detection tail. Without a trained model the
// synthetic labels stand in for the predictor outputs.
struct InferInputs {
  lp::CorrelationField field;
  std::vector<uint8_t> fg_mask;
  std::vector<double> fg_conf;
  std::vector<std::optional<lp::BoxGeometry>> geos;
};

InferInputs inputs_from_labels(const SceneBundle& scene,
                               lp::CorrelationField field) {
  InferInputs in;
  in.field = std::move(field);
  in.fg_mask = scene.labels.fg_mask;
  const int n = scene.lattice.node_count();
  in.fg_conf.assign(n, 0.0);
  in.geos.resize(n);
  for (int i = 0; i < n; ++i) {
    if (!scene.labels.fg_mask[i]) continue;
    in.fg_conf[i] = 1.0;
    in.geos[i] = scene.labels.box_targets[i];
  }
  return in;
}

InferInputs inputs_from_model(const SceneBundle& scene,
                              const lp::ModelFile& model) {
  if (model.rows != scene.lattice.rows || model.cols != scene.lattice.cols)
    throw lp::LatticeMismatch("model grid " + std::to_string(model.rows) + "x" +
                              std::to_string(model.cols) +
                              " does not match the scene lattice");
  InferInputs in;
  in.field = lp::normalize_field(scene.lattice, model.field_logits);
  const auto prob = lp::fg_probabilities(model.fg_logits);
  const int n = scene.lattice.node_count();
  in.fg_mask.assign(n, 0);
  in.fg_conf.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    in.fg_conf[i] = prob[i][1];
    in.fg_mask[i] = prob[i][1] > 0.5;
  }
  in.geos = lp::geometry_predictions(scene.lattice, model.geo, in.fg_mask);
  return in;
}

struct InferOptions {
  std::string algo = "gps";
  std::string merge = "regress";
  double min_conf = 0.1;
  int max_steps = 0;  // 0 = rows + cols, the propagation horizon
  double tol = 1e-6;
  double trap_merge_distance = 3.0;
  int mc_iters = 50;
  double mc_threshold = 1e-4;
  double mc_tol = 1e-9;
  double nms_iou = 0.5;
  int threads = 1;
};

struct InferOutcome {
  lp::ClusterAssignment assignment;
  std::vector<lp::ScoredBox> detections;
  ordered_json counters = ordered_json::object();
  ordered_json timing = ordered_json::object();
  std::optional<lp::McResult> mc;  // kept for the flow/counter dumps
};

InferOutcome run_inference(const SceneBundle& scene, const InferInputs& in,
                           const InferOptions& opt) {
  InferOutcome out;
  const double t0 = now_ms();
  if (opt.algo == "cp") {
    const int max_steps = opt.max_steps > 0
                              ? opt.max_steps
                              : scene.lattice.rows + scene.lattice.cols;
    const lp::CpRunResult run =
        lp::cp_run(scene.lattice, in.field, lp::init_one_hot(scene.lattice),
                   max_steps, opt.tol, opt.threads);
    out.assignment = lp::extract_centers(run.state, in.fg_mask, opt.min_conf);
    out.counters["cp_steps"] = run.steps_used;
    out.counters["cp_update_count"] = run.update_count;
  } else if (opt.algo == "gps") {
    const lp::TrapMap traps =
        lp::greedy_paths(scene.lattice, in.field, in.fg_mask, opt.threads);
    if (!traps.cycle_nodes.empty())
      throw lp::CycleDetected(std::to_string(traps.cycle_nodes.size()) +
                              " greedy paths revisited a node, first at node " +
                              std::to_string(traps.cycle_nodes.front()));
    const lp::MergeResult merged = lp::merge_close_candidates(
        scene.lattice, in.field, traps, opt.trap_merge_distance);
    out.assignment = merged.assignment;
    out.counters["gps_hops"] = traps.total_hops;
    out.counters["gps_candidates_before_merge"] =
        static_cast<long long>(traps.candidates.size());
    out.counters["gps_merges"] = merged.merges;
  } else if (opt.algo == "mc") {
    const lp::FlowMatrix m0 = lp::build_flow_matrix(scene.lattice, in.field);
    lp::McResult result = lp::mc_iterate(m0, opt.mc_iters, opt.mc_threshold,
                                         opt.mc_tol, opt.threads);
    const lp::ClusterAssignment all = lp::mc_clusters(result.m);
    out.assignment.center_of.assign(scene.lattice.node_count(), -1);
    for (int i = 0; i < scene.lattice.node_count(); ++i) {
      if (!in.fg_mask[i]) continue;
      const int c = all.center_of[i];
      if (c < 0) continue;
      out.assignment.center_of[i] = c;
      out.assignment.clusters[c].push_back(i);
    }
    out.counters["mc_expand_flops"] = result.counters.expand_flops;
    out.counters["mc_inflate_ops"] = result.counters.inflate_ops;
    out.counters["mc_pruned_entries"] = result.counters.pruned_entries;
    out.counters["mc_peak_nnz"] = result.counters.peak_nnz;
    out.counters["mc_iterations"] = result.counters.iterations;
    out.mc = std::move(result);
  } else {
    throw lp::ShapeMismatch("unknown algorithm " + opt.algo);
  }
  const double t1 = now_ms();

  std::vector<lp::ScoredBox> boxes;
  if (opt.merge == "pca") {
    for (const auto& [center, members] : out.assignment.clusters) {
      double conf = 0;
      for (int node : members) conf += in.fg_conf[node];
      boxes.push_back({lp::pca_box_from_cluster(members, scene.lattice),
                       conf / members.size()});
    }
  } else if (opt.merge == "regress") {
    boxes = lp::merge_by_center(in.geos, in.fg_conf, out.assignment,
                                scene.lattice);
  } else {
    throw lp::ShapeMismatch("unknown merge path " + opt.merge);
  }
  out.detections = lp::nms(std::move(boxes), opt.nms_iou);
  const double t2 = now_ms();

  out.timing["grouping_ms"] = t1 - t0;
  out.timing["boxes_ms"] = t2 - t1;
  return out;
}

ordered_json scene_config_json(const lp::SceneConfig& config, uint64_t seed) {
  ordered_json j;
  j["seed"] = seed;
  j["h"] = config.height_px;
  j["w"] = config.width_px;
  j["d"] = config.factor;
  j["boxes"] = config.n_boxes;
  j["scale_min"] = config.scale_range[0];
  j["scale_max"] = config.scale_range[1];
  j["aspect_min"] = config.aspect_range[0];
  j["aspect_max"] = config.aspect_range[1];
  j["angle_min"] = config.angle_range[0];
  j["angle_max"] = config.angle_range[1];
  j["allow_overlap"] = config.allow_overlap;
  j["overlap_cap"] = config.overlap_cap;
  return j;
}

// ---------------------------------------------------------------- generate
int cmd_generate(uint64_t seed, lp::SceneConfig config,
                 const std::string& out_path, const std::string& field_path) {
  const lp::SyntheticScene scene = lp::generate_scene(seed, config);
  lp::write_scene(out_path, scene.lattice, scene.gt_boxes);
  Manifest manifest;
  manifest.command = "generate";
  manifest.config = scene_config_json(config, seed);
  manifest.outputs.push_back(out_path);
  if (!field_path.empty()) {
    const lp::CorrelationField field =
        lp::ideal_field(scene.lattice, scene.labels);
    lp::write_field(field_path, scene.lattice, field.logits);
    manifest.outputs.push_back(field_path);
  }
  manifest.write(out_path);
  LP_INFO("generate: wrote %s with %zu boxes", out_path.c_str(),
          scene.gt_boxes.size());
  return 0;
}

// ------------------------------------------------------------------- infer
int cmd_infer(const std::string& scene_path, const std::string& field_path,
              const std::string& model_path, bool use_ideal,
              const InferOptions& opt, const std::string& out_path,
              const std::string& trap_path, const std::string& heatmap_prefix,
              const std::vector<int>& heatmap_steps,
              const std::string& flow_path, const std::string& counters_path) {
  const SceneBundle scene = load_scene(scene_path);
  Manifest manifest;
  manifest.command = "infer";
  manifest.add_input(scene_path);

  InferInputs in;
  if (!model_path.empty()) {
    in = inputs_from_model(scene, lp::read_model(model_path));
    manifest.add_input(model_path);
  } else if (!field_path.empty()) {
    const lp::FieldFile file = lp::read_field(field_path);
    if (file.rows != scene.lattice.rows || file.cols != scene.lattice.cols)
      throw lp::LatticeMismatch("field grid does not match the scene lattice");
    in = inputs_from_labels(
        scene, lp::normalize_field(scene.lattice, file.logits));
    manifest.add_input(field_path);
  } else if (use_ideal) {
    in = inputs_from_labels(scene,
                            lp::ideal_field(scene.lattice, scene.labels));
  } else {
    throw lp::IoError("infer needs --field, --model or --ideal");
  }

  const InferOutcome outcome = run_inference(scene, in, opt);
  lp::write_detections(out_path, outcome.detections);

  if (outcome.mc.has_value()) {
    if (!flow_path.empty()) {
      lp::write_flow_matrix(flow_path, outcome.mc->m);
      manifest.outputs.push_back(flow_path);
    }
    if (!counters_path.empty()) {
      lp::write_mc_counters(counters_path, outcome.mc->counters);
      manifest.outputs.push_back(counters_path);
    }
  }

  if (!trap_path.empty() && opt.algo == "gps") {
    const lp::TrapMap traps =
        lp::greedy_paths(scene.lattice, in.field, in.fg_mask, opt.threads);
    const lp::MergeResult merged = lp::merge_close_candidates(
        scene.lattice, in.field, traps, opt.trap_merge_distance);
    lp::write_trap_map(trap_path, merged.trap_of, merged.candidates);
    manifest.outputs.push_back(trap_path);
  }

  if (!heatmap_prefix.empty()) {
    std::vector<int> tracked;
    for (const auto& [center, members] : outcome.assignment.clusters)
      tracked.push_back(center);
    lp::ConfidenceState state = lp::init_one_hot(scene.lattice);
    int done = 0;
    for (int step : heatmap_steps) {
      while (done < step) {
        state = lp::cp_step(scene.lattice, in.field, state, opt.threads);
        ++done;
      }
      const auto bytes = lp::confidence_heatmap(scene.lattice, state, tracked);
      const std::string path =
          heatmap_prefix + "_step" + std::to_string(step) + ".pgm";
      lp::write_pgm(path, scene.lattice.cols, scene.lattice.rows, bytes);
      manifest.outputs.push_back(path);
    }
  }

  manifest.config["algo"] = opt.algo;
  manifest.config["merge"] = opt.merge;
  manifest.config["min_conf"] = opt.min_conf;
  manifest.config["max_steps"] = opt.max_steps;
  manifest.config["tol"] = opt.tol;
  manifest.config["dt"] = opt.trap_merge_distance;
  manifest.config["mc_iters"] = opt.mc_iters;
  manifest.config["mc_threshold"] = opt.mc_threshold;
  manifest.config["mc_tol"] = opt.mc_tol;
  manifest.config["nms_iou"] = opt.nms_iou;
  manifest.config["threads"] = opt.threads;
  manifest.config["counters"] = outcome.counters;
  manifest.timing = outcome.timing;
  manifest.outputs.push_back(out_path);
  manifest.write(out_path);
  LP_INFO("infer: %zu detections via %s", outcome.detections.size(),
          opt.algo.c_str());
  return 0;
}

// ------------------------------------------------------------------- train
int cmd_train(const std::string& scene_path, lp::TrainConfig config,
              const std::string& out_path, const std::string& trace_path,
              const std::string& eval_path, const InferOptions& infer_opt) {
  const SceneBundle scene = load_scene(scene_path);
  Manifest manifest;
  manifest.command = "train";
  manifest.add_input(scene_path);

  const double t0 = now_ms();
  lp::TrainResult result;
  try {
    result = lp::train(scene.lattice, scene.labels, config);
  } catch (const lp::DivergedLoss& err) {
    if (!trace_path.empty()) lp::write_trace_csv(trace_path, err.trace());
    throw;
  }
  const double t1 = now_ms();

  lp::write_model(out_path, scene.lattice, result);
  manifest.outputs.push_back(out_path);
  if (!trace_path.empty()) {
    lp::write_trace_csv(trace_path, result.trace);
    manifest.outputs.push_back(trace_path);
  }

  // final eval: GPS inference with the trained model against the scene
  // boxes; an undertrained field can defeat inference without invalidating
  // the training run itself
  lp::ModelFile model;
  model.rows = scene.lattice.rows;
  model.cols = scene.lattice.cols;
  model.factor = scene.lattice.factor;
  model.field_logits = result.field_logits;
  model.fg_logits = result.fg_logits;
  model.geo = result.geo;
  lp::DetectionMetrics metrics;
  try {
    const InferInputs in = inputs_from_model(scene, model);
    const InferOutcome outcome = run_inference(scene, in, infer_opt);
    std::vector<lp::OrientedBox> pred_boxes;
    for (const auto& scored : outcome.detections)
      pred_boxes.push_back(scored.box);
    metrics = lp::evaluate(pred_boxes, scene.boxes, 0.5);
  } catch (const lp::Error& err) {
    LP_WARN("train: final eval failed (%s: %s), scoring 0", err.name().c_str(),
            err.what());
  }
  if (!eval_path.empty()) {
    lp::write_metrics(eval_path, metrics);
    manifest.outputs.push_back(eval_path);
  }

  manifest.config["alpha"] = config.alpha;
  manifest.config["beta"] = config.beta;
  manifest.config["lr"] = config.lr;
  manifest.config["iters"] = config.iters;
  manifest.config["seed"] = config.seed;
  manifest.config["threads"] = config.threads;
  manifest.config["initial_total"] = result.trace.front().loss.total;
  manifest.config["final_total"] = result.trace.back().loss.total;
  manifest.config["f_score"] = metrics.f_score;
  manifest.timing["train_ms"] = t1 - t0;
  manifest.write(out_path);
  LP_INFO("train: loss %.6f -> %.6f, F=%.3f",
          result.trace.front().loss.total, result.trace.back().loss.total,
          metrics.f_score);
  return 0;
}

// ------------------------------------------------------------------- bench
int cmd_bench(int size, int repeats, uint64_t seed, int boxes,
              const std::string& out_path, int threads) {
  lp::SceneConfig config;
  config.height_px = size * 16;
  config.width_px = size * 16;
  config.factor = 16;
  config.n_boxes = boxes;
  config.scale_range = {size * 16 * 0.15, size * 16 * 0.4};
  config.aspect_range = {1.0, 4.0};
  const lp::SyntheticScene scene = lp::generate_scene(seed, config);
  const lp::CorrelationField field =
      lp::ideal_field(scene.lattice, scene.labels);

  auto median = [](std::vector<double> samples) {
    std::sort(samples.begin(), samples.end());
    return samples[samples.size() / 2];
  };

  std::vector<double> cp_times, gps_times;
  lp::CpRunResult cp_result;
  long long gps_hops = 0;
  size_t gps_candidates = 0;
  const int max_steps = scene.lattice.rows + scene.lattice.cols;
  for (int r = 0; r < repeats; ++r) {
    const double a = now_ms();
    cp_result = lp::cp_run(scene.lattice, field, lp::init_one_hot(scene.lattice),
                           max_steps, 1e-6, threads);
    const double b = now_ms();
    const lp::TrapMap traps =
        lp::greedy_paths(scene.lattice, field, scene.labels.fg_mask, threads);
    const lp::MergeResult merged =
        lp::merge_close_candidates(scene.lattice, field, traps, 3.0);
    const double c = now_ms();
    cp_times.push_back(b - a);
    gps_times.push_back(c - b);
    gps_hops = traps.total_hops;
    gps_candidates = merged.candidates.size();
  }

  const lp::FlowMatrix m0 = lp::build_flow_matrix(scene.lattice, field);
  const lp::McResult mc = lp::mc_iterate(m0, 50, 1e-4, 1e-9, threads);

  ordered_json doc;
  doc["config"] = {{"size", size},
                   {"repeats", repeats},
                   {"seed", seed},
                   {"boxes", boxes},
                   {"threads", threads}};
  doc["counters"] = {
      {"cp_steps", cp_result.steps_used},
      {"cp_update_count", cp_result.update_count},
      {"gps_hops", gps_hops},
      {"gps_candidates", static_cast<long long>(gps_candidates)},
      {"mc_expand_flops", mc.counters.expand_flops},
      {"mc_inflate_ops", mc.counters.inflate_ops},
      {"mc_pruned_entries", mc.counters.pruned_entries},
      {"mc_peak_nnz", mc.counters.peak_nnz},
      {"mc_iterations", mc.counters.iterations}};
  doc["timing"] = {{"cp_median_ms", median(cp_times)},
                   {"gps_median_ms", median(gps_times)},
                   {"speedup", median(cp_times) / median(gps_times)}};
  lp::write_text_file(out_path, doc.dump(2) + "\n");

  Manifest manifest;
  manifest.command = "bench";
  manifest.config = doc["config"];
  manifest.outputs.push_back(out_path);
  manifest.timing = doc["timing"];
  manifest.write(out_path);
  LP_INFO("bench: cp %.3f ms vs gps %.3f ms", median(cp_times),
          median(gps_times));
  return 0;
}

// ------------------------------------------------------------------ render
int cmd_render(const std::string& scene_path, const std::string& field_path,
               bool use_ideal, const std::vector<int>& steps,
               const std::string& track, bool omega,
               const std::string& prefix, int threads) {
  const SceneBundle scene = load_scene(scene_path);
  Manifest manifest;
  manifest.command = "render";
  manifest.add_input(scene_path);

  lp::CorrelationField field;
  if (!field_path.empty()) {
    const lp::FieldFile file = lp::read_field(field_path);
    if (file.rows != scene.lattice.rows || file.cols != scene.lattice.cols)
      throw lp::LatticeMismatch("field grid does not match the scene lattice");
    field = lp::normalize_field(scene.lattice, file.logits);
    manifest.add_input(field_path);
  } else if (use_ideal) {
    field = lp::ideal_field(scene.lattice, scene.labels);
  } else {
    throw lp::IoError("render needs --field or --ideal");
  }

  std::vector<int> tracked;
  if (track == "all") {
    for (int i = 0; i < scene.lattice.node_count(); ++i) tracked.push_back(i);
  } else {  // "gt"
    tracked = scene.labels.box_center_node;
  }

  std::string first_output;
  lp::ConfidenceState state = lp::init_one_hot(scene.lattice);
  int done = 0;
  for (int step : steps) {
    while (done < step) {
      state = lp::cp_step(scene.lattice, field, state, threads);
      ++done;
    }
    const auto bytes = lp::confidence_heatmap(scene.lattice, state, tracked);
    const std::string path = prefix + "_step" + std::to_string(step) + ".pgm";
    lp::write_pgm(path, scene.lattice.cols, scene.lattice.rows, bytes);
    manifest.outputs.push_back(path);
    if (first_output.empty()) first_output = path;
  }

  if (omega) {
    const lp::VectorFieldView view = lp::combined_vector_field(field);
    const std::string json_path = prefix + "_omega.json";
    lp::write_omega(json_path, view);
    manifest.outputs.push_back(json_path);

    // arrows-on-grid raster: one cell per node, red segment along omega
    const int cell = 15;
    const int width = scene.lattice.cols * cell;
    const int height = scene.lattice.rows * cell;
    std::vector<uint8_t> rgb(static_cast<size_t>(width) * height * 3, 255);
    auto put = [&](int x, int y, uint8_t r, uint8_t g, uint8_t b) {
      if (x < 0 || y < 0 || x >= width || y >= height) return;
      const size_t at = (static_cast<size_t>(y) * width + x) * 3;
      rgb[at] = r;
      rgb[at + 1] = g;
      rgb[at + 2] = b;
    };
    for (int i = 0; i < scene.lattice.node_count(); ++i) {
      const int cx = scene.lattice.col_of(i) * cell + cell / 2;
      const int cy = scene.lattice.row_of(i) * cell + cell / 2;
      put(cx, cy, 0, 0, 0);
      const double vx = view.omega[i][0];
      const double vy = view.omega[i][1];
      const double mag = std::hypot(vx, vy);
      if (mag < 1e-9) continue;
      const double scale = (cell / 2 - 1) * std::min(1.0, mag) / mag;
      const int ex = cx + static_cast<int>(std::lround(vx * scale));
      const int ey = cy + static_cast<int>(std::lround(vy * scale));
      // integer line walk
      const int steps_n = std::max(std::abs(ex - cx), std::abs(ey - cy));
      for (int s = 0; s <= steps_n; ++s) {
        const int x = cx + (ex - cx) * s / std::max(1, steps_n);
        const int y = cy + (ey - cy) * s / std::max(1, steps_n);
        put(x, y, 200, 0, 0);
      }
    }
    const std::string ppm_path = prefix + "_omega.ppm";
    lp::write_ppm(ppm_path, width, height, rgb);
    manifest.outputs.push_back(ppm_path);
    if (first_output.empty()) first_output = ppm_path;
  }

  if (first_output.empty())
    throw lp::IoError("render produced no outputs; pass --steps or --omega");
  manifest.config["steps"] = steps;
  manifest.config["track"] = track;
  manifest.config["omega"] = omega;
  manifest.config["threads"] = threads;
  manifest.write(first_output);
  return 0;
}

// -------------------------------------------------------------------- eval
int cmd_eval(const std::string& detections_path, const std::string& scene_path,
             double iou_thresh, const std::string& out_path) {
  const SceneBundle scene = load_scene(scene_path);
  const std::vector<lp::ScoredBox> detections =
      lp::read_detections(detections_path);
  std::vector<lp::OrientedBox> preds;
  for (const auto& scored : detections) preds.push_back(scored.box);
  const lp::DetectionMetrics metrics =
      lp::evaluate(preds, scene.boxes, iou_thresh);
  lp::write_metrics(out_path, metrics);

  Manifest manifest;
  manifest.command = "eval";
  manifest.add_input(detections_path);
  manifest.add_input(scene_path);
  manifest.config["iou"] = iou_thresh;
  manifest.outputs.push_back(out_path);
  manifest.write(out_path);
  std::printf("precision=%.4f recall=%.4f f=%.4f\n", metrics.precision,
              metrics.recall, metrics.f_score);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lattice correlation propagation toolkit"};
  app.require_subcommand(1);

  // generate
  auto* generate = app.add_subcommand("generate", "write a synthetic scene");
  generate->set_help_flag("--help", "print help");  // frees -h for --h
  uint64_t gen_seed = 0;
  lp::SceneConfig scene_config;
  std::string gen_out = "scene.json";
  std::string gen_field;
  double angle_max = std::numbers::pi / 3;
  generate->add_option("--seed", gen_seed, "PRNG seed");
  generate->add_option("--h", scene_config.height_px, "image height, pixels")
      ->check(CLI::PositiveNumber);
  generate->add_option("--w", scene_config.width_px, "image width, pixels")
      ->check(CLI::PositiveNumber);
  generate->add_option("--d", scene_config.factor, "down-sampling factor")
      ->check(CLI::PositiveNumber);
  generate->add_option("--boxes", scene_config.n_boxes, "number of boxes")
      ->check(CLI::NonNegativeNumber);
  generate->add_option("--scale-min", scene_config.scale_range[0],
                       "min long side, pixels");
  generate->add_option("--scale-max", scene_config.scale_range[1],
                       "max long side, pixels");
  generate->add_option("--aspect-min", scene_config.aspect_range[0],
                       "min aspect ratio");
  generate->add_option("--aspect-max", scene_config.aspect_range[1],
                       "max aspect ratio");
  generate->add_option("--angle-max", angle_max,
                       "angle range is [-angle-max, angle-max] radians");
  generate->add_flag("--allow-overlap", scene_config.allow_overlap,
                     "permit box overlap up to --overlap-cap");
  generate->add_option("--overlap-cap", scene_config.overlap_cap,
                       "max pairwise IoU when overlap is allowed");
  generate->add_option("-o,--out", gen_out, "scene output path");
  generate->add_option("--ideal-field", gen_field,
                       "also write the analytic field for the scene");

  // infer
  auto* infer = app.add_subcommand("infer", "group nodes and emit boxes");
  std::string infer_scene, infer_field, infer_model, infer_out = "detections.json";
  std::string infer_trap, infer_heatmap, infer_flow, infer_counters;
  std::vector<int> infer_heatmap_steps;
  bool infer_ideal = false;
  InferOptions infer_opt;
  infer->add_option("--scene", infer_scene, "scene JSON")->required();
  infer->add_option("--field", infer_field, "field JSON (labels stand in for the predictor)");
  infer->add_option("--model", infer_model, "trained model JSON");
  infer->add_flag("--ideal", infer_ideal, "use the analytic field of the scene");
  infer->add_option("--algo", infer_opt.algo, "cp | gps | mc")
      ->check(CLI::IsMember({"cp", "gps", "mc"}));
  infer->add_option("--merge", infer_opt.merge, "pca | regress")
      ->check(CLI::IsMember({"pca", "regress"}));
  infer->add_option("--min-conf", infer_opt.min_conf, "argmax threshold (cp)");
  infer->add_option("--max-steps", infer_opt.max_steps,
                    "cp step budget, 0 = rows + cols")
      ->check(CLI::NonNegativeNumber);
  infer->add_option("--tol", infer_opt.tol, "cp convergence tolerance");
  infer->add_option("--dt", infer_opt.trap_merge_distance,
                    "candidate merge distance (gps, Chebyshev)");
  infer->add_option("--mc-iters", infer_opt.mc_iters, "flow iterations")
      ->check(CLI::PositiveNumber);
  infer->add_option("--mc-threshold", infer_opt.mc_threshold, "flow prune threshold");
  infer->add_option("--mc-tol", infer_opt.mc_tol, "flow convergence tolerance");
  infer->add_option("--nms-iou", infer_opt.nms_iou, "NMS suppression threshold");
  infer->add_option("--threads", infer_opt.threads,
                    "worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  infer->add_option("-o,--out", infer_out, "detections output path");
  infer->add_option("--trap-out", infer_trap, "trap map output (gps only)");
  infer->add_option("--flow-out", infer_flow,
                    "converged flow matrix dump (mc only)");
  infer->add_option("--mc-counters-out", infer_counters,
                    "flow iteration counter report (mc only)");
  infer->add_option("--heatmap-prefix", infer_heatmap, "PGM heatmap prefix");
  infer->add_option("--heatmap-steps", infer_heatmap_steps,
                    "steps to snapshot as heatmaps")
      ->delimiter(',');

  // train
  auto* train_cmd = app.add_subcommand("train", "fit logits to a scene");
  std::string train_scene, train_out = "model.json",
              train_trace = "trace.csv", train_eval;
  lp::TrainConfig train_config;
  InferOptions train_infer;
  train_cmd->add_option("--scene", train_scene, "scene JSON")->required();
  train_cmd->add_option("--alpha", train_config.alpha, "center loss weight");
  train_cmd->add_option("--beta", train_config.beta, "box loss weight");
  train_cmd->add_option("--lr", train_config.lr, "learning rate")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--iters", train_config.iters, "iterations")
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", train_config.seed, "init seed");
  train_cmd->add_option("--threads", train_config.threads,
                        "worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("-o,--out", train_out, "model output path");
  train_cmd->add_option("--trace", train_trace, "loss trace CSV path");
  train_cmd->add_option("--eval-out", train_eval, "final metrics JSON path");

  // bench
  auto* bench = app.add_subcommand("bench", "time cp against gps");
  int bench_size = 64, bench_repeats = 20, bench_boxes = 3, bench_threads = 1;
  uint64_t bench_seed = 1;
  std::string bench_out = "bench.json";
  bench->add_option("--size", bench_size, "lattice rows = cols")
      ->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bench_repeats, "timing repetitions")
      ->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_seed, "scene seed");
  bench->add_option("--boxes", bench_boxes, "boxes in the scene")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("--threads", bench_threads, "worker threads, 0 = all cores")
      ->check(CLI::NonNegativeNumber);
  bench->add_option("-o,--out", bench_out, "report output path");

  // render
  auto* render = app.add_subcommand("render", "write heatmaps and vector fields");
  std::string render_scene, render_field, render_prefix = "render";
  std::string render_track = "gt";
  std::vector<int> render_steps;
  bool render_ideal = false, render_omega = false;
  int render_threads = 1;
  render->add_option("--scene", render_scene, "scene JSON")->required();
  render->add_option("--field", render_field, "field JSON");
  render->add_flag("--ideal", render_ideal, "use the analytic field");
  render->add_option("--steps", render_steps, "cp steps to snapshot")
      ->delimiter(',');
  render->add_option("--track", render_track, "gt | all")
      ->check(CLI::IsMember({"gt", "all"}));
  render->add_flag("--omega", render_omega, "write the combined vector field");
  render->add_option("--threads", render_threads, "worker threads")
      ->check(CLI::NonNegativeNumber);
  render->add_option("-o,--out", render_prefix, "output prefix");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score detections against a scene");
  std::string eval_detections, eval_scene, eval_out = "metrics.json";
  double eval_iou = 0.5;
  eval_cmd->add_option("--detections", eval_detections, "detections JSON")
      ->required();
  eval_cmd->add_option("--scene", eval_scene, "scene JSON")->required();
  eval_cmd->add_option("--iou", eval_iou, "match threshold")
      ->check(CLI::Range(1e-9, 1.0 - 1e-9));
  eval_cmd->add_option("-o,--out", eval_out, "metrics output path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*generate) {
      scene_config.angle_range = {-angle_max, angle_max};
      return cmd_generate(gen_seed, scene_config, gen_out, gen_field);
    }
    if (*infer)
      return cmd_infer(infer_scene, infer_field, infer_model, infer_ideal,
                       infer_opt, infer_out, infer_trap, infer_heatmap,
                       infer_heatmap_steps, infer_flow, infer_counters);
    if (*train_cmd)
      return cmd_train(train_scene, train_config, train_out, train_trace,
                       train_eval, train_infer);
    if (*bench)
      return cmd_bench(bench_size, bench_repeats, bench_seed, bench_boxes,
                       bench_out, bench_threads);
    if (*render)
      return cmd_render(render_scene, render_field, render_ideal, render_steps,
                        render_track, render_omega, render_prefix,
                        render_threads);
    if (*eval_cmd)
      return cmd_eval(eval_detections, eval_scene, eval_iou, eval_out);
  } catch (const lp::Error& err) {
    std::fprintf(stderr, "%s: %s\n", err.name().c_str(), err.what());
    return exit_code_for(err);
  } catch (const std::exception& err) {
    std::fprintf(stderr, "InternalError: %s\n", err.what());
    return 5;
  }
  return 2;
}
