#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "latticeprop/cp.hpp"
#include "latticeprop/geometry.hpp"
#include "latticeprop/gps.hpp"
#include "latticeprop/lattice.hpp"
#include "latticeprop/learn.hpp"
#include "latticeprop/mcl.hpp"
#include "latticeprop/synth.hpp"

namespace py = pybind11;
namespace lp = latticeprop;

namespace {

void register_errors(py::module_& m) {
  static py::exception<lp::Error> base(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const lp::Error& err) {
      py::set_error(base,
                    std::string(err.name() + ": " + err.what()).c_str());
    }
  });
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Lattice correlation propagation engine";
  register_errors(m);

  py::class_<lp::Lattice>(m, "Lattice")
      .def_readonly("height_px", &lp::Lattice::height_px)
      .def_readonly("width_px", &lp::Lattice::width_px)
      .def_readonly("factor", &lp::Lattice::factor)
      .def_readonly("rows", &lp::Lattice::rows)
      .def_readonly("cols", &lp::Lattice::cols)
      .def_property_readonly("node_count", &lp::Lattice::node_count)
      .def("to_id", &lp::Lattice::to_id, py::arg("row"), py::arg("col"))
      .def("to_rc", &lp::Lattice::to_rc, py::arg("node"))
      .def("px_x", &lp::Lattice::px_x, py::arg("node"))
      .def("px_y", &lp::Lattice::px_y, py::arg("node"))
      .def("manhattan", &lp::Lattice::manhattan, py::arg("a"), py::arg("b"));

  m.def("build_lattice", &lp::build_lattice, py::arg("height_px"),
        py::arg("width_px"), py::arg("factor"));
  m.def(
      "neighbors",
      [](const lp::Lattice& lat, int node) {
        std::vector<std::pair<int, int>> out;
        for (const auto& ref : lp::neighbors(lat, node))
          out.emplace_back(static_cast<int>(ref.slot), ref.id);
        return out;
      },
      py::arg("lattice"), py::arg("node"),
      "existing neighbors as (slot, node) pairs in slot order");

  py::class_<lp::CorrelationField>(m, "CorrelationField")
      .def_readonly("rows", &lp::CorrelationField::rows)
      .def_readonly("cols", &lp::CorrelationField::cols)
      .def_readonly("logits", &lp::CorrelationField::logits)
      .def_readonly("weights", &lp::CorrelationField::weights);

  m.def("normalize_field", &lp::normalize_field, py::arg("lattice"),
        py::arg("logits"));

  py::class_<lp::ConfidenceState>(m, "ConfidenceState")
      .def_readonly("step", &lp::ConfidenceState::step)
      .def_readonly("prune_eps", &lp::ConfidenceState::prune_eps)
      .def_readonly("conf", &lp::ConfidenceState::conf)
      .def("at", &lp::ConfidenceState::at, py::arg("node"), py::arg("center"))
      .def("total_mass", &lp::ConfidenceState::total_mass);

  m.def("init_one_hot", &lp::init_one_hot, py::arg("lattice"),
        py::arg("prune_eps") = 1e-6);
  m.def("cp_step", &lp::cp_step, py::arg("lattice"), py::arg("field"),
        py::arg("state"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<lp::CpRunResult>(m, "CpRunResult")
      .def_readonly("state", &lp::CpRunResult::state)
      .def_readonly("steps_used", &lp::CpRunResult::steps_used)
      .def_readonly("update_count", &lp::CpRunResult::update_count);

  m.def("cp_run", &lp::cp_run, py::arg("lattice"), py::arg("field"),
        py::arg("init"), py::arg("max_steps"), py::arg("tol"),
        py::arg("threads") = 1, py::call_guard<py::gil_scoped_release>());
  m.def("dense_transition_matrix", &lp::dense_transition_matrix,
        py::arg("lattice"), py::arg("field"));

  py::class_<lp::ClusterAssignment>(m, "ClusterAssignment")
      .def_readonly("center_of", &lp::ClusterAssignment::center_of)
      .def_readonly("clusters", &lp::ClusterAssignment::clusters);

  m.def("extract_centers", &lp::extract_centers, py::arg("state"),
        py::arg("fg_mask"), py::arg("min_conf"));
  m.def("confidence_heatmap", &lp::confidence_heatmap, py::arg("lattice"),
        py::arg("state"), py::arg("tracked"));

  py::class_<lp::OrientedBox>(m, "OrientedBox")
      .def(py::init([](double cx, double cy, double w, double h,
                       double angle) {
             lp::OrientedBox box;
             box.cx = cx;
             box.cy = cy;
             box.w = w;
             box.h = h;
             box.angle = angle;
             return box;
           }),
           py::arg("cx"), py::arg("cy"), py::arg("w"), py::arg("h"),
           py::arg("angle") = 0.0)
      .def_readwrite("cx", &lp::OrientedBox::cx)
      .def_readwrite("cy", &lp::OrientedBox::cy)
      .def_readwrite("w", &lp::OrientedBox::w)
      .def_readwrite("h", &lp::OrientedBox::h)
      .def_readwrite("angle", &lp::OrientedBox::angle)
      .def("area", &lp::OrientedBox::area)
      .def("corners", &lp::OrientedBox::corners)
      .def("contains", &lp::OrientedBox::contains, py::arg("x"), py::arg("y"),
           py::arg("eps") = 1e-9);

  py::class_<lp::BoxGeometry>(m, "BoxGeometry")
      .def(py::init([](double top, double bottom, double left, double right,
                       double angle) {
             lp::BoxGeometry g;
             g.d_top = top;
             g.d_bottom = bottom;
             g.d_left = left;
             g.d_right = right;
             g.angle = angle;
             return g;
           }),
           py::arg("d_top"), py::arg("d_bottom"), py::arg("d_left"),
           py::arg("d_right"), py::arg("angle") = 0.0)
      .def_readwrite("d_top", &lp::BoxGeometry::d_top)
      .def_readwrite("d_bottom", &lp::BoxGeometry::d_bottom)
      .def_readwrite("d_left", &lp::BoxGeometry::d_left)
      .def_readwrite("d_right", &lp::BoxGeometry::d_right)
      .def_readwrite("angle", &lp::BoxGeometry::angle);

  m.def("canonicalize", &lp::canonicalize, py::arg("box"));
  m.def("decode_geometry", &lp::decode_geometry, py::arg("anchor_x"),
        py::arg("anchor_y"), py::arg("geometry"));
  m.def("encode_geometry", &lp::encode_geometry, py::arg("anchor_x"),
        py::arg("anchor_y"), py::arg("box"));
  m.def("iou", &lp::iou, py::arg("a"), py::arg("b"));

  py::class_<lp::ScoredBox>(m, "ScoredBox")
      .def_readonly("box", &lp::ScoredBox::box)
      .def_readonly("score", &lp::ScoredBox::score);

  m.def(
      "nms",
      [](const std::vector<std::pair<lp::OrientedBox, double>>& boxes,
         double iou_thresh) {
        std::vector<lp::ScoredBox> scored;
        for (const auto& [box, score] : boxes) scored.push_back({box, score});
        return lp::nms(std::move(scored), iou_thresh);
      },
      py::arg("boxes"), py::arg("iou_thresh"),
      "boxes as (OrientedBox, score) pairs");
  m.def("pca_box_from_cluster", &lp::pca_box_from_cluster, py::arg("members"),
        py::arg("lattice"));
  m.def("merge_by_center", &lp::merge_by_center, py::arg("geometries"),
        py::arg("fg_conf"), py::arg("assignment"), py::arg("lattice"));

  py::class_<lp::DetectionMetrics>(m, "DetectionMetrics")
      .def_readonly("precision", &lp::DetectionMetrics::precision)
      .def_readonly("recall", &lp::DetectionMetrics::recall)
      .def_readonly("f_score", &lp::DetectionMetrics::f_score)
      .def_readonly("matches", &lp::DetectionMetrics::matches);

  m.def("evaluate", &lp::evaluate, py::arg("preds"), py::arg("gts"),
        py::arg("iou_thresh"));

  py::class_<lp::SceneLabels>(m, "SceneLabels")
      .def_readonly("fg_mask", &lp::SceneLabels::fg_mask)
      .def_readonly("center_labels", &lp::SceneLabels::center_labels)
      .def_readonly("box_targets", &lp::SceneLabels::box_targets)
      .def_readonly("target_box", &lp::SceneLabels::target_box)
      .def_readonly("box_center_node", &lp::SceneLabels::box_center_node)
      .def_readonly("box_coverage", &lp::SceneLabels::box_coverage)
      .def_readonly("boxes", &lp::SceneLabels::boxes)
      .def_readonly("skipped_boxes", &lp::SceneLabels::skipped_boxes);

  m.def("label_scene", &lp::label_scene, py::arg("lattice"),
        py::arg("gt_boxes"));
  m.def("center_set_from_labels", &lp::center_set_from_labels,
        py::arg("lattice"), py::arg("labels"));

  py::class_<lp::CenterSet::Center>(m, "Center")
      .def_readonly("node", &lp::CenterSet::Center::node)
      .def_readonly("coverage", &lp::CenterSet::Center::coverage)
      .def_readonly("rings", &lp::CenterSet::Center::rings)
      .def_readonly("max_ring", &lp::CenterSet::Center::max_ring);
  py::class_<lp::CenterSet>(m, "CenterSet")
      .def_readonly("centers", &lp::CenterSet::centers);

  m.def("center_loss", &lp::center_loss, py::arg("state_t"),
        py::arg("state_prev"), py::arg("labels"));

  py::class_<lp::RecursiveGradResult>(m, "RecursiveGradResult")
      .def_readonly("tracked", &lp::RecursiveGradResult::tracked)
      .def_readonly("grad_s", &lp::RecursiveGradResult::grad_s)
      .def_readonly("l_c", &lp::RecursiveGradResult::l_c)
      .def_readonly("touch_count", &lp::RecursiveGradResult::touch_count)
      .def_readonly("per_center", &lp::RecursiveGradResult::per_center);

  m.def("recursive_gradients", &lp::recursive_gradients, py::arg("lattice"),
        py::arg("field"), py::arg("labels"), py::arg("centers"));
  m.def("finite_difference_grad", &lp::finite_difference_grad,
        py::arg("lattice"), py::arg("logits"), py::arg("labels"),
        py::arg("steps"), py::arg("h"),
        py::call_guard<py::gil_scoped_release>());
  m.def("grad_to_logit_space", &lp::grad_to_logit_space, py::arg("lattice"),
        py::arg("field"), py::arg("grad_s"));

  py::class_<lp::LossReport>(m, "LossReport")
      .def_readonly("l_fg", &lp::LossReport::l_fg)
      .def_readonly("l_center", &lp::LossReport::l_center)
      .def_readonly("l_box", &lp::LossReport::l_box)
      .def_readonly("alpha", &lp::LossReport::alpha)
      .def_readonly("beta", &lp::LossReport::beta)
      .def_readonly("total", &lp::LossReport::total);

  m.def("total_loss", &lp::total_loss, py::arg("fg_pred"), py::arg("state"),
        py::arg("box_preds"), py::arg("labels"), py::arg("alpha"),
        py::arg("beta"), py::arg("lattice"));

  py::class_<lp::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &lp::TrainConfig::alpha)
      .def_readwrite("beta", &lp::TrainConfig::beta)
      .def_readwrite("lr", &lp::TrainConfig::lr)
      .def_readwrite("iters", &lp::TrainConfig::iters)
      .def_readwrite("seed", &lp::TrainConfig::seed)
      .def_readwrite("threads", &lp::TrainConfig::threads)
      .def_readwrite("merge_distance", &lp::TrainConfig::merge_distance);

  py::class_<lp::TrainRecord>(m, "TrainRecord")
      .def_readonly("iter", &lp::TrainRecord::iter)
      .def_readonly("loss", &lp::TrainRecord::loss);

  py::class_<lp::TrainResult>(m, "TrainResult")
      .def_readonly("field_logits", &lp::TrainResult::field_logits)
      .def_readonly("field", &lp::TrainResult::field)
      .def_readonly("fg_logits", &lp::TrainResult::fg_logits)
      .def_readonly("geo", &lp::TrainResult::geo)
      .def_readonly("trace", &lp::TrainResult::trace)
      .def_readonly("final_assignment", &lp::TrainResult::final_assignment);

  m.def("train", &lp::train, py::arg("lattice"), py::arg("labels"),
        py::arg("config"), py::call_guard<py::gil_scoped_release>());
  m.def("fg_probabilities", &lp::fg_probabilities, py::arg("fg_logits"));
  m.def("geometry_predictions", &lp::geometry_predictions, py::arg("lattice"),
        py::arg("geo"), py::arg("fg_mask"));

  py::class_<lp::TrapMap>(m, "TrapMap")
      .def_readonly("trap_of", &lp::TrapMap::trap_of)
      .def_readonly("path_len", &lp::TrapMap::path_len)
      .def_readonly("candidates", &lp::TrapMap::candidates)
      .def_readonly("cycle_nodes", &lp::TrapMap::cycle_nodes)
      .def_readonly("total_hops", &lp::TrapMap::total_hops);

  m.def("greedy_paths", &lp::greedy_paths, py::arg("lattice"),
        py::arg("field"), py::arg("fg_mask"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());

  py::class_<lp::MergeResult>(m, "MergeResult")
      .def_readonly("candidates", &lp::MergeResult::candidates)
      .def_readonly("trap_of", &lp::MergeResult::trap_of)
      .def_readonly("assignment", &lp::MergeResult::assignment)
      .def_readonly("merges", &lp::MergeResult::merges);

  m.def("merge_close_candidates", &lp::merge_close_candidates,
        py::arg("lattice"), py::arg("field"), py::arg("traps"), py::arg("d_t"));

  py::class_<lp::VectorFieldView>(m, "VectorFieldView")
      .def_readonly("omega", &lp::VectorFieldView::omega);

  m.def("combined_vector_field", &lp::combined_vector_field, py::arg("field"));

  py::class_<lp::FlowMatrix>(m, "FlowMatrix")
      .def(py::init<>())
      .def_readwrite("size", &lp::FlowMatrix::size)
      .def_readwrite("cols", &lp::FlowMatrix::cols)
      .def("nnz", &lp::FlowMatrix::nnz)
      .def("at", &lp::FlowMatrix::at, py::arg("row"), py::arg("col"))
      .def("dense", &lp::FlowMatrix::dense);

  m.def("build_flow_matrix", &lp::build_flow_matrix, py::arg("lattice"),
        py::arg("field"));

  py::class_<lp::McCounters>(m, "McCounters")
      .def_readonly("expand_flops", &lp::McCounters::expand_flops)
      .def_readonly("inflate_ops", &lp::McCounters::inflate_ops)
      .def_readonly("pruned_entries", &lp::McCounters::pruned_entries)
      .def_readonly("peak_nnz", &lp::McCounters::peak_nnz)
      .def_readonly("iterations", &lp::McCounters::iterations);

  py::class_<lp::McResult>(m, "McResult")
      .def_readonly("m", &lp::McResult::m)
      .def_readonly("counters", &lp::McResult::counters);

  m.def("mc_iterate", &lp::mc_iterate, py::arg("m0"), py::arg("max_iters"),
        py::arg("prune_threshold"), py::arg("tol"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
  m.def("mc_clusters", &lp::mc_clusters, py::arg("mN"));

  py::class_<lp::FlowLabels>(m, "FlowLabels")
      .def(py::init<>())
      .def_readwrite("targets", &lp::FlowLabels::targets);

  m.def("flow_labels_from_centers", &lp::flow_labels_from_centers,
        py::arg("center_labels"));
  m.def("mc_loss", &lp::mc_loss, py::arg("mN"), py::arg("labels"));
  m.def("mc_gradients", &lp::mc_gradients, py::arg("m0"), py::arg("labels"),
        py::arg("iters"), py::arg("prune_threshold"));

  py::class_<lp::SceneConfig>(m, "SceneConfig")
      .def(py::init<>())
      .def_readwrite("height_px", &lp::SceneConfig::height_px)
      .def_readwrite("width_px", &lp::SceneConfig::width_px)
      .def_readwrite("factor", &lp::SceneConfig::factor)
      .def_readwrite("n_boxes", &lp::SceneConfig::n_boxes)
      .def_readwrite("scale_range", &lp::SceneConfig::scale_range)
      .def_readwrite("aspect_range", &lp::SceneConfig::aspect_range)
      .def_readwrite("angle_range", &lp::SceneConfig::angle_range)
      .def_readwrite("allow_overlap", &lp::SceneConfig::allow_overlap)
      .def_readwrite("overlap_cap", &lp::SceneConfig::overlap_cap)
      .def_readwrite("max_retries", &lp::SceneConfig::max_retries);

  py::class_<lp::SyntheticScene>(m, "SyntheticScene")
      .def_readonly("lattice", &lp::SyntheticScene::lattice)
      .def_readonly("gt_boxes", &lp::SyntheticScene::gt_boxes)
      .def_readonly("labels", &lp::SyntheticScene::labels)
      .def_readonly("seed", &lp::SyntheticScene::seed);

  m.def("generate_scene", &lp::generate_scene, py::arg("seed"),
        py::arg("config"));
  m.def("ideal_field", &lp::ideal_field, py::arg("lattice"),
        py::arg("labels"));

  m.attr("SLOT_SELF") = static_cast<int>(lp::kSelf);
  m.attr("SLOT_UP") = static_cast<int>(lp::kUp);
  m.attr("SLOT_DOWN") = static_cast<int>(lp::kDown);
  m.attr("SLOT_LEFT") = static_cast<int>(lp::kLeft);
  m.attr("SLOT_RIGHT") = static_cast<int>(lp::kRight);
  m.attr("__version__") = "0.1.0";
}
