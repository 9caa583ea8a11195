#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "snipper/attention.hpp"
#include "snipper/checkpoint.hpp"
#include "snipper/commands.hpp"
#include "snipper/error.hpp"
#include "snipper/geometry.hpp"
#include "snipper/matching.hpp"
#include "snipper/model.hpp"
#include "snipper/synth.hpp"

namespace py = pybind11;
using namespace snipper;

namespace {

const char* kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kCapacity: return "capacity";
    case ErrorKind::kProtocol: return "protocol";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kVersion: return "version";
    case ErrorKind::kNumeric: return "numeric";
  }
  return "unknown";
}

cli::RunConfig make_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  cli::ConfigFile file;
  if (!path.empty()) file = cli::ConfigFile::load(path);
  for (const auto& [k, v] : overrides) {
    file.values[k] = v;
    file.lines[k] = 0;
  }
  cli::RunConfig config;
  config.apply(file);
  return config;
}

geometry::CameraIntrinsics camera_from(const py::object& cam, std::size_t width = 64, std::size_t height = 64) {
  if (cam.is_none()) return synth::default_camera(width, height);
  const auto v = cam.cast<std::array<double, 4>>();
  return {v[0], v[1], v[2], v[3]};
}

// A model plus its configuration, loaded or freshly initialized.
struct Model {
  model::ModelConfig config;
  model::ModelParams params;

  py::list predict(py::array_t<double, py::array::c_style | py::array::forcecast> images,
                   const py::object& cam) const {
    std::vector<std::size_t> shape(images.shape(), images.shape() + images.ndim());
    const Tensor x(shape, std::vector<double>(images.data(), images.data() + images.size()));
    const auto intrinsics = camera_from(cam, config.image_width, config.image_height);
    const auto pred = model::run_snippet(x, intrinsics, params, config);
    py::list people;
    for (const auto& traj : pred.trajectories) {
      const std::size_t slots = traj.poses.size(), nj = config.joints;
      py::array_t<double> root({slots, std::size_t{3}}), joints({slots, nj, std::size_t{3}});
      py::array_t<double> occ(slots), vis({slots, nj});
      auto r = root.mutable_unchecked<2>();
      auto j = joints.mutable_unchecked<3>();
      auto o = occ.mutable_unchecked<1>();
      auto v = vis.mutable_unchecked<2>();
      for (std::size_t s = 0; s < slots; ++s) {
        const auto& pose = *traj.poses[s];
        const auto pts = geometry::pose_to_3d(pose, intrinsics);
        for (std::size_t a = 0; a < 3; ++a) r(s, a) = pose.root[a];
        for (std::size_t k = 0; k < nj; ++k) {
          for (std::size_t a = 0; a < 3; ++a) j(s, k, a) = pts[k][a];
          v(s, k) = pose.visibility[k];
        }
        o(s) = pose.occurrence;
      }
      py::dict d;
      d["root"] = root;
      d["joints"] = joints;
      d["visibility"] = vis;
      d["occurrence"] = occ;
      people.append(d);
    }
    return people;
  }
};

py::list rows_to_list(const std::vector<metrics::MetricRow>& rows) {
  py::list out;
  for (const auto& r : rows) out.append(py::make_tuple(r.metric, r.value, r.count));
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Snippet-based multi-person 3D pose tracking and forecasting";

  static py::exception<Error> error(m, "SnipperError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object instance = py::handle(error.ptr())(e.what());
      instance.attr("kind") = kind_name(e.kind());
      PyErr_SetObject(error.ptr(), instance.ptr());
    }
  });

  m.def(
      "hungarian",
      [](const matching::CostMatrix& cost) {
        const auto a = matching::hungarian(cost);
        return py::make_tuple(a.target_to_pred, a.total_cost);
      },
      py::arg("cost"), "Minimum-cost assignment; returns (target_to_pred, total_cost).");

  m.def(
      "samples_per_head",
      [](const std::string& variant, std::size_t t_q, std::size_t frames, std::size_t points,
         std::size_t scales) {
        return attention::samples_per_head(attention::parse_variant(variant), t_q, frames, points, scales);
      },
      py::arg("variant"), py::arg("t_q"), py::arg("frames"), py::arg("points"), py::arg("scales"));

  m.def(
      "lift_to_3d",
      [](const geometry::Vec3& p, const py::object& cam) { return geometry::lift_to_3d(p, camera_from(cam)); },
      py::arg("point"), py::arg("camera") = py::none(), "(x px, y px, depth m) -> camera-space meters.");
  m.def(
      "project_to_2p5d",
      [](const geometry::Vec3& p, const py::object& cam) {
        return geometry::project_to_2p5d(p, camera_from(cam));
      },
      py::arg("point"), py::arg("camera") = py::none());

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::map<std::string, std::string>& settings, std::uint64_t seed) {
             cli::ConfigFile file;
             for (const auto& [k, v] : settings) {
               file.values["model." + k] = v;
               file.lines["model." + k] = 0;
             }
             cli::RunConfig rc;
             rc.apply(file);
             rc.model.validate();
             return Model{rc.model, model::ModelParams::init(rc.model, seed)};
           }),
           py::arg("settings") = std::map<std::string, std::string>{}, py::arg("seed") = 0)
      .def_static(
          "load",
          [](const std::string& path) {
            auto loaded = cli::load_checkpoint(path);
            return Model{loaded.info.config, std::move(loaded.params)};
          },
          py::arg("path"))
      .def_property_readonly("frames", [](const Model& x) { return x.config.frames; })
      .def_property_readonly("future_frames", [](const Model& x) { return x.config.future_frames; })
      .def_property_readonly("max_people", [](const Model& x) { return x.config.max_people; })
      .def_property_readonly("image_size",
                             [](const Model& x) { return py::make_tuple(x.config.image_height, x.config.image_width); })
      .def_property_readonly("config", [](const Model& x) { return cli::config_to_map(x.config); })
      .def("parameter_count",
           [](const Model& x) {
             std::size_t n = 0;
             for (const auto& [name, t] : x.params.named()) n += t.values().size();
             return n;
           })
      .def("predict", &Model::predict, py::arg("images"), py::arg("camera") = py::none(),
           "images: [T, H, W, 3] in [0, 1]. One dict per query person with root, joints (meters), "
           "visibility and occurrence over T + T_f slots.");

  // CLI commands with a config file plus "section.key" overrides.
  auto command = [&m](const char* name, auto fn, const char* doc) {
    m.def(
        name,
        [fn](const std::string& config, const std::map<std::string, std::string>& overrides) {
          const auto rc = make_config(config, overrides);
          std::ostringstream log;
          return fn(rc, log);
        },
        py::arg("config") = "", py::arg("overrides") = std::map<std::string, std::string>{}, doc);
  };
  command("synth", [](const cli::RunConfig& c, std::ostringstream& log) { cli::cmd_synth(c, log); return log.str(); },
          "Generate a dataset; returns the log text.");
  command("train", [](const cli::RunConfig& c, std::ostringstream& log) { cli::cmd_train(c, log); return log.str(); },
          "Train a model; returns the log text.");
  command("track", [](const cli::RunConfig& c, std::ostringstream& log) { cli::cmd_track(c, log); return log.str(); },
          "Write tracks.jsonl; returns the log text.");
  command("evaluate",
          [](const cli::RunConfig& c, std::ostringstream& log) { return rows_to_list(cli::cmd_eval(c, log)); },
          "Evaluate a checkpoint; returns (metric, value, count) rows.");
  command("ablate",
          [](const cli::RunConfig& c, std::ostringstream& log) {
            py::list out;
            for (const auto& r : cli::cmd_ablate(c, log)) {
              py::dict d;
              d["variant"] = r.variant;
              d["seed"] = r.seed;
              d["frames"] = r.frames;
              d["samples_per_head"] = r.samples_per_head;
              d["mota"] = r.mota;
              d["pck3d"] = r.pck3d;
              d["mpjpe"] = r.mpjpe;
              d["path_error_1"] = r.path_error_1;
              d["path_baseline_1"] = r.path_baseline_1;
              d["final_loss"] = r.final_loss;
              out.append(d);
            }
            return out;
          },
          "Train and score each (variant, seed); returns one dict per run.");
}
