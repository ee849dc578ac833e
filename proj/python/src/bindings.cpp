#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "exprdit/cli.hpp"
#include "exprdit/harness.hpp"
#include "exprdit/rng.hpp"

namespace py = pybind11;
using namespace exprdit;

namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor(const Array<T>& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor<T>(shape, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Tensor<T>& t) {
  Array<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

VideoClip to_clip(const Array<float>& a, double fps = 25.0) { return VideoClip{to_tensor(a), fps}; }

py::dict character_dict(const CharacterScene& c) {
  py::dict d;
  d["character_id"] = c.character_id;
  d["mask"] = to_array(c.mask.mask);
  d["landmarks"] = to_array(c.landmarks.points);
  d["gaze"] = to_array(c.gaze.angles);
  d["pose"] = to_array(c.pose.vectors);
  d["expression"] = to_array(c.expression.vectors);
  d["e_lip"] = to_array(c.implicit.e_lip);
  d["e_eye"] = to_array(c.implicit.e_eye);
  d["e_head"] = to_array(c.implicit.e_head);
  d["e_emo"] = to_array(c.implicit.e_emo);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Expression-conditioned portrait video diffusion toolkit";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidShapeError>(m, "InvalidShapeError", base.ptr());
  py::register_exception<EvaluationError>(m, "EvaluationError", base.ptr());
  py::register_exception<EmptyTrackError>(m, "EmptyTrackError", base.ptr());
  py::register_exception<DuplicateIdentityError>(m, "DuplicateIdentityError", base.ptr());
  py::register_exception<DivergedError>(m, "DivergedError", base.ptr());
  py::register_exception<CorruptCheckpointError>(m, "CorruptCheckpointError", base.ptr());
  py::register_exception<IncompleteCheckpointError>(m, "IncompleteCheckpointError", base.ptr());
  py::register_exception<IncompleteInputError>(m, "IncompleteInputError", base.ptr());
  py::register_exception<MalformedManifestError>(m, "MalformedManifestError", base.ptr());
  py::register_exception<InsufficientFramesError>(m, "InsufficientFramesError", base.ptr());
  py::register_exception<PlacementError>(m, "PlacementError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("encode", [](const Array<float>& frames) { return to_array(encode(to_clip(frames)).tokens); },
        py::arg("frames"), "f x H x W x ch float32 pixels -> f x H/2 x W/2 x 4ch float64 latent");
  m.def("decode", [](const Array<double>& latent) { return to_array(decode(LatentClip{to_tensor(latent)}).frames); },
        py::arg("latent"));
  m.def("read_clip", [](const std::filesystem::path& p) { return to_array(read_clip(p).frames); }, py::arg("path"));
  m.def("write_clip", [](const std::filesystem::path& p, const Array<float>& frames) { write_clip(p, to_clip(frames)); },
        py::arg("path"), py::arg("frames"));

  m.def("psnr_from_mse", &psnr_from_mse, py::arg("mse"));
  m.def("psnr", [](const Array<float>& a, const Array<float>& b) { return psnr(to_clip(a), to_clip(b)); });
  m.def("ssim", [](const Array<float>& a, const Array<float>& b) { return ssim(to_clip(a), to_clip(b)); });
  m.def("lmd", [](const Array<double>& p, const Array<double>& g) {
    return lmd(LandmarkTrack{to_tensor(p)}, LandmarkTrack{to_tensor(g)});
  });
  m.def("mae_angular", [](const Array<double>& p, const Array<double>& g) {
    return mae_angular(GazeTrack{to_tensor(p)}, GazeTrack{to_tensor(g)});
  });
  m.def("aed", [](const Array<double>& p, const Array<double>& g) {
    return aed(ExprFeatTrack{to_tensor(p)}, ExprFeatTrack{to_tensor(g)});
  });
  m.def("apd", [](const Array<double>& p, const Array<double>& g) {
    return apd(PoseTrack{to_tensor(p)}, PoseTrack{to_tensor(g)});
  });

  m.def("sample_t", [](std::uint64_t seed, std::size_t n, double mu, double sigma) {
    Rng rng(seed, "python.sample_t");
    Array<double> out(static_cast<py::ssize_t>(n));
    for (std::size_t i = 0; i < n; ++i) out.mutable_data()[i] = sample_t(rng, mu, sigma);
    return out;
  }, py::arg("seed"), py::arg("n"), py::arg("mu") = 0.0, py::arg("sigma") = 1.0);

  m.def("blur_score", [](const Array<double>& frame) { return blur_score(to_tensor(frame)); }, py::arg("frame"));

  py::class_<CurationConfig>(m, "CurationConfig")
      .def(py::init<>())
      .def_readwrite("min_persons", &CurationConfig::min_persons)
      .def_readwrite("blur_threshold", &CurationConfig::blur_threshold)
      .def_readwrite("motion_threshold", &CurationConfig::motion_threshold)
      .def_readwrite("angle_threshold", &CurationConfig::angle_threshold);
  m.def("curate_manifest", [](const std::filesystem::path& in, const std::filesystem::path& out,
                              const CurationConfig& cfg) {
    const auto s = curate_manifest(in, out, cfg);
    py::dict d;
    d["read"] = s.read;
    d["accepted"] = s.accepted;
    d["rejected_by_stage"] = s.rejected_by_stage;
    d["errors"] = s.errors;
    return d;
  }, py::arg("input"), py::arg("output"), py::arg("config") = CurationConfig{});

  m.def("synthetic_scene", [](std::uint64_t seed, std::size_t n_characters, std::size_t frames, std::size_t height,
                              std::size_t width, double amplitude, bool snap_to_grid) {
    SceneOptions o;
    o.seed = seed;
    o.n_characters = n_characters;
    o.frames = frames;
    o.height = height;
    o.width = width;
    o.amplitude = amplitude;
    o.snap_to_grid = snap_to_grid;
    const auto s = generate_synthetic_scene(o);
    py::dict d;
    d["frames"] = to_array(s.clip.frames);
    py::list chars;
    for (const auto& c : s.characters) chars.append(character_dict(c));
    d["characters"] = chars;
    return d;
  }, py::arg("seed"), py::arg("n_characters") = 1, py::arg("frames") = 16, py::arg("height") = 32,
     py::arg("width") = 32, py::arg("amplitude") = 1.0, py::arg("snap_to_grid") = true);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", &RunConfig::parse)
      .def_static("load", &RunConfig::load)
      .def("save", &RunConfig::save)
      .def("to_text", &RunConfig::to_text)
      .def("validate", &RunConfig::validate)
      .def("get", &RunConfig::get)
      .def("set", &RunConfig::set)
      .def_static("documented_keys", [] {
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& kd : RunConfig::documented_keys()) out.emplace_back(kd.key, kd.doc);
        return out;
      });

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::ostringstream out, err;
    int code;
    {
      py::gil_scoped_release release;
      code = run_cli(args, out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}
