#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ropegraph/config.hpp"
#include "ropegraph/dataset.hpp"
#include "ropegraph/errors.hpp"
#include "ropegraph/serialization.hpp"

namespace py = pybind11;
using namespace ropegraph;

namespace {

using Array2 = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(const Image& img) {
    py::array_t<double> out({img.height, img.width});
    std::copy(img.values.begin(), img.values.end(), out.mutable_data());
    return out;
}

Image to_image(const Array2& a) {
    if (a.ndim() != 2) throw ShapeMismatch("image must be 2-D");
    Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), img.values.begin());
    return img;
}

py::array_t<double> units_to_numpy(const std::vector<Vec2>& units) {
    py::array_t<double> out({static_cast<py::ssize_t>(units.size()), py::ssize_t{2}});
    auto m = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < units.size(); ++i) {
        m(i, 0) = units[i].x;
        m(i, 1) = units[i].y;
    }
    return out;
}

std::vector<Vec2> units_from_numpy(const Array2& a) {
    if (a.ndim() != 2 || a.shape(1) != 2) throw ShapeMismatch("units must be N x 2");
    auto r = a.unchecked<2>();
    std::vector<Vec2> out(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {r(i, 0), r(i, 1)};
    return out;
}

py::tuple pixel_tuple(Pixel p) { return py::make_tuple(p.row, p.col); }

py::tuple action_tuple(const PickPlaceAction& a) { return py::make_tuple(pixel_tuple(a.pick), pixel_tuple(a.place)); }

std::vector<Transition> split_transitions(const Dataset& ds, const std::string& split,
                                          const std::optional<std::string>& topology) {
    std::optional<Topology> t;
    if (topology) t = topology_from_string(*topology);
    return transitions_of(select(ds, split_from_string(split), t ? &*t : nullptr));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Rope rearrangement simulator, oracle and graph-conditioned pick-and-place policy";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<InvalidGeometry>(m, "InvalidGeometry", error);
    py::register_exception<OutOfWorkspace>(m, "OutOfWorkspace", error);
    py::register_exception<ShapeMismatch>(m, "ShapeMismatch", error);
    py::register_exception<InsufficientForeground>(m, "InsufficientForeground", error);
    py::register_exception<InsufficientUnits>(m, "InsufficientUnits", error);
    py::register_exception<DegenerateGraph>(m, "DegenerateGraph", error);
    py::register_exception<NoGraph>(m, "NoGraph", error);
    py::register_exception<NoSupport>(m, "NoSupport", error);
    py::register_exception<ConfigError>(m, "ConfigError", error);
    py::register_exception<TrainingDiverged>(m, "TrainingDiverged", error);
    py::register_exception<BadMagic>(m, "BadMagic", error);
    py::register_exception<VersionMismatch>(m, "VersionMismatch", error);
    py::register_exception<IoError>(m, "IoError", error);
    py::register_exception<TruncatedFile>(m, "TruncatedFile", error);

    py::enum_<Topology>(m, "Topology").value("Chain", Topology::Chain).value("Ring", Topology::Ring);

    py::class_<SimConfig>(m, "SimConfig")
        .def(py::init<>())
        .def_readwrite("grasp_radius", &SimConfig::grasp_radius)
        .def_readwrite("pbd_iterations", &SimConfig::pbd_iterations)
        .def_readwrite("drag_substeps", &SimConfig::drag_substeps)
        .def_readwrite("render_thickness", &SimConfig::render_thickness)
        .def_readwrite("scramble_margin", &SimConfig::scramble_margin)
        .def_readwrite("relax_tolerance", &SimConfig::relax_tolerance)
        .def_readwrite("max_relax_sweeps", &SimConfig::max_relax_sweeps);

    py::class_<RopeState>(m, "RopeState")
        .def(py::init([](Topology t, const Array2& units, double link) {
                 RopeState s{t, units_from_numpy(units), link};
                 validate(s);
                 return s;
             }),
             py::arg("topology"), py::arg("units"), py::arg("link_length"))
        .def_readonly("topology", &RopeState::topology)
        .def_readonly("link_length", &RopeState::link_length)
        .def_property_readonly("units", [](const RopeState& s) { return units_to_numpy(s.units); })
        .def("__len__", &RopeState::size)
        .def("__eq__", [](const RopeState& a, const RopeState& b) { return a == b; })
        .def("max_link_deviation", &max_link_deviation);

    m.def("init_state", &init_state, py::arg("topology"), py::arg("n_units") = 32, py::arg("link_length") = 0.02,
          py::arg("seed") = 0);
    m.def("scramble", &scramble, py::arg("state"), py::arg("k_actions"), py::arg("seed"),
          py::arg("config") = SimConfig{});
    m.def(
        "apply_pick_place",
        [](const RopeState& s, std::pair<double, double> pick, std::pair<double, double> place, const SimConfig& c) {
            const PickPlaceResult r = apply_pick_place(s, {pick.first, pick.second}, {place.first, place.second}, c);
            return py::make_tuple(r.state, r.grasped);
        },
        py::arg("state"), py::arg("pick"), py::arg("place"), py::arg("config") = SimConfig{},
        "Returns (new_state, grasped). Points are (x, y) in the unit square.");
    m.def(
        "render", [](const RopeState& s, int h, int w, double t) { return to_numpy(render(s, h, w, t)); },
        py::arg("state"), py::arg("height") = 64, py::arg("width") = 64, py::arg("thickness") = 3.0);
    m.def(
        "pixel_to_world",
        [](std::pair<int, int> p, int h, int w) {
            const Vec2 v = pixel_to_world({p.first, p.second}, h, w);
            return py::make_tuple(v.x, v.y);
        },
        py::arg("pixel"), py::arg("height"), py::arg("width"));
    m.def(
        "world_to_pixel",
        [](std::pair<double, double> v, int h, int w) { return pixel_tuple(world_to_pixel({v.first, v.second}, h, w)); },
        py::arg("point"), py::arg("height"), py::arg("width"));

    m.def(
        "oracle_action",
        [](const Array2& cur, const Array2& goal, Topology t, bool ring_reversal) {
            const WorldAction a = oracle_action(units_from_numpy(cur), units_from_numpy(goal), t, {ring_reversal});
            return py::make_tuple(py::make_tuple(a.pick.x, a.pick.y), py::make_tuple(a.place.x, a.place.y));
        },
        py::arg("current"), py::arg("goal"), py::arg("topology"), py::arg("ring_reversal") = false,
        "World-space ((pick_x, pick_y), (place_x, place_y)).");
    m.def(
        "best_correspondence",
        [](const Array2& cur, const Array2& goal, Topology t, bool ring_reversal) {
            const Correspondence c = best_correspondence(units_from_numpy(cur), units_from_numpy(goal), t, {ring_reversal});
            return py::make_tuple(c.remap, c.mse);
        },
        py::arg("current"), py::arg("goal"), py::arg("topology"), py::arg("ring_reversal") = false);
    m.def(
        "completion_distance",
        [](const RopeState& cur, const RopeState& goal, int h, int w) { return completion_distance(cur, goal, h, w).pixels; },
        py::arg("current"), py::arg("goal"), py::arg("height") = 64, py::arg("width") = 64);

    m.def(
        "extract_keypoints",
        [](const Array2& img, int k) {
            std::vector<std::pair<int, int>> out;
            for (Pixel p : extract_keypoints(to_image(img), k).points) out.emplace_back(p.row, p.col);
            return out;
        },
        py::arg("image"), py::arg("k") = 16);
    m.def(
        "gaussian_mask",
        [](const std::vector<std::pair<int, int>>& points, int h, int w, double sigma) {
            KeypointSet kp;
            for (auto [r, c] : points) kp.points.push_back({r, c});
            return to_numpy(gaussian_mask(kp, h, w, {sigma, 3.0}));
        },
        py::arg("keypoints"), py::arg("height"), py::arg("width"), py::arg("sigma") = 3.0);

    py::class_<ModelHyper>(m, "ModelHyper")
        .def(py::init<>())
        .def_readwrite("height", &ModelHyper::height)
        .def_readwrite("width", &ModelHyper::width)
        .def_readwrite("keypoints", &ModelHyper::keypoints)
        .def_readwrite("crop", &ModelHyper::crop)
        .def_readwrite("feature_channels", &ModelHyper::feature_channels)
        .def_readwrite("fcn_hidden", &ModelHyper::fcn_hidden)
        .def_readwrite("fcn_layers", &ModelHyper::fcn_layers)
        .def_readwrite("dilation_growth", &ModelHyper::dilation_growth)
        .def_readwrite("gcn_hidden", &ModelHyper::gcn_hidden)
        .def_readwrite("gcn_out", &ModelHyper::gcn_out)
        .def_readwrite("mask_sigma", &ModelHyper::mask_sigma);

    py::class_<ModelParams>(m, "Model")
        .def(py::init([](const ModelHyper& h, std::uint64_t seed) { return init_params(h, seed); }),
             py::arg("hyper") = ModelHyper{}, py::arg("seed") = 1)
        .def_readonly("hyper", &ModelParams::hyper)
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); })
        .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); })
        .def(
            "act",
            [](const ModelParams& p, const Array2& cur, const Array2& goal) {
                PickPlaceAction a;
                {
                    const Image c = to_image(cur), g = to_image(goal);
                    py::gil_scoped_release release;
                    a = act(c, g, p);
                }
                return action_tuple(a);
            },
            py::arg("current"), py::arg("goal"), "((pick_row, pick_col), (place_row, place_col))")
        .def(
            "heatmaps",
            [](const ModelParams& p, const Array2& cur, const Array2& goal) {
                ActTrace tr;
                act(to_image(cur), to_image(goal), p, &tr);
                return py::make_tuple(to_numpy(tr.pick.q), to_numpy(tr.place.q));
            },
            py::arg("current"), py::arg("goal"), "Masked (pick, place) score maps")
        .def("__eq__", [](const ModelParams& a, const ModelParams& b) { return a == b; });

    m.def(
        "generate_dataset",
        [](const std::filesystem::path& dir, int n_tasks, std::uint64_t seed, double mix, int resolution) {
            TaskConfig cfg;
            cfg.env.height = cfg.env.width = resolution;
            cfg.criterion = SuccessCriterion::defaults(resolution, resolution);
            DemonstrationSet demos;
            {
                py::gil_scoped_release release;
                demos = generate_demonstrations(generate_tasks(n_tasks, mix, seed, cfg), cfg);
                write_dataset(dir, demos.episodes);
            }
            return demos.episodes.size();
        },
        py::arg("out_dir"), py::arg("n_tasks") = kDefaultTaskCount, py::arg("seed") = kDefaultDatasetSeed,
        py::arg("topology_mix") = 0.5, py::arg("resolution") = 64, "Writes oracle demonstrations; returns the episode count.");

    m.def(
        "train",
        [](const std::filesystem::path& data, const std::string& config_text,
           const std::function<void(int, double)>& on_record) {
            const TrainSettings s = parse_train_settings(config_text);
            const Dataset ds = load_dataset(data);
            const Topology* topo = s.topology ? &*s.topology : nullptr;
            const auto train = transitions_of(select(ds, Split::Train, topo));
            const auto val = transitions_of(select(ds, Split::Val, topo));
            if (train.empty()) throw ConfigError("no training transitions");
            ModelHyper hyper = s.hyper;
            hyper.height = train.front().current.height;
            hyper.width = train.front().current.width;
            std::function<void(const LogRecord&)> cb;
            if (on_record) cb = [&](const LogRecord& r) {
                py::gil_scoped_acquire acquire;
                on_record(r.step, r.train_loss);
            };
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train_imitation(train, val, s.train, init_params(hyper, s.init_seed), cb);
            }
            return r.params;
        },
        py::arg("data_dir"), py::arg("config") = "", py::arg("on_record") = nullptr,
        "Trains from a dataset directory with key=value config text; returns the model.");

    m.def(
        "evaluate",
        [](const ModelParams& p, const std::filesystem::path& data, const std::string& split,
           const std::optional<std::string>& topology) {
            const auto test = split_transitions(load_dataset(data), split, topology);
            const ImitationErrors e = eval_errors(p, test);
            return py::make_tuple(e.e_pick, e.e_place);
        },
        py::arg("model"), py::arg("data_dir"), py::arg("split") = "test", py::arg("topology") = "chain",
        "Mean normalized (e_pick, e_place) against the oracle actions.");

    m.def(
        "rollout_success_rate",
        [](const std::string& policy, const std::optional<ModelParams>& model, int n_tasks, double mix,
           std::uint64_t seed) {
            const TaskConfig cfg;
            Policy pol;
            if (policy == "model") {
                if (!model) throw ConfigError("policy 'model' needs a model");
                pol = model_policy(*model);
            } else if (policy == "oracle") {
                pol = oracle_policy(cfg.env.height, cfg.env.width);
            } else if (policy == "random") {
                pol = random_policy(cfg.env.height, cfg.env.width);
            } else {
                throw ConfigError("unknown policy: " + policy);
            }
            py::gil_scoped_release release;
            return success_rate(pol, generate_tasks(n_tasks, mix, seed, cfg), cfg.criterion, cfg.env).rate;
        },
        py::arg("policy"), py::arg("model") = std::nullopt, py::arg("n_tasks") = 50, py::arg("topology_mix") = 1.0,
        py::arg("seed") = kHeldOutTaskSeed);

    m.def(
        "read_episode",
        [](const std::filesystem::path& p) {
            const Episode e = read_episode(p);
            py::list steps;
            for (const EpisodeStep& s : e.steps)
                steps.append(py::make_tuple(to_numpy(s.image), units_to_numpy(s.units), action_tuple(s.action)));
            py::dict d;
            d["task_id"] = e.task_id;
            d["topology"] = e.topology;
            d["goal_image"] = to_numpy(e.goal_image);
            d["goal_units"] = units_to_numpy(e.goal_units);
            d["steps"] = steps;
            d["final_image"] = to_numpy(e.final_image);
            d["final_units"] = units_to_numpy(e.final_units);
            return d;
        },
        py::arg("path"));
}
