#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "railseg/active_learn.hpp"
#include "railseg/error.hpp"
#include "railseg/image_io.hpp"
#include "railseg/io.hpp"
#include "railseg/label_transfer.hpp"
#include "railseg/metrics.hpp"
#include "railseg/preprocess.hpp"
#include "railseg/synth.hpp"

namespace py = pybind11;
using namespace railseg;

namespace {

using Points = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Probs = py::array_t<float, py::array::c_style | py::array::forcecast>;
using Ids = py::array_t<std::uint16_t, py::array::c_style | py::array::forcecast>;
using Pixels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// Points travel as (n, 5) arrays: x, y, z, intensity, t_rel.
PointCloud to_cloud(const Points& a, std::string scan_id = {}) {
    if (a.ndim() != 2 || a.shape(1) != 5) throw ValidationError("points must have shape (n, 5)");
    PointCloud cloud{std::move(scan_id), 0.0, {}};
    const auto r = a.unchecked<2>();
    cloud.points.resize(static_cast<std::size_t>(a.shape(0)));
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        auto& p = cloud.points[static_cast<std::size_t>(i)];
        p.position = {r(i, 0), r(i, 1), r(i, 2)};
        p.intensity = r(i, 3);
        p.t_rel = r(i, 4);
    }
    return cloud;
}

py::array_t<double> from_cloud(const PointCloud& cloud) {
    py::array_t<double> out({static_cast<py::ssize_t>(cloud.size()), py::ssize_t{5}});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto& p = cloud.points[i];
        const auto r = static_cast<py::ssize_t>(i);
        w(r, 0) = p.position.x();
        w(r, 1) = p.position.y();
        w(r, 2) = p.position.z();
        w(r, 3) = p.intensity;
        w(r, 4) = p.t_rel;
    }
    return out;
}

py::array_t<bool> from_mask(const preprocess::KeepMask& mask) {
    py::array_t<bool> out(static_cast<py::ssize_t>(mask.size()));
    auto w = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < mask.size(); ++i) w(static_cast<py::ssize_t>(i)) = mask[i];
    return out;
}

std::vector<ClassId> to_ids(const Ids& a) { return {a.data(), a.data() + a.size()}; }

py::array_t<std::uint16_t> from_ids(const std::vector<ClassId>& ids) {
    return py::array_t<std::uint16_t>(static_cast<py::ssize_t>(ids.size()), ids.data());
}

PredictionMatrix to_predictions(const Probs& a, std::string scan_id = {}) {
    if (a.ndim() != 2) throw ValidationError("probabilities must have shape (n, classes)");
    return PredictionMatrix(std::move(scan_id), static_cast<std::size_t>(a.shape(0)),
                            static_cast<std::size_t>(a.shape(1)), std::vector<float>(a.data(), a.data() + a.size()));
}

py::array_t<float> from_predictions(const PredictionMatrix& m) {
    return py::array_t<float>({static_cast<py::ssize_t>(m.n_points()), static_cast<py::ssize_t>(m.n_classes())},
                              m.values().data());
}

transfer::LabelImage to_image(const Pixels& a) {
    if (a.ndim() != 2) throw ValidationError("label image must be 2-D (rows, cols)");
    transfer::LabelImage im(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
    std::copy(a.data(), a.data() + a.size(), im.pixels.begin());
    return im;
}

py::array_t<std::uint8_t> from_image(const transfer::LabelImage& im) {
    return py::array_t<std::uint8_t>({static_cast<py::ssize_t>(im.height), static_cast<py::ssize_t>(im.width)},
                                     im.pixels.data());
}

transfer::CameraCalibration to_calibration(const py::dict& d) {
    transfer::CameraCalibration c;
    c.fx = d["fx"].cast<double>();
    c.fy = d["fy"].cast<double>();
    c.cx = d["cx"].cast<double>();
    c.cy = d["cy"].cast<double>();
    c.width = d.contains("width") ? d["width"].cast<int>() : transfer::kImageWidth;
    c.height = d.contains("height") ? d["height"].cast<int>() : transfer::kImageHeight;
    const auto r = d["R"].cast<std::vector<std::vector<double>>>();
    const auto t = d["t"].cast<std::vector<double>>();
    if (r.size() != 3 || t.size() != 3) throw ValidationError("R must be 3x3 and t of length 3");
    for (int i = 0; i < 3; ++i) {
        if (r[i].size() != 3) throw ValidationError("R must be 3x3");
        for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[i][k];
        c.translation[i] = t[i];
    }
    return c;
}

py::dict from_calibration(const transfer::CameraCalibration& c) {
    std::vector<std::vector<double>> r(3, std::vector<double>(3));
    for (int i = 0; i < 3; ++i) {
        for (int k = 0; k < 3; ++k) r[i][k] = c.rotation(i, k);
    }
    py::dict d;
    d["fx"] = c.fx;
    d["fy"] = c.fy;
    d["cx"] = c.cx;
    d["cy"] = c.cy;
    d["width"] = c.width;
    d["height"] = c.height;
    d["R"] = r;
    d["t"] = std::vector<double>{c.translation.x(), c.translation.y(), c.translation.z()};
    return d;
}

py::bytes to_bytes(const std::vector<std::uint8_t>& b) {
    return py::bytes(reinterpret_cast<const char*>(b.data()), b.size());
}

}  // namespace

PYBIND11_MODULE(_railseg, m) {
    m.doc() = "Railway LiDAR annotation toolkit: core operations on numpy arrays";

    auto error = py::register_exception<Error>(m, "Error");
    py::register_exception<FormatError>(m, "FormatError", error);
    py::register_exception<ValidationError>(m, "ValidationError", error);
    py::register_exception<IoError>(m, "IoError", error);

    m.def("classes", [] {
        std::vector<py::tuple> out;
        for (const auto& c : ClassSet::rail_default().classes()) out.push_back(py::make_tuple(c.id, c.name, c.is_3d));
        return out;
    }, "(id, name, is_3d) for every class, UNLABELED first.");

    // file formats
    m.def("load_cloud", [](const std::filesystem::path& p) { return from_cloud(io::load_cloud(p)); }, py::arg("path"));
    m.def("save_cloud", [](const std::filesystem::path& p, const Points& a) { io::save_cloud(to_cloud(a), p); },
          py::arg("path"), py::arg("points"));
    m.def("load_labels", [](const std::filesystem::path& p) {
        const auto l = io::load_labels(p, ClassSet::rail_default());
        std::vector<std::uint8_t> prov(l.provenance.size());
        for (std::size_t i = 0; i < prov.size(); ++i) prov[i] = static_cast<std::uint8_t>(l.provenance[i]);
        return py::make_tuple(from_ids(l.labels),
                              py::array_t<std::uint8_t>(static_cast<py::ssize_t>(prov.size()), prov.data()));
    }, py::arg("path"), "Returns (labels, provenance) with provenance 1 = corrected.");
    m.def("save_labels", [](const std::filesystem::path& p, const Ids& labels, const Pixels& provenance) {
        if (labels.size() != provenance.size()) throw ValidationError("labels and provenance differ in length");
        LabelArray l({}, static_cast<std::size_t>(labels.size()));
        l.labels = to_ids(labels);
        for (py::ssize_t i = 0; i < provenance.size(); ++i) {
            l.provenance[static_cast<std::size_t>(i)] = provenance.data()[i] ? Provenance::Corrected : Provenance::Auto;
        }
        validate(l, ClassSet::rail_default());
        io::save_labels(l, p);
    }, py::arg("path"), py::arg("labels"), py::arg("provenance"));
    m.def("load_predictions", [](const std::filesystem::path& p, std::size_t n_classes) {
        return from_predictions(io::load_predictions(p, n_classes));
    }, py::arg("path"), py::arg("n_classes") = 9);
    m.def("save_predictions", [](const std::filesystem::path& p, const Probs& a) {
        io::save_predictions(to_predictions(a), p);
    }, py::arg("path"), py::arg("probs"));
    m.def("load_label_image", [](const std::filesystem::path& p) { return from_image(io::load_label_image(p)); },
          py::arg("path"));
    m.def("save_label_image", [](const std::filesystem::path& p, const Pixels& a) {
        io::save_label_image(to_image(a), p);
    }, py::arg("path"), py::arg("image"));
    m.def("encode_palette_png", [](const Pixels& a) { return to_bytes(io::encode_palette_png(to_image(a))); },
          py::arg("image"));
    m.def("decode_palette_png", [](const py::bytes& b) {
        const std::string s = b;
        return from_image(io::decode_palette_png({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()}));
    }, py::arg("data"));
    m.def("class_color", [](ClassId id) { return io::class_color(id); }, py::arg("class_id"));

    // preprocessing
    m.def("filter_reflections", [](const Points& a, double min_range) {
        const auto r = preprocess::filter_reflections(to_cloud(a), min_range);
        return py::make_tuple(from_cloud(r.cloud), from_mask(r.kept));
    }, py::arg("points"), py::arg("min_range") = preprocess::kDefaultMinRange);
    m.def("remove_outliers", [](const Points& a, int k, double alpha) {
        const auto r = preprocess::remove_outliers(to_cloud(a), k, alpha);
        return py::make_tuple(from_cloud(r.cloud), from_mask(r.kept));
    }, py::arg("points"), py::arg("k") = preprocess::kDefaultKnnK, py::arg("alpha") = preprocess::kDefaultKnnAlpha);
    m.def("motion_correct", [](const Points& a, double speed, std::array<double, 3> dir) {
        return from_cloud(preprocess::motion_correct(to_cloud(a), {speed, {dir[0], dir[1], dir[2]}}));
    }, py::arg("points"), py::arg("speed"), py::arg("travel_dir") = std::array<double, 3>{1.0, 0.0, 0.0});
    m.def("apply_motion_distortion", [](const Points& a, double speed, std::array<double, 3> dir) {
        return from_cloud(preprocess::apply_motion_distortion(to_cloud(a), {speed, {dir[0], dir[1], dir[2]}}));
    }, py::arg("points"), py::arg("speed"), py::arg("travel_dir") = std::array<double, 3>{1.0, 0.0, 0.0});
    m.def("sync_pairs", [](const std::vector<std::pair<std::string, double>>& scans,
                           const std::vector<std::pair<std::string, double>>& images, double max_dt) {
        std::vector<preprocess::TimedId> s, i;
        for (const auto& [id, t] : scans) s.push_back({id, t});
        for (const auto& [id, t] : images) i.push_back({id, t});
        std::vector<std::tuple<std::string, std::string, double>> out;
        for (const auto& p : preprocess::sync_pairs(s, i, max_dt)) out.emplace_back(p.scan_id, p.image_id, p.dt);
        return out;
    }, py::arg("scans"), py::arg("images"), py::arg("max_dt") = preprocess::kDefaultMaxSyncDt,
       "Pairs (id, time) lists; returns (scan_id, image_id, t_image - t_scan).");

    // label transfer
    m.def("project_points", [](const Points& a, const py::dict& calib) {
        const auto proj = transfer::project_points(to_cloud(a), to_calibration(calib));
        py::array_t<double> uv({static_cast<py::ssize_t>(proj.size()), py::ssize_t{2}});
        auto w = uv.mutable_unchecked<2>();
        std::vector<std::uint8_t> valid(proj.size());
        for (std::size_t i = 0; i < proj.size(); ++i) {
            w(static_cast<py::ssize_t>(i), 0) = proj[i].u;
            w(static_cast<py::ssize_t>(i), 1) = proj[i].v;
            valid[i] = proj[i].valid;
        }
        return py::make_tuple(uv, py::array_t<std::uint8_t>(static_cast<py::ssize_t>(valid.size()), valid.data())
                                      .attr("astype")("bool"));
    }, py::arg("points"), py::arg("calibration"));
    m.def("transfer_labels", [](const Points& a, const Pixels& image, const py::dict& calib) {
        return from_ids(transfer::transfer_labels(to_cloud(a), to_image(image), to_calibration(calib)).labels);
    }, py::arg("points"), py::arg("image"), py::arg("calibration"));

    // active learning
    m.def("point_entropy", [](const std::vector<double>& p) { return al::point_entropy(p); }, py::arg("probs"));
    m.def("point_uncertainty", [](const std::vector<double>& p) { return al::point_uncertainty(p); },
          py::arg("probs"));
    m.def("score_scan", [](const Probs& a) {
        const auto s = al::score_scan(to_predictions(a));
        return py::make_tuple(s.mean_entropy, s.mean_uncertainty);
    }, py::arg("probs"), "Returns (mean entropy, mean uncertainty).");
    m.def("rank_scans", [](const std::vector<std::tuple<std::string, double, double>>& scores) {
        std::vector<al::ScanScore> in;
        for (const auto& [id, h, u] : scores) in.push_back({id, h, u, 1});
        std::vector<py::dict> out;
        for (const auto& r : al::rank_scans(in)) {
            py::dict d;
            d["scan_id"] = r.scan_id;
            d["rank_H"] = r.rank_entropy;
            d["rank_U"] = r.rank_uncertainty;
            d["R"] = r.rank_sum;
            out.push_back(d);
        }
        return out;
    }, py::arg("scores"), "Ranks (scan_id, mean_entropy, mean_uncertainty) tuples, best first.");

    // metrics
    m.def("confusion_matrix", [](const Ids& pred, const Ids& gt) {
        metrics::ConfusionMatrix cm;
        metrics::accumulate(cm, to_ids(pred), to_ids(gt));
        const auto n = static_cast<py::ssize_t>(cm.n_classes());
        py::array_t<std::uint64_t> out({n, n + 1});
        auto w = out.mutable_unchecked<2>();
        for (py::ssize_t r = 0; r < n; ++r) {
            for (py::ssize_t c = 0; c < n; ++c) w(r, c) = cm.at(r, c);
            w(r, n) = cm.rejected(r);
        }
        return out;
    }, py::arg("pred"), py::arg("gt"), "Rows: ground truth; last column: predicted UNLABELED.");
    m.def("miou", [](const std::vector<std::optional<double>>& ious, const std::vector<double>& freq) {
        return metrics::miou(ious, freq);
    }, py::arg("ious"), py::arg("frequencies"));
    m.def("fwiou", [](const std::vector<std::optional<double>>& ious, const std::vector<double>& freq) {
        return metrics::fwiou(ious, freq);
    }, py::arg("ious"), py::arg("frequencies"));
    m.def("improvement", &metrics::improvement, py::arg("old"), py::arg("new"));

    // synthetic data
    m.def("synth_scene", [](std::uint64_t seed, std::size_t n_points, double speed, bool render_image) {
        synth::SynthSceneConfig cfg;
        cfg.seed = seed;
        cfg.n_points = n_points;
        cfg.speed = speed;
        cfg.render_image = render_image;
        const auto s = synth::synth_scene(cfg);
        py::dict d;
        d["undistorted"] = from_cloud(s.undistorted);
        d["distorted"] = from_cloud(s.distorted);
        d["labels"] = from_ids(s.labels.labels);
        d["is_reflection"] = from_mask(s.is_reflection);
        d["calibration"] = from_calibration(s.calibration);
        if (render_image) d["image"] = from_image(s.image);
        return d;
    }, py::arg("seed") = 42, py::arg("n_points") = 10'000, py::arg("speed") = 27.78, py::arg("render_image") = true);
}
