// Python bindings for the tracker core: tensor kernels, objectives, metrics
// and a model wrapper, all over numpy float64 arrays.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>
#include <string>
#include <vector>

#include "macft/checkpoint.hpp"
#include "macft/corner_head.hpp"
#include "macft/metrics.hpp"
#include "macft/model.hpp"
#include "macft/objectives.hpp"
#include "macft/ops.hpp"
#include "macft/patch_embed.hpp"
#include "macft/shared_branch.hpp"

namespace py = pybind11;
using namespace macft;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    std::vector<int> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] =
        static_cast<int>(a.shape(i));
    std::vector<double> data(a.data(), a.data() + a.size());
    return Tensor::from(std::move(shape), std::move(data));
}

py::array to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    py::array_t<double> out(shape);
    std::copy(t.values().begin(), t.values().end(), out.mutable_data());
    return out;
}

Box to_box(const std::vector<double>& v) {
    if (v.size() != 4) throw std::invalid_argument("box must have 4 entries (x, y, w, h)");
    return Box{v[0], v[1], v[2], v[3]};
}

NormBox to_norm_box(const std::vector<double>& v) {
    if (v.size() != 4)
        throw std::invalid_argument("box must have 4 entries (cx, cy, w, h)");
    return NormBox{v[0], v[1], v[2], v[3]};
}

std::vector<Box> to_boxes(const Array& a) {
    if (a.ndim() != 2 || a.shape(1) != 4)
        throw std::invalid_argument("expected an [N x 4] array of boxes");
    std::vector<Box> out;
    out.reserve(static_cast<std::size_t>(a.shape(0)));
    for (py::ssize_t i = 0; i < a.shape(0); ++i)
        out.push_back(Box{a.at(i, 0), a.at(i, 1), a.at(i, 2), a.at(i, 3)});
    return out;
}

// Thin inference/serialization wrapper over the full model.
class PyModel {
  public:
    PyModel(const std::string& variant, std::uint64_t seed, int search, int templ, int patch,
            int dim, int depth, int heads, int ffn_mult, int fusion_k) {
        cfg_.search_size = search;
        cfg_.template_size = templ;
        cfg_.patch = patch;
        cfg_.dim = dim;
        cfg_.depth = depth;
        cfg_.heads = heads;
        cfg_.ffn_mult = ffn_mult;
        cfg_.fusion_k = fusion_k;
        model_ = std::make_unique<MacftModel>(parse_variant(variant), cfg_, seed);
    }

    std::vector<double> predict(const Array& z_rgb, const Array& x_rgb, const Array& z_tir,
                                const Array& x_tir) {
        auto opt = [](const Array& a) { return a.size() ? to_tensor(a) : Tensor(); };
        NormBox b = repair_box(
            model_->predict(opt(z_rgb), opt(x_rgb), opt(z_tir), opt(x_tir)));
        return {b.cx, b.cy, b.w, b.h};
    }

    void save(const std::string& path) { save_checkpoint(path, model_->params_all()); }
    void load(const std::string& path) { load_checkpoint(path, model_->params_all()); }

    std::size_t param_count() {
        std::size_t n = 0;
        for (Param* p : model_->params_all()) n += p->value.size();
        return n;
    }

    std::string variant() const { return variant_name(model_->variant()); }

  private:
    ModelConfig cfg_;
    std::unique_ptr<MacftModel> model_;
};

}  // namespace

PYBIND11_MODULE(_macft, m) {
    m.doc() = "RGB-T tracker core: tensor kernels, objectives, metrics, model";

    // --- tensor kernels -----------------------------------------------------
    m.def("matmul", [](const Array& a, const Array& b) {
        return to_array(matmul(to_tensor(a), to_tensor(b)));
    });
    m.def(
        "softmax",
        [](const Array& x, int axis) { return to_array(softmax(to_tensor(x), axis)); },
        py::arg("x"), py::arg("axis") = 1);
    m.def(
        "layer_norm",
        [](const Array& x, const Array& gamma, const Array& beta, double eps) {
            return to_array(layer_norm(to_tensor(x), to_tensor(gamma), to_tensor(beta), eps));
        },
        py::arg("x"), py::arg("gamma"), py::arg("beta"), py::arg("eps") = 1e-6);
    m.def("gelu", [](const Array& x) { return to_array(gelu(to_tensor(x))); });
    m.def(
        "conv2d",
        [](const Array& x, const Array& kernel, int stride, int padding) {
            return to_array(conv2d(to_tensor(x), to_tensor(kernel), stride, padding));
        },
        py::arg("x"), py::arg("kernel"), py::arg("stride") = 1, py::arg("padding") = 0);
    m.def(
        "sinusoid_pos_table",
        [](int grid_w, int grid_h, int dim) {
            return to_array(sinusoid_pos_table(grid_w, grid_h, dim));
        },
        py::arg("grid_w"), py::arg("grid_h"), py::arg("dim"));
    m.def("soft_argmax", [](const Array& map) {
        double x = 0.0, y = 0.0;
        soft_argmax(to_tensor(map), x, y);
        return py::make_tuple(x, y);
    });

    // --- objectives -----------------------------------------------------------
    m.def("kl_divergence", [](const Array& g_v, const Array& g_t) {
        return kl_divergence_loss(to_tensor(g_v), to_tensor(g_t)).loss;
    });
    m.def("giou_loss", [](const std::vector<double>& pred, const std::vector<double>& target) {
        return giou_loss(to_norm_box(pred), to_norm_box(target));
    });
    m.def("l1_box_loss", [](const std::vector<double>& pred, const std::vector<double>& target) {
        return l1_box_loss(to_norm_box(pred), to_norm_box(target));
    });
    m.def(
        "box_loss",
        [](const std::vector<double>& pred, const std::vector<double>& target, double giou_w,
           double l1_w) {
            LossWeights w;
            w.giou = giou_w;
            w.l1 = l1_w;
            return composite_loss_stage13(to_norm_box(pred), to_norm_box(target), w);
        },
        py::arg("pred"), py::arg("target"), py::arg("giou_w") = 2.0, py::arg("l1_w") = 5.0);
    m.def("repair_box", [](const std::vector<double>& b) {
        NormBox r = repair_box(to_norm_box(b));
        return std::vector<double>{r.cx, r.cy, r.w, r.h};
    });

    // --- metrics ---------------------------------------------------------------
    m.def("iou", [](const std::vector<double>& a, const std::vector<double>& b) {
        return iou(to_box(a), to_box(b));
    });
    m.def("cle", [](const std::vector<double>& a, const std::vector<double>& b) {
        return cle(to_box(a), to_box(b));
    });
    m.def("precision_curve", [](const Array& preds, const Array& gts) {
        PrecisionResult r = precision_curve(to_boxes(preds), to_boxes(gts));
        return py::make_tuple(r.thresholds, r.values, r.pr20);
    });
    m.def("success_curve", [](const Array& preds, const Array& gts) {
        SuccessResult r = success_curve(to_boxes(preds), to_boxes(gts));
        return py::make_tuple(r.thresholds, r.values, r.auc, r.sr50);
    });
    m.def("mean_iou", [](const Array& preds, const Array& gts) {
        return mean_iou(to_boxes(preds), to_boxes(gts));
    });

    // --- model -------------------------------------------------------------------
    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, std::uint64_t, int, int, int, int, int, int, int,
                      int>(),
             py::arg("variant") = "full", py::arg("seed") = 1234, py::arg("search") = 32,
             py::arg("template_size") = 16, py::arg("patch") = 4, py::arg("dim") = 32,
             py::arg("depth") = 2, py::arg("heads") = 4, py::arg("ffn_mult") = 4,
             py::arg("fusion_k") = 6)
        .def("predict", &PyModel::predict, py::arg("z_rgb"), py::arg("x_rgb"),
             py::arg("z_tir"), py::arg("x_tir"))
        .def("save", &PyModel::save)
        .def("load", &PyModel::load)
        .def_property_readonly("param_count", &PyModel::param_count)
        .def_property_readonly("variant", &PyModel::variant);

    m.attr("__version__") = "0.1.0";
}
