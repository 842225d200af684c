#include "dnetknn/classify.hpp"
#include "dnetknn/dataset.hpp"
#include "dnetknn/encoder.hpp"
#include "dnetknn/error.hpp"
#include "dnetknn/margin.hpp"
#include "dnetknn/neighbors.hpp"
#include "dnetknn/parallel.hpp"
#include "dnetknn/trainer.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace dnetknn;

namespace {

using Labels = py::array_t<int, py::array::c_style | py::array::forcecast>;
using TripleArray = py::array_t<std::uint32_t, py::array::c_style | py::array::forcecast>;

std::vector<int> to_labels(const Labels& a) {
    if (a.ndim() != 1) {
        throw DimensionError("labels must be one-dimensional");
    }
    return {a.data(), a.data() + a.size()};
}

Dataset make_dataset(const Matrix& x, const Labels& y, std::optional<int> num_classes) {
    std::vector<int> labels = to_labels(y);
    int c = 0;
    if (num_classes) {
        c = *num_classes;
    } else {
        for (int l : labels) {
            c = std::max(c, l + 1);
        }
    }
    return Dataset(x, std::move(labels), c);
}

py::tuple as_arrays(const Dataset& d) {
    return py::make_tuple(d.features(), py::array_t<int>(static_cast<py::ssize_t>(d.size()), d.labels().data()));
}

TripleArray to_array(const TriplesTable& t) {
    TripleArray out({static_cast<py::ssize_t>(t.size()), py::ssize_t{3}});
    auto v = out.mutable_unchecked<2>();
    for (std::size_t r = 0; r < t.size(); ++r) {
        const auto i = static_cast<py::ssize_t>(r);
        v(i, 0) = t[r].anchor;
        v(i, 1) = t[r].target;
        v(i, 2) = t[r].impostor;
    }
    return out;
}

TriplesTable from_array(const TripleArray& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) {
        throw DimensionError("triples must have shape (n, 3)");
    }
    auto v = a.unchecked<2>();
    TriplesTable t(static_cast<std::size_t>(a.shape(0)));
    for (py::ssize_t r = 0; r < a.shape(0); ++r) {
        t[static_cast<std::size_t>(r)] = {v(r, 0), v(r, 1), v(r, 2)};
    }
    return t;
}

py::tuple predictions(const std::vector<Prediction>& p) {
    py::array_t<int> labels(static_cast<py::ssize_t>(p.size()));
    py::array_t<double> scores(static_cast<py::ssize_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
        labels.mutable_at(static_cast<py::ssize_t>(i)) = p[i].label;
        scores.mutable_at(static_cast<py::ssize_t>(i)) = p[i].score;
    }
    return py::make_tuple(labels, scores);
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Deep encoders trained for large-margin kNN classification";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    py::register_exception<IoError>(m, "IoError", base);
    py::register_exception<FormatError>(m, "FormatError", base);
    py::register_exception<ConsistencyError>(m, "ConsistencyError", base);
    py::register_exception<CapacityError>(m, "CapacityError", base);
    py::register_exception<DivergenceError>(m, "DivergenceError", base);

    m.def("set_num_threads", &set_num_threads, py::arg("n"));

    m.def(
        "load_idx",
        [](const std::filesystem::path& images, const std::filesystem::path& labels) {
            return as_arrays(load_idx(images, labels));
        },
        py::arg("images"), py::arg("labels"), "Returns (features in [0,1], labels).");
    m.def(
        "load_csv", [](const std::filesystem::path& path) { return as_arrays(load_csv(path)); }, py::arg("path"));

    py::class_<EncoderParams>(m, "Encoder")
        .def_static(
            "random",
            [](const std::vector<std::size_t>& widths, std::uint64_t seed) {
                return EncoderParams::gaussian(widths, seed);
            },
            py::arg("widths"), py::arg("seed") = 0)
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const EncoderParams& p, const std::filesystem::path& path) { save_checkpoint(p, path); },
             py::arg("path"))
        .def_property_readonly("widths", &EncoderParams::widths)
        .def_property_readonly("parameter_count", &EncoderParams::parameter_count)
        .def("forward", [](const EncoderParams& p, const Matrix& x) { return forward(p, x); }, py::arg("x"))
        .def("flatten", [](const EncoderParams& p) { return flatten(p); })
        .def(
            "with_parameters",
            [](const EncoderParams& p, const Vector& v) {
                return unflatten(p, {v.data(), static_cast<std::size_t>(v.size())});
            },
            py::arg("theta"))
        .def(py::self == py::self);

    m.def(
        "build_triples",
        [](const Matrix& x, const Labels& y, int k, int m_) {
            return to_array(build_triples(make_dataset(x, y, std::nullopt), {k, m_}));
        },
        py::arg("x"), py::arg("y"), py::arg("k") = 5, py::arg("m") = 30);

    m.def(
        "margin_loss",
        [](const Matrix& codes, const TripleArray& triples) {
            const auto r = loss_and_code_grad(codes, from_array(triples));
            return py::make_tuple(r.loss.value, r.loss.active_triples, r.grad);
        },
        py::arg("codes"), py::arg("triples"), "Returns (loss, active_triples, d loss / d codes).");

    m.def(
        "train",
        [](const Matrix& x, const Labels& y, const std::vector<std::size_t>& layers, int k, int m_,
           std::size_t batch_size, int epochs, int cg_iters, std::uint64_t seed, bool pretrain,
           int pretrain_epochs) {
            TrainConfig cfg;
            cfg.layer_sizes = layers;
            cfg.neighbors = {k, m_};
            cfg.batch_size = batch_size;
            cfg.epochs = epochs;
            cfg.cg_line_searches = cg_iters;
            cfg.seed = seed;
            cfg.init = pretrain ? InitMode::rbm_pretrained : InitMode::random;
            cfg.pretraining.epochs = pretrain_epochs;
            const Dataset d = make_dataset(x, y, std::nullopt);
            std::pair<EncoderParams, TrainReport> r;
            {
                py::gil_scoped_release release;
                r = pretrain_then_finetune(d, cfg);
            }
            py::list epochs_out;
            for (const auto& e : r.second.epochs) {
                epochs_out.append(py::dict(py::arg("epoch") = e.epoch, py::arg("loss") = e.loss,
                                           py::arg("active_triples") = e.active_triples,
                                           py::arg("seconds") = e.seconds));
            }
            py::dict report(py::arg("initial_loss") = r.second.initial_loss, py::arg("epochs") = epochs_out,
                            py::arg("best_epoch") = r.second.best_epoch);
            return py::make_tuple(r.first, report);
        },
        py::arg("x"), py::arg("y"), py::arg("layers"), py::arg("k") = 5, py::arg("m") = 30,
        py::arg("batch_size") = 10000, py::arg("epochs") = 5, py::arg("cg_iters") = 3, py::arg("seed") = 0,
        py::arg("pretrain") = true, py::arg("pretrain_epochs") = 10,
        "RBM pretraining (or random init) followed by large-margin fine-tuning. Returns (encoder, report).");

    m.def(
        "knn_predict",
        [](const Matrix& train, const Labels& labels, const Matrix& test, int k) {
            const auto l = to_labels(labels);
            return predictions(knn_predict(train, l, test, k));
        },
        py::arg("train_codes"), py::arg("train_labels"), py::arg("test_codes"), py::arg("k") = 5);

    m.def(
        "energy_predict",
        [](const Matrix& train, const Labels& labels, const Matrix& test, int k, int m_,
           std::optional<int> num_classes) {
            const auto l = to_labels(labels);
            int c = num_classes.value_or(0);
            for (int v : l) {
                c = std::max(c, v + 1);
            }
            return predictions(energy_predict(train, l, c, test, {k, m_}));
        },
        py::arg("train_codes"), py::arg("train_labels"), py::arg("test_codes"), py::arg("k") = 5,
        py::arg("m") = 30, py::arg("num_classes") = py::none());
}
