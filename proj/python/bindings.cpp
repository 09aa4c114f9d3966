#include "cli.hpp"

#include "metatopic/checkpoint.hpp"
#include "metatopic/corpus.hpp"
#include "metatopic/eval.hpp"
#include "metatopic/infer.hpp"
#include "metatopic/train.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace metatopic;

namespace {

TrainConfig config_from_kwargs(const py::kwargs& kw) {
  TrainConfig c;
  for (auto item : kw) {
    const auto key = py::cast<std::string>(item.first);
    const auto& v = item.second;
    if (key == "k") c.num_topics = py::cast<int>(v);
    else if (key == "alpha") c.alpha = py::cast<double>(v);
    else if (key == "epochs") c.epochs = py::cast<int>(v);
    else if (key == "lr") c.learning_rate = py::cast<double>(v);
    else if (key == "batch_size") c.batch_size = py::cast<int>(v);
    else if (key == "beta1") c.adam_beta1 = py::cast<double>(v);
    else if (key == "beta2") c.adam_beta2 = py::cast<double>(v);
    else if (key == "seed") c.seed = py::cast<std::uint64_t>(v);
    else if (key == "samples") c.train_samples = py::cast<int>(v);
    else if (key == "embedding_dim") c.embedding_dim = py::cast<int>(v);
    else if (key == "covariates") c.use_covariates = py::cast<bool>(v);
    else if (key == "labels") c.use_labels = py::cast<bool>(v);
    else if (key == "interactions") c.use_interactions = py::cast<bool>(v);
    else if (key == "background") c.use_background = py::cast<bool>(v);
    else if (key == "sparsity") c.sparsity_enabled = py::cast<bool>(v);
    else if (key == "embed_covariates") c.covariate_embedding_dim = py::cast<int>(v);
    else throw py::key_error("unknown training option '" + key + "'");
  }
  c.validate();
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "metatopic: neural topic models with document metadata";

  py::class_<Corpus>(m, "Corpus")
      .def_static("load", &load_corpus, py::arg("path"))
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { save_corpus(c, p); }, py::arg("path"))
      .def_property_readonly("num_docs", &Corpus::num_docs)
      .def_property_readonly("vocab_size", &Corpus::vocab_size)
      .def_property_readonly("vocabulary", [](const Corpus& c) { return c.vocabulary.words(); })
      .def_readonly("label_names", &Corpus::label_names)
      .def_readonly("covariate_names", &Corpus::covariate_names)
      .def_property_readonly("ids", [](const Corpus& c) {
        std::vector<std::string> ids;
        for (const auto& d : c.documents) ids.push_back(d.id);
        return ids;
      })
      .def("__len__", &Corpus::num_docs);

  py::class_<TrainedModel>(m, "Model")
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const TrainedModel& t, const std::filesystem::path& p) { save_checkpoint(t, p); },
           py::arg("path"))
      .def_property_readonly("num_topics", [](const TrainedModel& t) { return t.config.dims.num_topics; })
      .def_property_readonly("vocabulary", [](const TrainedModel& t) { return t.vocabulary.words(); })
      .def_readonly("label_names", &TrainedModel::label_names)
      .def_readonly("covariate_names", &TrainedModel::covariate_names)
      .def_property_readonly("topics", [](const TrainedModel& t) { return t.params.topic_deviations; },
                             "Topic deviations B (K x V)")
      .def_property_readonly("background", [](const TrainedModel& t) { return t.params.background; })
      .def_property_readonly("covariate_deviations",
                             [](const TrainedModel& t) { return t.params.covariate_deviations; })
      .def_property_readonly("covariate_projection",
                             [](const TrainedModel& t) { return t.params.covariate_projection; })
      .def(
          "theta",
          [](const TrainedModel& t, const Corpus& c, bool sampled, int samples, std::uint64_t seed) {
            ThetaOptions o;
            o.sampled = sampled;
            o.samples = samples;
            o.seed = seed;
            return infer_theta(t, c, o);
          },
          py::arg("corpus"), py::arg("sampled") = false, py::arg("samples") = 20, py::arg("seed") = 0)
      .def(
          "predict",
          [](const TrainedModel& t, const Corpus& c, const std::string& mode) {
            const auto pm = parse_prediction_mode(mode);
            const auto preds = predict_labels(t, c, pm);
            const auto names = prediction_class_names(t, pm);
            std::vector<std::string> labels;
            Matrix scores(static_cast<Eigen::Index>(preds.size()), static_cast<Eigen::Index>(names.size()));
            for (std::size_t i = 0; i < preds.size(); ++i) {
              labels.push_back(names[static_cast<std::size_t>(preds[i].label)]);
              scores.row(static_cast<Eigen::Index>(i)) = preds[i].scores.transpose();
            }
            return py::make_tuple(labels, scores);
          },
          py::arg("corpus"), py::arg("mode") = "joint", "Predicted class names and per-class scores")
      .def(
          "perplexity",
          [](const TrainedModel& t, const Corpus& c, int samples, std::uint64_t seed, bool label_term) {
            PerplexityOptions o;
            o.samples = samples;
            o.seed = seed;
            o.include_label_term = label_term;
            return perplexity(t, c, o).bound;
          },
          py::arg("corpus"), py::arg("samples") = 20, py::arg("seed") = 0, py::arg("include_label_term") = false)
      .def(
          "top_words",
          [](const TrainedModel& t, std::size_t n) {
            std::vector<std::vector<std::string>> out;
            for (const auto& topic : top_words(t, n).topics) out.push_back(topic.words);
            return out;
          },
          py::arg("n") = 10)
      .def(
          "npmi",
          [](const TrainedModel& t, const Corpus& reference, std::size_t n) {
            return npmi(top_words(t, n), build_cooccurrence(reference)).mean;
          },
          py::arg("reference"), py::arg("n") = 10)
      .def("sparsity", [](const TrainedModel& t, double threshold) { return sparsity_fraction(t.params, threshold); },
           py::arg("threshold") = 1e-3);

  m.def(
      "train",
      [](const Corpus& corpus, const Corpus* dev, const py::kwargs& kw) {
        const auto config = config_from_kwargs(kw);
        py::gil_scoped_release release;
        return train(corpus, dev, config).model;
      },
      py::arg("corpus"), py::arg("dev") = nullptr,
      "Train a model. Keyword options mirror the train subcommand: k, alpha, epochs, lr, batch_size, "
      "beta1, beta2, seed, samples, embedding_dim, covariates, labels, interactions, background, "
      "sparsity, embed_covariates.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code = 0;
        {
          py::gil_scoped_release release;
          code = run_cli(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run a metatopic subcommand; returns (exit_code, stdout, stderr).");

  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_ValueError);
}
