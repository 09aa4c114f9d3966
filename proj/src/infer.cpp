#include "metatopic/infer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace metatopic {
namespace {

constexpr std::size_t kChunk = 256;

BatchOptions held_out_options(const Vector* covariate_override = nullptr) {
  BatchOptions options;
  options.encoder_sees_labels = false;
  options.covariate_override = covariate_override;
  return options;
}

// S x K noise for one document, from a stream keyed by its id.
Matrix document_noise(const Document& doc, std::uint64_t seed, int samples, int k) {
  Rng rng = Rng::derive(seed, fnv1a64(doc.id));
  return sample_standard_normal(samples, k, rng);
}

// Sample-major stacking of per-document noise: row s * n + i.
Matrix stacked_noise(const Corpus& corpus, std::span<const std::size_t> chunk,
                     std::uint64_t seed, int samples, int k) {
  const auto n = static_cast<Eigen::Index>(chunk.size());
  Matrix eps(samples * n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Matrix e = document_noise(corpus.documents.at(chunk[i]), seed, samples, k);
    for (int s = 0; s < samples; ++s) eps.row(s * n + i) = e.row(s);
  }
  return eps;
}

template <class F>
void for_each_chunk(std::span<const std::size_t> indices, F&& f) {
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    f(start, indices.subspan(start, std::min(kChunk, indices.size() - start)));
  }
}

std::vector<std::size_t> all_indices(const Corpus& corpus) {
  std::vector<std::size_t> idx(corpus.num_docs());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

std::string value_part(const std::string& name) {
  auto pos = name.find('=');
  return pos == std::string::npos ? name : name.substr(pos + 1);
}

void require_documents(const Corpus& corpus, std::span<const std::size_t> indices) {
  for (auto i : indices) {
    if (corpus.documents.at(i).n_tokens == 0) {
      throw EmptyDocumentError("document " + corpus.documents[i].id + " has no tokens");
    }
  }
}

}  // namespace

PredictionMode parse_prediction_mode(std::string_view name) {
  if (name == "joint") return PredictionMode::kJointLabel;
  if (name == "conditional") return PredictionMode::kConditionalCovariate;
  throw std::invalid_argument("unknown prediction mode '" + std::string(name) + "'");
}

std::string_view to_string(PredictionMode mode) {
  return mode == PredictionMode::kJointLabel ? "joint" : "conditional";
}

Matrix infer_theta(const TrainedModel& model, const Corpus& corpus,
                   std::span<const std::size_t> indices, const ThetaOptions& options,
                   const Vector* covariate_override) {
  model.check_corpus(corpus);
  require_documents(corpus, indices);
  if (options.sampled && options.samples < 1) throw std::invalid_argument("samples must be >= 1");
  const int k = model.config.dims.num_topics;
  Matrix theta(static_cast<Eigen::Index>(indices.size()), k);
  for_each_chunk(indices, [&](std::size_t start, std::span<const std::size_t> chunk) {
    auto batch = make_batch<double>(corpus, chunk, model.config, held_out_options(covariate_override));
    auto post = encode(model.params, model.config, batch, Mode::kEval);
    const auto n = static_cast<Eigen::Index>(chunk.size());
    if (!options.sampled) {
      theta.middleRows(static_cast<Eigen::Index>(start), n) = softmax_rows<double>(post.mu);
      return;
    }
    Matrix acc = Matrix::Zero(n, k);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Matrix eps = document_noise(corpus.documents[chunk[i]], options.seed, options.samples, k);
      const Matrix mu = post.mu.row(i).replicate(options.samples, 1);
      const Matrix lv = post.log_var.row(i).replicate(options.samples, 1);
      acc.row(i) = softmax_rows<double>(reparameterize(mu, lv, eps)).colwise().mean();
    }
    theta.middleRows(static_cast<Eigen::Index>(start), n) = acc;
  });
  return theta;
}

Matrix infer_theta(const TrainedModel& model, const Corpus& corpus, const ThetaOptions& options) {
  const auto idx = all_indices(corpus);
  return infer_theta(model, corpus, idx, options);
}

int argmax_lowest(const Vector& v) {
  if (v.size() == 0) throw std::invalid_argument("argmax of an empty vector");
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

namespace {

std::vector<LabelPrediction> joint_predictions(const TrainedModel& model, const Corpus& corpus,
                                               std::span<const std::size_t> indices) {
  if (!model.config.use_labels()) throw std::invalid_argument("model has no label head");
  const Matrix theta = infer_theta(model, corpus, indices);
  const Matrix probs = predict_label_distribution(model.params, model.config, theta);
  std::vector<LabelPrediction> out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out[i].scores = probs.row(static_cast<Eigen::Index>(i)).transpose();
    out[i].label = argmax_lowest(out[i].scores);
  }
  return out;
}

std::vector<LabelPrediction> conditional_predictions(const TrainedModel& model,
                                                     const Corpus& corpus,
                                                     std::span<const std::size_t> indices) {
  if (!model.config.use_covariates() || !model.config.covariates_categorical) {
    throw std::invalid_argument(
        "conditional prediction needs a model trained with a single categorical covariate");
  }
  const int c = model.config.dims.num_covariates;
  const auto n = static_cast<Eigen::Index>(indices.size());
  Matrix scores(n, c);
  for (int y = 0; y < c; ++y) {
    const Vector e_y = Vector::Unit(c, y);
    const Matrix theta = infer_theta(model, corpus, indices, {}, &e_y);
    for_each_chunk(indices, [&](std::size_t start, std::span<const std::size_t> chunk) {
      const auto m = static_cast<Eigen::Index>(chunk.size());
      const auto off = static_cast<Eigen::Index>(start);
      const Matrix cov = e_y.transpose().replicate(m, 1);
      const Matrix logp = decode(model.params, model.config, theta.middleRows(off, m), cov,
                                 model.anneal_lambda, Mode::kEval);
      auto batch = make_batch<double>(corpus, chunk, model.config, held_out_options(&e_y));
      for (Eigen::Index i = 0; i < m; ++i) {
        double s = 0.0;
        for (SparseRowsT<double>::InnerIterator it(batch.counts, i); it; ++it) {
          s += it.value() * logp(i, it.col());
        }
        scores(off + i, y) = s;
      }
    });
  }
  std::vector<LabelPrediction> out(indices.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    out[i].scores = scores.row(i).transpose();
    out[i].label = argmax_lowest(out[i].scores);
  }
  return out;
}

}  // namespace

LabelPrediction predict_label_joint(const TrainedModel& model, const Corpus& corpus,
                                    std::size_t doc_index) {
  const std::size_t idx[] = {doc_index};
  return joint_predictions(model, corpus, idx).front();
}

LabelPrediction predict_label_conditional(const TrainedModel& model, const Corpus& corpus,
                                          std::size_t doc_index) {
  const std::size_t idx[] = {doc_index};
  return conditional_predictions(model, corpus, idx).front();
}

std::vector<LabelPrediction> predict_labels(const TrainedModel& model, const Corpus& corpus,
                                            PredictionMode mode) {
  const auto idx = all_indices(corpus);
  return mode == PredictionMode::kJointLabel ? joint_predictions(model, corpus, idx)
                                             : conditional_predictions(model, corpus, idx);
}

std::vector<std::string> prediction_class_names(const TrainedModel& model, PredictionMode mode) {
  if (mode == PredictionMode::kJointLabel) return model.label_names;
  std::vector<std::string> out;
  for (const auto& name : model.covariate_names) out.push_back(value_part(name));
  return out;
}

std::vector<std::optional<int>> gold_classes(const TrainedModel& model, const Corpus& corpus,
                                             PredictionMode mode) {
  std::vector<std::optional<int>> gold(corpus.num_docs());
  const auto classes = prediction_class_names(model, mode);
  auto class_of = [&](const std::string& name) -> std::optional<int> {
    auto it = std::find(classes.begin(), classes.end(), name);
    if (it == classes.end()) return std::nullopt;
    return static_cast<int>(it - classes.begin());
  };
  const bool same_covariates =
      mode == PredictionMode::kConditionalCovariate && corpus.covariate_names == model.covariate_names;
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) {
    const auto& doc = corpus.documents[d];
    if (same_covariates && !doc.covariates.empty()) {
      auto it = std::max_element(doc.covariates.begin(), doc.covariates.end());
      if (*it == 1.0 && std::accumulate(doc.covariates.begin(), doc.covariates.end(), 0.0) == 1.0) {
        gold[d] = static_cast<int>(it - doc.covariates.begin());
      }
    } else if (doc.label) {
      gold[d] = class_of(corpus.label_names.at(*doc.label));
    }
  }
  return gold;
}

Vector document_bounds(const TrainedModel& model, const Corpus& corpus,
                       const PerplexityOptions& options) {
  model.check_corpus(corpus);
  if (corpus.num_docs() == 0) throw std::invalid_argument("cannot score an empty corpus");
  if (options.samples < 1) throw std::invalid_argument("samples must be >= 1");
  const auto idx = all_indices(corpus);
  require_documents(corpus, idx);
  const int k = model.config.dims.num_topics;
  Vector bounds(static_cast<Eigen::Index>(idx.size()));
  ForwardOptions fo;
  fo.mode = Mode::kEval;
  fo.anneal_lambda = model.anneal_lambda;
  fo.include_label_term = options.include_label_term;
  for_each_chunk(idx, [&](std::size_t start, std::span<const std::size_t> chunk) {
    auto batch = make_batch<double>(corpus, chunk, model.config, held_out_options());
    const Matrix eps = stacked_noise(corpus, chunk, options.seed, options.samples, k);
    auto terms = elbo_forward<double>(model.params, model.config, batch, eps, fo);
    bounds.segment(static_cast<Eigen::Index>(start), terms.elbo.size()) = terms.elbo;
  });
  return bounds;
}

PerplexityReport perplexity(const TrainedModel& model, const Corpus& corpus,
                            const PerplexityOptions& options) {
  const Vector bounds = document_bounds(model, corpus, options);
  PerplexityReport r;
  r.total_elbo = bounds.sum();
  r.total_tokens = corpus.total_tokens();
  r.docs_scored = corpus.num_docs();
  r.samples = options.samples;
  r.include_label_term = options.include_label_term;
  r.bound = std::exp(-r.total_elbo / static_cast<double>(r.total_tokens));
  return r;
}

void write_predictions_tsv(const std::filesystem::path& path, const Corpus& corpus,
                           const std::vector<LabelPrediction>& predictions,
                           const std::vector<std::string>& class_names) {
  if (predictions.size() != corpus.num_docs()) {
    throw std::invalid_argument("one prediction per document is required");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id\tpredicted_label";
  for (const auto& name : class_names) out << "\tscore_" << name;
  out << '\n';
  for (std::size_t d = 0; d < predictions.size(); ++d) {
    const auto& p = predictions[d];
    out << corpus.documents[d].id << '\t' << class_names.at(p.label);
    for (Eigen::Index j = 0; j < p.scores.size(); ++j) out << '\t' << format_real(p.scores(j));
    out << '\n';
  }
}

void write_theta_tsv(const std::filesystem::path& path, const Corpus& corpus,
                     const Matrix& theta) {
  if (theta.rows() != static_cast<Eigen::Index>(corpus.num_docs())) {
    throw std::invalid_argument("one theta row per document is required");
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "doc_id";
  for (Eigen::Index k = 0; k < theta.cols(); ++k) out << "\ttheta_" << k + 1;
  out << '\n';
  for (Eigen::Index d = 0; d < theta.rows(); ++d) {
    out << corpus.documents[d].id;
    for (Eigen::Index k = 0; k < theta.cols(); ++k) out << '\t' << format_real(theta(d, k));
    out << '\n';
  }
}

}  // namespace metatopic
