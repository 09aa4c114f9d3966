#include "metatopic/train.hpp"

#include "metatopic/eval.hpp"
#include "metatopic/infer.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace metatopic {

SparsityTargets SparsityTargets::parse(const std::string& text) {
  SparsityTargets t{false, false, false};
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "topics") {
      t.topics = true;
    } else if (item == "covariates") {
      t.covariates = true;
    } else if (item == "interactions") {
      t.interactions = true;
    } else {
      throw std::invalid_argument("unknown sparsity target '" + item + "'");
    }
  }
  return t;
}

void TrainConfig::validate() const {
  if (num_topics < 2) throw std::invalid_argument("need at least 2 topics");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw std::invalid_argument("Adam betas must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("Adam epsilon must be positive");
  if (train_samples < 1 || dev_samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (!(tau_floor > 0.0)) throw std::invalid_argument("tau floor must be positive");
  if (embedding_dim < 1) throw std::invalid_argument("embedding dimension must be positive");
  if (use_interactions && !use_covariates) {
    throw std::invalid_argument("interactions require covariates");
  }
  if (covariate_embedding_dim > 0 && !use_covariates) {
    throw std::invalid_argument("covariate embedding requires covariates");
  }
  if (covariate_embedding_dim < 0 || label_hidden < 0) {
    throw std::invalid_argument("negative dimension");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"num_topics", num_topics},
          {"alpha", alpha},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"learning_rate", learning_rate},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"adam_epsilon", adam_epsilon},
          {"train_samples", train_samples},
          {"seed", seed},
          {"sparsity_enabled", sparsity_enabled},
          {"sparsity_targets",
           {sparsity_targets.topics, sparsity_targets.covariates, sparsity_targets.interactions}},
          {"tau_floor", tau_floor},
          {"embedding_dim", embedding_dim},
          {"init_scale", init_scale},
          {"word_vectors", word_vector_path ? word_vector_path->filename().string() : ""},
          {"freeze_word_vectors", freeze_word_vectors},
          {"freeze_background", freeze_background},
          {"precision", precision == Precision::kFloat32 ? "f32" : "f64"}};
}

ModelConfig make_model_config(const TrainConfig& config, const Corpus& corpus) {
  config.validate();
  ModelConfig mc;
  mc.dims.vocab_size = static_cast<int>(corpus.vocab_size());
  mc.dims.num_topics = config.num_topics;
  mc.dims.embedding_dim = config.embedding_dim;
  if (config.use_covariates) {
    if (corpus.num_covariates() == 0) throw std::invalid_argument("corpus has no covariates");
    mc.dims.num_covariates = static_cast<int>(corpus.num_covariates());
    mc.dims.covariate_embedding_dim = config.covariate_embedding_dim;
    mc.covariates_categorical = corpus.covariates_categorical();
  }
  if (config.use_labels) {
    if (corpus.num_labels() < 2) throw std::invalid_argument("corpus has fewer than 2 labels");
    mc.dims.num_labels = static_cast<int>(corpus.num_labels());
    mc.dims.label_hidden = config.label_hidden;
  }
  mc.alpha = config.alpha;
  mc.use_background = config.use_background;
  mc.use_interactions = config.use_interactions;
  mc.freeze_word_vectors = config.word_vector_path.has_value() && config.freeze_word_vectors;
  mc.freeze_background = config.freeze_background;
  mc.validate();
  return mc;
}

WordVectors load_word_vectors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read word vectors " + path.string());
  WordVectors wv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    std::string tok;
    while (fields >> tok) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": malformed number '" + tok + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 && word.find_first_not_of("0123456789") == std::string::npos) {
      continue;  // "<count> <dim>" header
    }
    if (values.empty()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": no values");
    }
    if (wv.dim == 0) wv.dim = static_cast<int>(values.size());
    if (static_cast<int>(values.size()) != wv.dim) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": inconsistent vector dimension");
    }
    wv.vectors.emplace(std::move(word), std::move(values));
  }
  return wv;
}

Matrix background_log_frequency(const Corpus& corpus) {
  Vector counts = Vector::Zero(static_cast<Eigen::Index>(corpus.vocab_size()));
  for (const auto& doc : corpus.documents) {
    for (const auto& wc : doc.counts) counts(wc.word) += wc.count;
  }
  const double total = counts.sum();
  if (!(total > 0.0)) throw std::invalid_argument("corpus has no tokens");
  Matrix d(1, counts.size());
  for (Eigen::Index j = 0; j < counts.size(); ++j) {
    d(0, j) = std::log((counts(j) > 0.0 ? counts(j) : 0.5) / total);
  }
  return d;
}

ModelParams<double> init_params(const ModelConfig& config, const Corpus& corpus, Rng& rng,
                                const WordVectors* word_vectors, double init_scale) {
  auto p = ModelParams<double>::zeros(config);
  auto fill = [&](Matrix& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = init_scale * rng.normal();
  };
  // Core tensors first so optional components do not shift their draws.
  fill(p.word_embedding);
  fill(p.mu_weight);
  fill(p.log_var_weight);
  fill(p.topic_deviations);
  fill(p.covariate_embedding);
  fill(p.covariate_projection);
  fill(p.covariate_deviations);
  fill(p.interaction_deviations);
  fill(p.label_embedding);
  fill(p.label_hidden_weight);
  fill(p.label_output_weight);
  if (config.use_background) p.background = background_log_frequency(corpus);
  if (word_vectors) {
    if (word_vectors->dim != config.dims.embedding_dim) {
      throw std::invalid_argument("word vector dimension " + std::to_string(word_vectors->dim) +
                                  " does not match the embedding dimension " +
                                  std::to_string(config.dims.embedding_dim));
    }
    for (std::size_t j = 0; j < corpus.vocab_size(); ++j) {
      auto it = word_vectors->vectors.find(corpus.vocabulary.word(static_cast<int>(j)));
      if (it == word_vectors->vectors.end()) continue;
      for (int e = 0; e < word_vectors->dim; ++e) {
        p.word_embedding(static_cast<Eigen::Index>(j), e) = it->second[static_cast<std::size_t>(e)];
      }
    }
  }
  return p;
}

template <class T>
MatrixT<T> sparsity_e_step(const MatrixT<T>& b, double tau_floor) {
  if (!(tau_floor > 0.0)) throw std::invalid_argument("tau floor must be positive");
  return (b.array().square() + static_cast<T>(tau_floor)).inverse().matrix();
}

template <class T>
SparsityWeights<T> sparsity_e_step(const ModelParams<T>& params, const SparsityTargets& targets,
                                   double tau_floor) {
  SparsityWeights<T> w;
  if (targets.topics) w.topics = sparsity_e_step<T>(params.topic_deviations, tau_floor);
  if (targets.covariates) w.covariates = sparsity_e_step<T>(params.covariate_deviations, tau_floor);
  if (targets.interactions) {
    w.interactions = sparsity_e_step<T>(params.interaction_deviations, tau_floor);
  }
  return w;
}

template <class T>
TrainState<T> TrainState<T>::fresh(const ModelParams<T>& params) {
  TrainState s;
  s.first_moment = ModelParams<T>::zeros_like(params);
  s.second_moment = ModelParams<T>::zeros_like(params);
  return s;
}

template <class T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, TrainState<T>& state,
               const ModelConfig& config, const AdamSettings& settings, double penalty_scale) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const T lr = static_cast<T>(settings.learning_rate);
  const T b1 = static_cast<T>(settings.beta1);
  const T b2 = static_cast<T>(settings.beta2);
  const T eps = static_cast<T>(settings.epsilon);
  const T c1 = static_cast<T>(1.0 - std::pow(settings.beta1, t));
  const T c2 = static_cast<T>(1.0 - std::pow(settings.beta2, t));
  auto penalty_for = [&](std::string_view name) -> const MatrixT<T>* {
    if (!state.sparsity || penalty_scale == 0.0) return nullptr;
    const MatrixT<T>* w = nullptr;
    if (name == "topic_deviations") w = &state.sparsity->topics;
    if (name == "covariate_deviations") w = &state.sparsity->covariates;
    if (name == "interaction_deviations") w = &state.sparsity->interactions;
    return w && w->size() > 0 ? w : nullptr;
  };
  for_each_tensor(
      [&](const TensorInfo& info, MatrixT<T>& p, const MatrixT<T>& g_raw, MatrixT<T>& m,
          MatrixT<T>& v) {
        if (!is_trainable(info.name, p.size(), info.kind, config)) return;
        MatrixT<T> g = g_raw;
        if (const auto* w = penalty_for(info.name)) {
          g.array() += static_cast<T>(penalty_scale) * w->array() * p.array();
        }
        if (!g.allFinite()) {
          throw NumericError("non-finite gradient for " + std::string(info.name));
        }
        m = b1 * m + (T(1) - b1) * g;
        v.array() = b2 * v.array() + (T(1) - b2) * g.array().square();
        p.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      },
      params, grads, state.first_moment, state.second_moment);
}

double anneal_lambda(int epoch, int epochs) {
  if (epochs < 1) throw std::invalid_argument("epochs must be at least 1");
  if (epochs == 1) return 0.0;
  return 1.0 - static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

std::vector<std::vector<std::size_t>> make_minibatches(std::size_t num_docs, int batch_size,
                                                       Rng& rng) {
  if (num_docs < 2) throw std::invalid_argument("training needs at least 2 documents");
  if (batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  std::vector<std::size_t> order(num_docs);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle(std::span<std::size_t>(order), rng);
  std::vector<std::vector<std::size_t>> batches;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t start = 0; start < num_docs; start += bs) {
    const auto end = std::min(num_docs, start + bs);
    if (end - start == 1 && !batches.empty()) {
      batches.back().push_back(order[start]);
    } else {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

namespace {

std::optional<double> dev_accuracy(const TrainedModel& model, const Corpus& dev) {
  if (!model.config.use_labels() || !dev.has_labels()) return std::nullopt;
  const auto predictions = predict_labels(model, dev, PredictionMode::kJointLabel);
  const auto gold = gold_classes(model, dev, PredictionMode::kJointLabel);
  std::vector<int> p, g;
  for (std::size_t d = 0; d < gold.size(); ++d) {
    if (!gold[d]) continue;
    p.push_back(predictions[d].label);
    g.push_back(*gold[d]);
  }
  if (g.empty()) return std::nullopt;
  return accuracy(p, g);
}

template <class T>
TrainResult train_impl(const Corpus& corpus, const Corpus* dev, const TrainConfig& config,
                       const EpochCallback& on_epoch) {
  const ModelConfig mc = make_model_config(config, corpus);
  std::optional<WordVectors> vectors;
  if (config.word_vector_path) vectors = load_word_vectors(*config.word_vector_path);

  Rng init_rng = Rng::derive(config.seed, 0);
  Rng shuffle_rng = Rng::derive(config.seed, 1);
  Rng noise_rng = Rng::derive(config.seed, 2);

  ModelParams<T> params =
      init_params(mc, corpus, init_rng, vectors ? &*vectors : nullptr, config.init_scale)
          .template cast<T>();
  auto state = TrainState<T>::fresh(params);
  const AdamSettings adam{config.learning_rate, config.adam_beta1, config.adam_beta2,
                          config.adam_epsilon};
  const double docs = static_cast<double>(corpus.num_docs());
  // The loss is a per-document mean, so the penalty is spread the same way.
  const double penalty_scale = config.sparsity_enabled ? 1.0 / docs : 0.0;
  if (config.sparsity_enabled) {
    state.sparsity = sparsity_e_step(params, config.sparsity_targets, config.tau_floor);
  }

  TrainResult result;
  auto snapshot = [&](double lambda) {
    TrainedModel m;
    m.config = mc;
    m.params = params.template cast<double>();
    m.vocabulary = corpus.vocabulary;
    m.label_names = mc.use_labels() ? corpus.label_names : std::vector<std::string>{};
    m.covariate_names = mc.use_covariates() ? corpus.covariate_names : std::vector<std::string>{};
    m.anneal_lambda = lambda;
    m.seed = config.seed;
    m.train_config = config.to_json();
    return m;
  };
  const bool select = config.select_by_dev_accuracy && mc.use_labels() && dev && dev->has_labels();
  std::optional<double> best_accuracy;

  const int k = mc.dims.num_topics;
  const int s = config.train_samples;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lambda = anneal_lambda(epoch, config.epochs);
    state.anneal_lambda = lambda;
    state.epoch = epoch;
    ForwardOptions fo{Mode::kTrain, lambda, true};
    double elbo_sum = 0.0;
    const auto batches = make_minibatches(corpus.num_docs(), config.batch_size, shuffle_rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto batch = make_batch<T>(corpus, batches[b], mc);
      const auto n = static_cast<Eigen::Index>(batches[b].size());
      const MatrixT<T> eps = sample_standard_normal(s * n, k, noise_rng).template cast<T>();
      ForwardCache<T> cache;
      const auto terms = elbo_forward<T>(params, mc, batch, eps, fo, &cache);
      const T loss = batch_loss(terms);
      if (!std::isfinite(static_cast<double>(loss))) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      auto grads = ModelParams<T>::zeros_like(params);
      elbo_backward<T>(params, mc, batch, cache, grads);
      update_running_stats<T>(params, cache);
      adam_step<T>(params, grads, state, mc, adam, penalty_scale);
      elbo_sum += static_cast<double>(terms.elbo.sum());
    }
    if (config.sparsity_enabled) {
      state.sparsity = sparsity_e_step(params, config.sparsity_targets, config.tau_floor);
    }

    TrainedModel current = snapshot(lambda);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_elbo = elbo_sum / docs;
    rec.lambda = lambda;
    rec.sparsity_fraction = sparsity_fraction(current.params, config.sparsity_threshold);
    if (dev && dev->num_docs() > 0) {
      PerplexityOptions po;
      po.samples = config.dev_samples;
      po.seed = config.seed;
      rec.dev_elbo = document_bounds(current, *dev, po).mean();
      rec.dev_accuracy = dev_accuracy(current, *dev);
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (select && rec.dev_accuracy && (!best_accuracy || *rec.dev_accuracy > *best_accuracy)) {
      best_accuracy = rec.dev_accuracy;
      result.model = std::move(current);
      result.selected_epoch = epoch;
    } else if (!select || (!best_accuracy && epoch + 1 == config.epochs)) {
      result.model = std::move(current);
      result.selected_epoch = epoch;
    }
  }
  result.steps = state.step;
  return result;
}

}  // namespace

TrainResult train(const Corpus& train_corpus, const Corpus* dev_corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_corpus.num_docs() < 2) throw std::invalid_argument("training needs at least 2 documents");
  if (dev_corpus && !(dev_corpus->vocabulary == train_corpus.vocabulary)) {
    throw std::invalid_argument("dev corpus vocabulary differs from training");
  }
  return config.precision == Precision::kFloat32
             ? train_impl<float>(train_corpus, dev_corpus, config, on_epoch)
             : train_impl<double>(train_corpus, dev_corpus, config, on_epoch);
}

void write_history_tsv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string("NA"); };
  out << "epoch\ttrain_elbo\tdev_elbo\tdev_accuracy\tsparsity_fraction\tlambda\n";
  for (const auto& r : history) {
    out << r.epoch << '\t' << format_real(r.train_elbo) << '\t' << opt(r.dev_elbo) << '\t'
        << opt(r.dev_accuracy) << '\t' << format_real(r.sparsity_fraction) << '\t'
        << format_real(r.lambda) << '\n';
  }
}

#define METATOPIC_INSTANTIATE_TRAIN(T)                                                          \
  template MatrixT<T> sparsity_e_step<T>(const MatrixT<T>&, double);                            \
  template SparsityWeights<T> sparsity_e_step<T>(const ModelParams<T>&, const SparsityTargets&, \
                                                 double);                                       \
  template struct TrainState<T>;                                                                \
  template void adam_step<T>(ModelParams<T>&, const ModelParams<T>&, TrainState<T>&,            \
                             const ModelConfig&, const AdamSettings&, double);

METATOPIC_INSTANTIATE_TRAIN(float)
METATOPIC_INSTANTIATE_TRAIN(double)

}  // namespace metatopic
