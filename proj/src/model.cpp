#include "metatopic/model.hpp"

#include <cmath>
#include <stdexcept>

namespace metatopic {

PriorSpec prior_params(double alpha, int num_topics) {
  if (num_topics < 2) throw std::invalid_argument("the prior needs at least 2 topics");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  PriorSpec p;
  p.alpha = alpha;
  p.mu0 = Vector::Zero(num_topics);
  const double k = static_cast<double>(num_topics);
  p.sigma0_sq = Vector::Constant(num_topics, (k - 1.0) / (alpha * k));
  return p;
}

void ModelConfig::validate() const {
  if (dims.vocab_size < 1) throw std::invalid_argument("vocabulary size must be positive");
  if (dims.num_topics < 1) throw std::invalid_argument("need at least 1 topic");
  if (dims.embedding_dim < 1) throw std::invalid_argument("embedding dimension must be positive");
  if (dims.num_covariates < 0 || dims.num_labels < 0 || dims.covariate_embedding_dim < 0 ||
      dims.label_hidden < 0) {
    throw std::invalid_argument("negative model dimension");
  }
  if (use_interactions && !use_covariates()) {
    throw std::invalid_argument("interactions require covariates");
  }
  if (projects_covariates() && !use_covariates()) {
    throw std::invalid_argument("covariate embedding requires covariates");
  }
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
}

template <class T>
ModelParams<T> ModelParams<T>::zeros(const ModelConfig& config) {
  config.validate();
  const auto& d = config.dims;
  const int v = d.vocab_size;
  const int k = d.num_topics;
  const int e = d.embedding_dim;
  const int c = d.num_covariates;
  const int cd = d.decoder_covariate_dim();
  const int l = d.num_labels;
  const int h = l > 0 ? d.label_hidden_dim() : 0;
  ModelParams p;
  p.word_embedding = MatrixT<T>::Zero(v, e);
  p.covariate_embedding = MatrixT<T>::Zero(c, e);
  p.label_embedding = MatrixT<T>::Zero(l, e);
  p.mu_weight = MatrixT<T>::Zero(e, k);
  p.mu_bias = MatrixT<T>::Zero(1, k);
  p.log_var_weight = MatrixT<T>::Zero(e, k);
  p.log_var_bias = MatrixT<T>::Zero(1, k);
  p.mu_norm = BatchNormState<T>::identity(k);
  p.log_var_norm = BatchNormState<T>::identity(k);
  p.background = MatrixT<T>::Zero(1, v);
  p.topic_deviations = MatrixT<T>::Zero(k, v);
  p.covariate_projection =
      config.projects_covariates() ? MatrixT<T>::Zero(c, cd) : MatrixT<T>::Zero(0, 0);
  p.covariate_deviations = MatrixT<T>::Zero(cd, v);
  p.interaction_deviations = MatrixT<T>::Zero(config.use_interactions ? k * cd : 0, v);
  p.eta_norm = BatchNormState<T>::identity(v);
  p.label_hidden_weight = MatrixT<T>::Zero(l > 0 ? k : 0, h);
  p.label_hidden_bias = MatrixT<T>::Zero(l > 0 ? 1 : 0, h);
  p.label_output_weight = MatrixT<T>::Zero(h, l);
  p.label_output_bias = MatrixT<T>::Zero(l > 0 ? 1 : 0, l);
  return p;
}

template <class T>
ModelParams<T> ModelParams<T>::zeros_like(const ModelParams& shape) {
  ModelParams out = shape;
  for_each_tensor([](const TensorInfo&, MatrixT<T>& m) { m.setZero(); }, out);
  return out;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  for_each_tensor([](const TensorInfo&, const MatrixT<T>& src,
                     MatrixT<U>& dst) { dst = src.template cast<U>(); },
                  *this, out);
  out.mu_norm.momentum = mu_norm.momentum;
  out.mu_norm.epsilon = mu_norm.epsilon;
  out.log_var_norm.momentum = log_var_norm.momentum;
  out.log_var_norm.epsilon = log_var_norm.epsilon;
  out.eta_norm.momentum = eta_norm.momentum;
  out.eta_norm.epsilon = eta_norm.epsilon;
  return out;
}

bool is_trainable(std::string_view name, Eigen::Index size, TensorKind kind,
                  const ModelConfig& config) {
  if (kind != TensorKind::kParameter || size == 0) return false;
  if (name == "word_embedding" && config.freeze_word_vectors) return false;
  if (name == "background" && (!config.use_background || config.freeze_background)) return false;
  return true;
}

std::vector<std::string> trainable_tensor_names(const ModelConfig& config) {
  auto shape = ModelParams<double>::zeros(config);
  std::vector<std::string> names;
  for_each_tensor(
      [&](const TensorInfo& info, const Matrix& m) {
        if (is_trainable(info.name, m.size(), info.kind, config)) names.emplace_back(info.name);
      },
      shape);
  return names;
}

// ---- batches --------------------------------------------------------------

template <class T>
Batch<T> make_batch(const Corpus& corpus, std::span<const std::size_t> indices,
                    const ModelConfig& config, const BatchOptions& options) {
  const auto n = static_cast<Eigen::Index>(indices.size());
  const auto v = config.dims.vocab_size;
  if (static_cast<int>(corpus.vocab_size()) != v) {
    throw ShapeError("corpus vocabulary size does not match the model");
  }
  const int c = config.dims.num_covariates;
  const int l = config.dims.num_labels;
  // A corpus without metadata is allowed: covariates become zero rows and
  // labels are treated as unobserved.
  const bool corpus_covariates = corpus.num_covariates() > 0;
  const bool corpus_labels = corpus.num_labels() > 0;
  if (c > 0 && corpus_covariates && static_cast<int>(corpus.num_covariates()) != c) {
    throw ShapeError("corpus covariate width does not match the model");
  }
  if (l > 0 && corpus_labels && static_cast<int>(corpus.num_labels()) != l) {
    throw ShapeError("corpus label count does not match the model");
  }
  if (options.covariate_override && options.covariate_override->size() != c) {
    throw ShapeError("covariate override width does not match the model");
  }
  Batch<T> b;
  std::vector<Eigen::Triplet<T>> triplets;
  b.doc_lengths = VectorT<T>::Zero(n);
  b.covariates = MatrixT<T>::Zero(n, c);
  b.label_input = MatrixT<T>::Zero(n, l);
  b.label_target = MatrixT<T>::Zero(n, l);
  b.label_mask = VectorT<T>::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& doc = corpus.documents.at(indices[i]);
    for (const auto& wc : doc.counts) {
      triplets.emplace_back(static_cast<int>(i), wc.word, static_cast<T>(wc.count));
    }
    b.doc_lengths(i) = static_cast<T>(doc.n_tokens);
    if (c > 0 && (corpus_covariates || options.covariate_override)) {
      for (int j = 0; j < c; ++j) {
        b.covariates(i, j) = static_cast<T>(options.covariate_override
                                                ? (*options.covariate_override)(j)
                                                : doc.covariates[j]);
      }
    }
    if (l > 0 && corpus_labels && doc.label) {
      b.label_target(i, *doc.label) = T(1);
      b.label_mask(i) = T(1);
      if (options.encoder_sees_labels) b.label_input(i, *doc.label) = T(1);
    }
  }
  b.counts.resize(n, v);
  b.counts.setFromTriplets(triplets.begin(), triplets.end());
  b.counts.makeCompressed();
  return b;
}

// ---- forward --------------------------------------------------------------

namespace {

template <class T>
void encoder_forward(const ModelParams<T>& p, const ModelConfig& config, const Batch<T>& batch,
                     Mode mode, ForwardCache<T>& c) {
  require_shape("encoder counts", batch.counts.rows(), batch.counts.cols(), batch.size(),
                config.dims.vocab_size);
  c.hidden_pre = batch.counts * p.word_embedding;
  if (config.use_covariates()) c.hidden_pre.noalias() += batch.covariates * p.covariate_embedding;
  if (config.use_labels()) c.hidden_pre.noalias() += batch.label_input * p.label_embedding;
  c.hidden = softplus<T>(c.hidden_pre);
  MatrixT<T> mu_pre = (c.hidden * p.mu_weight).rowwise() + p.mu_bias.row(0);
  MatrixT<T> lv_pre = (c.hidden * p.log_var_weight).rowwise() + p.log_var_bias.row(0);
  c.mu = batchnorm_forward<T>(mu_pre, p.mu_norm, mode, &c.mu_bn);
  c.log_var = batchnorm_forward<T>(lv_pre, p.log_var_norm, mode, &c.log_var_bn);
}

template <class T>
MatrixT<T> decoder_covariates(const ModelParams<T>& p, const ModelConfig& config,
                              const MatrixT<T>& covariates) {
  if (!config.use_covariates()) return MatrixT<T>::Zero(covariates.rows(), 0);
  if (config.projects_covariates()) return covariates * p.covariate_projection;
  return covariates;
}

template <class T>
MatrixT<T> repeat_rows(const MatrixT<T>& m, Eigen::Index times) {
  MatrixT<T> out(m.rows() * times, m.cols());
  for (Eigen::Index s = 0; s < times; ++s) out.middleRows(s * m.rows(), m.rows()) = m;
  return out;
}

template <class T>
MatrixT<T> interaction_features(const MatrixT<T>& theta, const MatrixT<T>& cov) {
  const Eigen::Index k = theta.cols();
  const Eigen::Index cd = cov.cols();
  MatrixT<T> out(theta.rows(), k * cd);
  for (Eigen::Index r = 0; r < theta.rows(); ++r)
    for (Eigen::Index t = 0; t < k; ++t)
      for (Eigen::Index j = 0; j < cd; ++j) out(r, t * cd + j) = theta(r, t) * cov(r, j);
  return out;
}

// theta: M x K, cov_rep: M x C'. Returns log-probabilities M x V.
template <class T>
MatrixT<T> decoder_forward(const ModelParams<T>& p, const ModelConfig& config,
                           const MatrixT<T>& theta, const MatrixT<T>& cov_rep, T lambda,
                           Mode mode, ForwardCache<T>* cache) {
  MatrixT<T> eta = theta * p.topic_deviations;
  if (config.use_background) eta.rowwise() += p.background.row(0);
  if (config.use_covariates()) {
    eta.noalias() += cov_rep * p.covariate_deviations;
    if (config.use_interactions) {
      MatrixT<T> inter = interaction_features<T>(theta, cov_rep);
      eta.noalias() += inter * p.interaction_deviations;
      if (cache) cache->interactions = std::move(inter);
    }
  }
  const bool use_bn = lambda > T(0);
  if (cache) cache->eta_bn_used = use_bn;
  if (use_bn) {
    MatrixT<T> normed =
        batchnorm_forward<T>(eta, p.eta_norm, mode, cache ? &cache->eta_bn : nullptr);
    eta = lambda * normed + (T(1) - lambda) * eta;
  }
  return log_softmax_rows<T>(eta);
}

template <class T>
MatrixT<T> label_forward(const ModelParams<T>& p, const MatrixT<T>& theta, MatrixT<T>* pre_out,
                         MatrixT<T>* hidden_out) {
  MatrixT<T> pre = (theta * p.label_hidden_weight).rowwise() + p.label_hidden_bias.row(0);
  MatrixT<T> hidden = softplus<T>(pre);
  MatrixT<T> out = (hidden * p.label_output_weight).rowwise() + p.label_output_bias.row(0);
  if (pre_out) *pre_out = std::move(pre);
  if (hidden_out) *hidden_out = std::move(hidden);
  return log_softmax_rows<T>(out);
}

}  // namespace

template <class T>
ElboTerms<T> elbo_forward(const ModelParams<T>& params, const ModelConfig& config,
                          const Batch<T>& batch, const MatrixT<T>& eps,
                          const ForwardOptions& options, ForwardCache<T>* cache_out) {
  using std::log;
  ForwardCache<T> local;
  ForwardCache<T>& c = cache_out ? *cache_out : local;
  const Eigen::Index n = batch.size();
  const Eigen::Index k = config.dims.num_topics;
  if (n == 0) throw std::invalid_argument("empty batch");
  if (eps.cols() != k || eps.rows() == 0 || eps.rows() % n != 0) {
    throw ShapeError("noise must be (S * N) x K with S >= 1");
  }
  if (!(options.anneal_lambda >= 0.0 && options.anneal_lambda <= 1.0)) {
    throw std::invalid_argument("anneal lambda must lie in [0, 1]");
  }
  const Eigen::Index s_count = eps.rows() / n;
  c.docs = n;
  c.samples = s_count;
  c.options = options;

  encoder_forward(params, config, batch, options.mode, c);
  c.sigma = (c.log_var.array() * T(0.5)).exp();
  c.eps = eps;
  MatrixT<T> r(s_count * n, k);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    r.middleRows(s * n, n) = c.mu.array() + c.sigma.array() * eps.middleRows(s * n, n).array();
  }
  c.theta = softmax_rows<T>(r);
  c.cov_decoder = decoder_covariates(params, config, batch.covariates);
  MatrixT<T> cov_rep = repeat_rows<T>(c.cov_decoder, s_count);
  c.log_probs = decoder_forward<T>(params, config, c.theta, cov_rep,
                                   static_cast<T>(options.anneal_lambda), options.mode, &c);

  ElboTerms<T> terms;
  const T inv_s = T(1) / static_cast<T>(s_count);
  terms.reconstruction = VectorT<T>::Zero(n);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      T acc = T(0);
      for (typename SparseRowsT<T>::InnerIterator it(batch.counts, i); it; ++it) {
        acc += it.value() * c.log_probs(s * n + i, it.col());
      }
      terms.reconstruction(i) += acc * inv_s;
    }
  }

  terms.label = VectorT<T>::Zero(n);
  const bool label_term = config.use_labels() && options.include_label_term;
  if (label_term) {
    c.label_log_probs = label_forward<T>(params, c.theta, &c.label_pre, &c.label_hidden);
    for (Eigen::Index s = 0; s < s_count; ++s) {
      for (Eigen::Index i = 0; i < n; ++i) {
        terms.label(i) += batch.label_mask(i) * inv_s *
                          batch.label_target.row(i).dot(c.label_log_probs.row(s * n + i));
      }
    }
  }

  const PriorSpec prior = config.prior();
  terms.kl = VectorT<T>::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    T acc = T(0);
    for (Eigen::Index t = 0; t < k; ++t) {
      const T s0 = static_cast<T>(prior.sigma0_sq(t));
      const T diff = c.mu(i, t) - static_cast<T>(prior.mu0(t));
      acc += std::exp(c.log_var(i, t)) / s0 + diff * diff / s0 - T(1) + log(s0) - c.log_var(i, t);
    }
    terms.kl(i) = T(0.5) * acc;
  }
  terms.elbo = terms.reconstruction + terms.label - terms.kl;
  return terms;
}

template <class T>
void elbo_backward(const ModelParams<T>& p, const ModelConfig& config, const Batch<T>& batch,
                   const ForwardCache<T>& c, ModelParams<T>& g) {
  const Eigen::Index n = c.docs;
  const Eigen::Index s_count = c.samples;
  const Eigen::Index k = config.dims.num_topics;
  const T lambda = static_cast<T>(c.options.anneal_lambda);
  const T w = T(1) / static_cast<T>(n * s_count);  // weight of one sampled row

  // d loss / d eta for log-softmax with count targets: w (n_i p - x_i).
  MatrixT<T> d_eta = c.log_probs.array().exp();
  for (Eigen::Index s = 0; s < s_count; ++s) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index row = s * n + i;
      d_eta.row(row) *= w * batch.doc_lengths(i);
      for (typename SparseRowsT<T>::InnerIterator it(batch.counts, i); it; ++it) {
        d_eta(row, it.col()) -= w * it.value();
      }
    }
  }
  MatrixT<T> d_eta_raw;
  if (c.eta_bn_used) {
    MatrixT<T> scaled = lambda * d_eta;
    d_eta_raw = batchnorm_backward<T>(scaled, p.eta_norm, c.eta_bn, g.eta_norm.gamma,
                                      g.eta_norm.beta);
    d_eta_raw += (T(1) - lambda) * d_eta;
  } else {
    d_eta_raw = std::move(d_eta);
  }

  g.background += d_eta_raw.colwise().sum();
  g.topic_deviations.noalias() += c.theta.transpose() * d_eta_raw;
  MatrixT<T> d_theta = d_eta_raw * p.topic_deviations.transpose();

  if (config.use_covariates()) {
    const Eigen::Index cd = c.cov_decoder.cols();
    MatrixT<T> cov_rep = repeat_rows<T>(c.cov_decoder, s_count);
    g.covariate_deviations.noalias() += cov_rep.transpose() * d_eta_raw;
    MatrixT<T> d_cov_rep = d_eta_raw * p.covariate_deviations.transpose();
    if (config.use_interactions) {
      g.interaction_deviations.noalias() += c.interactions.transpose() * d_eta_raw;
      MatrixT<T> d_inter = d_eta_raw * p.interaction_deviations.transpose();
      for (Eigen::Index r = 0; r < d_inter.rows(); ++r) {
        for (Eigen::Index t = 0; t < k; ++t) {
          for (Eigen::Index j = 0; j < cd; ++j) {
            const T dv = d_inter(r, t * cd + j);
            d_theta(r, t) += dv * cov_rep(r, j);
            d_cov_rep(r, j) += dv * c.theta(r, t);
          }
        }
      }
    }
    if (config.projects_covariates()) {
      MatrixT<T> d_cov = MatrixT<T>::Zero(n, cd);
      for (Eigen::Index s = 0; s < s_count; ++s) d_cov += d_cov_rep.middleRows(s * n, n);
      g.covariate_projection.noalias() += batch.covariates.transpose() * d_cov;
    }
  }

  if (config.use_labels() && c.options.include_label_term) {
    MatrixT<T> d_logq(n * s_count, config.dims.num_labels);
    for (Eigen::Index s = 0; s < s_count; ++s) {
      d_logq.middleRows(s * n, n) =
          -w * (batch.label_target.array().colwise() * batch.label_mask.array());
    }
    MatrixT<T> d_out = log_softmax_rows_backward<T>(c.label_log_probs, d_logq);
    g.label_output_weight.noalias() += c.label_hidden.transpose() * d_out;
    g.label_output_bias += d_out.colwise().sum();
    MatrixT<T> d_hidden = d_out * p.label_output_weight.transpose();
    MatrixT<T> d_pre = softplus_backward<T>(c.label_pre, d_hidden);
    g.label_hidden_weight.noalias() += c.theta.transpose() * d_pre;
    g.label_hidden_bias += d_pre.colwise().sum();
    d_theta.noalias() += d_pre * p.label_hidden_weight.transpose();
  }

  MatrixT<T> d_r = softmax_rows_backward<T>(c.theta, d_theta);
  MatrixT<T> d_mu = MatrixT<T>::Zero(n, k);
  MatrixT<T> d_log_var = MatrixT<T>::Zero(n, k);
  for (Eigen::Index s = 0; s < s_count; ++s) {
    auto block = d_r.middleRows(s * n, n);
    d_mu += block;
    d_log_var.array() +=
        block.array() * c.eps.middleRows(s * n, n).array() * c.sigma.array() * T(0.5);
  }
  const PriorSpec prior = config.prior();
  const T g_doc = T(1) / static_cast<T>(n);
  for (Eigen::Index t = 0; t < k; ++t) {
    const T s0 = static_cast<T>(prior.sigma0_sq(t));
    const T m0 = static_cast<T>(prior.mu0(t));
    d_mu.col(t).array() += g_doc * (c.mu.col(t).array() - m0) / s0;
    d_log_var.col(t).array() += g_doc * T(0.5) * (c.log_var.col(t).array().exp() / s0 - T(1));
  }

  MatrixT<T> d_mu_pre =
      batchnorm_backward<T>(d_mu, p.mu_norm, c.mu_bn, g.mu_norm.gamma, g.mu_norm.beta);
  MatrixT<T> d_lv_pre = batchnorm_backward<T>(d_log_var, p.log_var_norm, c.log_var_bn,
                                              g.log_var_norm.gamma, g.log_var_norm.beta);
  g.mu_weight.noalias() += c.hidden.transpose() * d_mu_pre;
  g.mu_bias += d_mu_pre.colwise().sum();
  g.log_var_weight.noalias() += c.hidden.transpose() * d_lv_pre;
  g.log_var_bias += d_lv_pre.colwise().sum();
  MatrixT<T> d_hidden = d_mu_pre * p.mu_weight.transpose();
  d_hidden.noalias() += d_lv_pre * p.log_var_weight.transpose();
  MatrixT<T> d_pre = softplus_backward<T>(c.hidden_pre, d_hidden);
  g.word_embedding.noalias() += batch.counts.transpose() * d_pre;
  if (config.use_covariates()) g.covariate_embedding.noalias() += batch.covariates.transpose() * d_pre;
  if (config.use_labels()) g.label_embedding.noalias() += batch.label_input.transpose() * d_pre;
}

template <class T>
void update_running_stats(ModelParams<T>& params, const ForwardCache<T>& cache) {
  if (cache.options.mode != Mode::kTrain) return;
  batchnorm_update_running(params.mu_norm, cache.mu_bn);
  batchnorm_update_running(params.log_var_norm, cache.log_var_bn);
  if (cache.eta_bn_used) batchnorm_update_running(params.eta_norm, cache.eta_bn);
}

// ---- single-purpose operations --------------------------------------------

Posterior encode(const ModelParams<double>& params, const ModelConfig& config,
                 const Batch<double>& batch, Mode mode) {
  ForwardCache<double> c;
  encoder_forward(params, config, batch, mode, c);
  return {std::move(c.mu), std::move(c.log_var)};
}

Matrix reparameterize(const Matrix& mu, const Matrix& log_var, const Matrix& eps) {
  require_shape("reparameterize log_var", log_var.rows(), log_var.cols(), mu.rows(), mu.cols());
  require_shape("reparameterize eps", eps.rows(), eps.cols(), mu.rows(), mu.cols());
  return mu.array() + (0.5 * log_var.array()).exp() * eps.array();
}

Matrix decode(const ModelParams<double>& params, const ModelConfig& config, const Matrix& theta,
              const Matrix& covariates, double anneal_lambda, Mode mode) {
  const int k = config.dims.num_topics;
  require_shape("decode theta", theta.rows(), theta.cols(), theta.rows(), k);
  require_shape("decode covariates", covariates.rows(), covariates.cols(), theta.rows(),
                config.dims.num_covariates);
  if (!(anneal_lambda >= 0.0 && anneal_lambda <= 1.0)) {
    throw std::invalid_argument("anneal lambda must lie in [0, 1]");
  }
  for (Eigen::Index i = 0; i < theta.rows(); ++i) {
    if (std::abs(theta.row(i).sum() - 1.0) > 1e-5 || theta.row(i).minCoeff() < -1e-5) {
      throw std::invalid_argument("theta row " + std::to_string(i) + " is not on the simplex");
    }
  }
  Matrix cov = decoder_covariates(params, config, covariates);
  return decoder_forward<double>(params, config, theta, cov, anneal_lambda, mode, nullptr);
}

Matrix predict_label_distribution(const ModelParams<double>& params, const ModelConfig& config,
                                  const Matrix& theta) {
  if (!config.use_labels()) throw std::invalid_argument("model has no label head");
  require_shape("label theta", theta.rows(), theta.cols(), theta.rows(), config.dims.num_topics);
  return label_forward<double>(params, theta, nullptr, nullptr).array().exp();
}

double kl_divergence(const Vector& mu, const Vector& log_var, const PriorSpec& prior) {
  const auto k = prior.sigma0_sq.size();
  require_shape("kl mu", mu.size(), 1, k, 1);
  require_shape("kl log_var", log_var.size(), 1, k, 1);
  double acc = 0.0;
  for (Eigen::Index t = 0; t < k; ++t) {
    const double s0 = prior.sigma0_sq(t);
    const double diff = mu(t) - prior.mu0(t);
    acc += std::exp(log_var(t)) / s0 + diff * diff / s0 - 1.0 + std::log(s0) - log_var(t);
  }
  return 0.5 * acc;
}

ElboEstimate elbo(const ModelParams<double>& params, const ModelConfig& config,
                  const Corpus& corpus, std::size_t doc_index, const Matrix& eps,
                  double anneal_lambda, Mode mode, bool include_label_term) {
  if (eps.rows() < 1) throw std::invalid_argument("need at least one noise sample");
  const std::size_t idx[] = {doc_index};
  BatchOptions opts;
  opts.encoder_sees_labels = include_label_term;
  auto batch = make_batch<double>(corpus, idx, config, opts);
  ForwardOptions fo;
  fo.mode = mode;
  fo.anneal_lambda = anneal_lambda;
  fo.include_label_term = include_label_term;
  auto terms = elbo_forward<double>(params, config, batch, eps, fo);
  return {terms.elbo(0), terms.reconstruction(0), terms.label(0), terms.kl(0)};
}

#define METATOPIC_INSTANTIATE_MODEL(T)                                                         \
  template struct ModelParams<T>;                                                              \
  template Batch<T> make_batch<T>(const Corpus&, std::span<const std::size_t>,                 \
                                  const ModelConfig&, const BatchOptions&);                    \
  template ElboTerms<T> elbo_forward<T>(const ModelParams<T>&, const ModelConfig&,             \
                                        const Batch<T>&, const MatrixT<T>&,                    \
                                        const ForwardOptions&, ForwardCache<T>*);              \
  template void elbo_backward<T>(const ModelParams<T>&, const ModelConfig&, const Batch<T>&,   \
                                 const ForwardCache<T>&, ModelParams<T>&);                     \
  template void update_running_stats<T>(ModelParams<T>&, const ForwardCache<T>&);

METATOPIC_INSTANTIATE_MODEL(float)
METATOPIC_INSTANTIATE_MODEL(double)
METATOPIC_INSTANTIATE_MODEL(long double)

template ModelParams<float> ModelParams<double>::cast<float>() const;
template ModelParams<long double> ModelParams<double>::cast<long double>() const;
template ModelParams<double> ModelParams<float>::cast<double>() const;
template ModelParams<double> ModelParams<double>::cast<double>() const;
template ModelParams<double> ModelParams<long double>::cast<double>() const;

#undef METATOPIC_INSTANTIATE_MODEL

}  // namespace metatopic
