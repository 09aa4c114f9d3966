#pragma once

// The generative / inference network.
//
// Encoder:   pi = softplus(W_x x + W_c c + W_y y)
//            mu = bn(W_mu pi + b_mu),  log_var = bn(W_sigma pi + b_sigma)
// Sample:    r = mu + exp(log_var / 2) * eps,  theta = softmax(r)
// Decoder:   eta_raw = d + theta B + c' B_cov + (theta (x) c') B_int
//            eta = lambda * bn(eta_raw) + (1 - lambda) * eta_raw
//            log p(word | theta, c) = log_softmax(eta)
// Labels:    log p(y | theta) = log_softmax(W2 softplus(W1 theta + b1) + b2)
//
// c' is the raw covariate vector, or c P when covariates are projected to a
// low-dimensional embedding. The interaction vector theta (x) c' is flattened
// row-major over (topic, covariate) pairs: index k * C' + j.
//
// All batch computations keep per-document rows; with S samples the sampled
// quantities are stacked sample-major (row s * N + i).

#include "metatopic/corpus.hpp"
#include "metatopic/numkit.hpp"

#include <Eigen/SparseCore>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace metatopic {

template <class T>
using SparseRowsT = Eigen::SparseMatrix<T, Eigen::RowMajor>;

struct PriorSpec {
  double alpha = 1.0;
  Vector mu0;
  Vector sigma0_sq;

  Eigen::Index num_topics() const { return mu0.size(); }
};

/// Laplace approximation of a symmetric Dirichlet(alpha) on the softmax
/// basis: mu0 = 0, sigma0^2 = (K - 1) / (alpha K).
PriorSpec prior_params(double alpha, int num_topics);

struct ModelDims {
  int vocab_size = 0;
  int num_topics = 0;
  int embedding_dim = 300;
  int num_covariates = 0;           // 0 disables covariates
  int covariate_embedding_dim = 0;  // 0 feeds raw covariates to the decoder
  int num_labels = 0;               // 0 disables the label head
  int label_hidden = 0;             // 0 means num_topics

  int decoder_covariate_dim() const {
    return covariate_embedding_dim > 0 ? covariate_embedding_dim : num_covariates;
  }
  int label_hidden_dim() const { return label_hidden > 0 ? label_hidden : num_topics; }
};

struct ModelConfig {
  ModelDims dims;
  double alpha = 1.0;
  bool use_background = true;
  bool use_interactions = false;
  bool freeze_word_vectors = false;
  bool freeze_background = false;
  bool covariates_categorical = false;

  bool use_covariates() const { return dims.num_covariates > 0; }
  bool use_labels() const { return dims.num_labels > 0; }
  bool projects_covariates() const { return dims.covariate_embedding_dim > 0; }
  PriorSpec prior() const { return prior_params(alpha, dims.num_topics); }
  /// Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

template <class T>
struct ModelParams {
  // encoder
  MatrixT<T> word_embedding;       // V x E
  MatrixT<T> covariate_embedding;  // C x E
  MatrixT<T> label_embedding;      // L x E
  MatrixT<T> mu_weight;            // E x K
  MatrixT<T> mu_bias;              // 1 x K
  MatrixT<T> log_var_weight;       // E x K
  MatrixT<T> log_var_bias;         // 1 x K
  BatchNormState<T> mu_norm;
  BatchNormState<T> log_var_norm;
  // decoder
  MatrixT<T> background;             // 1 x V
  MatrixT<T> topic_deviations;       // K x V
  MatrixT<T> covariate_projection;   // C x C' (empty without projection)
  MatrixT<T> covariate_deviations;   // C' x V
  MatrixT<T> interaction_deviations; // (K * C') x V
  BatchNormState<T> eta_norm;
  // label head
  MatrixT<T> label_hidden_weight;  // K x H
  MatrixT<T> label_hidden_bias;    // 1 x H
  MatrixT<T> label_output_weight;  // H x L
  MatrixT<T> label_output_bias;    // 1 x L

  /// Correctly shaped parameters with every weight zero, batchnorm affine at
  /// identity and running statistics at (mean 0, var 1).
  static ModelParams zeros(const ModelConfig& config);
  /// Same shapes, every entry zero (gradient accumulators, Adam moments).
  static ModelParams zeros_like(const ModelParams& shape);

  template <class U>
  ModelParams<U> cast() const;
};

enum class TensorKind { kParameter, kBuffer };

struct TensorInfo {
  std::string_view name;
  TensorKind kind;
};

/// Visits every tensor of one or more same-shaped ModelParams in a fixed
/// order: f(info, tensor_from_each...). Buffers are the batchnorm running
/// statistics.
template <class F, class First, class... Rest>
void for_each_tensor(F&& f, First& first, Rest&... rest) {
#define METATOPIC_VISIT(kind, member) \
  f(TensorInfo{#member, TensorKind::kind}, first.member, rest.member...)
  METATOPIC_VISIT(kParameter, word_embedding);
  METATOPIC_VISIT(kParameter, mu_weight);
  METATOPIC_VISIT(kParameter, mu_bias);
  METATOPIC_VISIT(kParameter, log_var_weight);
  METATOPIC_VISIT(kParameter, log_var_bias);
  METATOPIC_VISIT(kParameter, mu_norm.gamma);
  METATOPIC_VISIT(kParameter, mu_norm.beta);
  METATOPIC_VISIT(kParameter, log_var_norm.gamma);
  METATOPIC_VISIT(kParameter, log_var_norm.beta);
  METATOPIC_VISIT(kParameter, background);
  METATOPIC_VISIT(kParameter, topic_deviations);
  METATOPIC_VISIT(kParameter, eta_norm.gamma);
  METATOPIC_VISIT(kParameter, eta_norm.beta);
  METATOPIC_VISIT(kParameter, covariate_embedding);
  METATOPIC_VISIT(kParameter, covariate_projection);
  METATOPIC_VISIT(kParameter, covariate_deviations);
  METATOPIC_VISIT(kParameter, interaction_deviations);
  METATOPIC_VISIT(kParameter, label_embedding);
  METATOPIC_VISIT(kParameter, label_hidden_weight);
  METATOPIC_VISIT(kParameter, label_hidden_bias);
  METATOPIC_VISIT(kParameter, label_output_weight);
  METATOPIC_VISIT(kParameter, label_output_bias);
  METATOPIC_VISIT(kBuffer, mu_norm.running_mean);
  METATOPIC_VISIT(kBuffer, mu_norm.running_var);
  METATOPIC_VISIT(kBuffer, log_var_norm.running_mean);
  METATOPIC_VISIT(kBuffer, log_var_norm.running_var);
  METATOPIC_VISIT(kBuffer, eta_norm.running_mean);
  METATOPIC_VISIT(kBuffer, eta_norm.running_var);
#undef METATOPIC_VISIT
}

/// Whether the optimizer may update the named tensor under `config`. Empty
/// tensors, buffers, frozen word vectors and a frozen or disabled background
/// are not trainable.
bool is_trainable(std::string_view name, Eigen::Index size, TensorKind kind,
                  const ModelConfig& config);

/// Names of the trainable tensors, in visiting order.
std::vector<std::string> trainable_tensor_names(const ModelConfig& config);

// ---- batches --------------------------------------------------------------

template <class T>
struct Batch {
  SparseRowsT<T> counts;      // N x V
  VectorT<T> doc_lengths;     // N
  MatrixT<T> covariates;      // N x C (C = 0 when the model has no covariates)
  MatrixT<T> label_input;     // N x L, what the encoder sees
  MatrixT<T> label_target;    // N x L, one-hot gold labels (zero rows if absent)
  VectorT<T> label_mask;      // N, 1 where a gold label exists

  Eigen::Index size() const { return counts.rows(); }
};

struct BatchOptions {
  /// Feed gold labels to the encoder. Held-out inference feeds zeros.
  bool encoder_sees_labels = true;
  /// Replace every document's covariates with this row (length C).
  const Vector* covariate_override = nullptr;
};

template <class T>
Batch<T> make_batch(const Corpus& corpus, std::span<const std::size_t> indices,
                    const ModelConfig& config, const BatchOptions& options = {});

// ---- forward / backward ---------------------------------------------------

struct ForwardOptions {
  Mode mode = Mode::kTrain;
  double anneal_lambda = 0.0;
  bool include_label_term = true;
};

template <class T>
struct ElboTerms {
  VectorT<T> reconstruction;  // mean over samples of sum_j x_j log p(word j)
  VectorT<T> label;           // mean over samples of log p(y), 0 if absent
  VectorT<T> kl;
  VectorT<T> elbo;
};

template <class T>
struct ForwardCache {
  Eigen::Index docs = 0;
  Eigen::Index samples = 0;
  ForwardOptions options;
  MatrixT<T> hidden_pre;  // N x E
  MatrixT<T> hidden;      // N x E (pi)
  BatchNormCache<T> mu_bn;
  BatchNormCache<T> log_var_bn;
  MatrixT<T> mu;        // N x K
  MatrixT<T> log_var;   // N x K
  MatrixT<T> sigma;     // N x K
  MatrixT<T> eps;       // SN x K
  MatrixT<T> theta;     // SN x K
  MatrixT<T> cov_decoder;   // N x C'
  MatrixT<T> interactions;  // SN x (K C')
  bool eta_bn_used = false;
  BatchNormCache<T> eta_bn;
  MatrixT<T> log_probs;     // SN x V
  MatrixT<T> label_pre;     // SN x H
  MatrixT<T> label_hidden;  // SN x H
  MatrixT<T> label_log_probs;  // SN x L
};

/// Evaluates the Monte Carlo ELBO of every document in the batch. `eps` holds
/// S stacked noise draws (S N x K). Parameters are not mutated; in train mode
/// batchnorm uses batch statistics and the cache carries them for
/// update_running_stats.
template <class T>
ElboTerms<T> elbo_forward(const ModelParams<T>& params, const ModelConfig& config,
                          const Batch<T>& batch, const MatrixT<T>& eps,
                          const ForwardOptions& options, ForwardCache<T>* cache = nullptr);

/// -mean(elbo): the per-document training loss.
template <class T>
T batch_loss(const ElboTerms<T>& terms) {
  return -terms.elbo.mean();
}

/// Accumulates d batch_loss / d params into `grads` (same shapes as params).
template <class T>
void elbo_backward(const ModelParams<T>& params, const ModelConfig& config,
                   const Batch<T>& batch, const ForwardCache<T>& cache, ModelParams<T>& grads);

template <class T>
void update_running_stats(ModelParams<T>& params, const ForwardCache<T>& cache);

// ---- single-purpose operations (double precision) -------------------------

struct Posterior {
  Matrix mu;       // N x K
  Matrix log_var;  // N x K
};

Posterior encode(const ModelParams<double>& params, const ModelConfig& config,
                 const Batch<double>& batch, Mode mode);

/// r = mu + exp(log_var / 2) * eps.
Matrix reparameterize(const Matrix& mu, const Matrix& log_var, const Matrix& eps);

/// Word log-probabilities (N x V) for N simplex points and raw covariates
/// (N x C). Throws if a theta row is off the simplex by more than 1e-5.
Matrix decode(const ModelParams<double>& params, const ModelConfig& config, const Matrix& theta,
              const Matrix& covariates, double anneal_lambda, Mode mode);

/// Label distribution (N x L) for N simplex points.
Matrix predict_label_distribution(const ModelParams<double>& params, const ModelConfig& config,
                                  const Matrix& theta);

/// Closed-form KL(N(mu, diag exp(log_var)) || N(mu0, diag sigma0^2)).
double kl_divergence(const Vector& mu, const Vector& log_var, const PriorSpec& prior);

struct ElboEstimate {
  double bound = 0.0;
  double reconstruction = 0.0;
  double label = 0.0;
  double kl = 0.0;
};

/// Monte Carlo ELBO of one document with S = eps.rows() draws (eps is S x K).
ElboEstimate elbo(const ModelParams<double>& params, const ModelConfig& config,
                  const Corpus& corpus, std::size_t doc_index, const Matrix& eps,
                  double anneal_lambda, Mode mode, bool include_label_term = true);

}  // namespace metatopic
