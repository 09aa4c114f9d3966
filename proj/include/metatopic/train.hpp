#pragma once

// Initialization, Adam minibatch training, the sparsity E-step and the
// annealing schedule.

#include "metatopic/checkpoint.hpp"
#include "metatopic/corpus.hpp"
#include "metatopic/model.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace metatopic {

enum class Precision { kFloat64, kFloat32 };

struct SparsityTargets {
  bool topics = true;        // B
  bool covariates = true;    // B_cov
  bool interactions = true;  // B_int

  /// Comma-separated subset of "topics", "covariates", "interactions".
  static SparsityTargets parse(const std::string& text);
};

struct TrainConfig {
  int num_topics = 50;
  double alpha = 1.0;
  int epochs = 200;
  int batch_size = 200;
  double learning_rate = 0.002;
  double adam_beta1 = 0.99;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int train_samples = 1;
  std::uint64_t seed = 0;
  bool sparsity_enabled = false;
  SparsityTargets sparsity_targets;
  double tau_floor = 1e-6;
  double sparsity_threshold = 1e-3;  // for the history column only
  int embedding_dim = 300;
  double init_scale = 0.1;
  std::optional<std::filesystem::path> word_vector_path;
  bool freeze_word_vectors = true;  // only meaningful with word vectors
  bool freeze_background = false;
  bool use_covariates = false;
  bool use_labels = false;
  bool use_interactions = false;
  bool use_background = true;
  int covariate_embedding_dim = 0;
  int label_hidden = 0;
  Precision precision = Precision::kFloat64;
  /// With labels and a dev set, keep the epoch with the best dev accuracy.
  bool select_by_dev_accuracy = true;
  int dev_samples = 1;

  /// Throws std::invalid_argument on invalid settings.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Model shape and flags implied by a training config and corpus.
ModelConfig make_model_config(const TrainConfig& config, const Corpus& corpus);

struct WordVectors {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

/// Text format, one line per word: "word v1 ... vE". A leading
/// "<count> <dim>" header line is accepted and skipped.
WordVectors load_word_vectors(const std::filesystem::path& path);

/// Biases zero, weights N(0, init_scale^2), batchnorm at identity, background
/// at the log empirical word frequency of `corpus`. Rows of the word embedding
/// for words found in `word_vectors` are overwritten by those vectors.
ModelParams<double> init_params(const ModelConfig& config, const Corpus& corpus, Rng& rng,
                                const WordVectors* word_vectors = nullptr,
                                double init_scale = 0.1);

/// Log empirical frequency; unseen words get half a count.
Matrix background_log_frequency(const Corpus& corpus);

template <class T>
struct SparsityWeights {
  MatrixT<T> topics;        // same shape as B or empty
  MatrixT<T> covariates;    // same shape as B_cov or empty
  MatrixT<T> interactions;  // same shape as B_int or empty
};

/// weight = 1 / (b^2 + tau_floor), elementwise.
template <class T>
MatrixT<T> sparsity_e_step(const MatrixT<T>& b, double tau_floor);

template <class T>
SparsityWeights<T> sparsity_e_step(const ModelParams<T>& params, const SparsityTargets& targets,
                                   double tau_floor);

struct AdamSettings {
  double learning_rate = 0.002;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <class T>
struct TrainState {
  ModelParams<T> first_moment;
  ModelParams<T> second_moment;
  std::int64_t step = 0;
  double anneal_lambda = 1.0;
  int epoch = 0;
  std::optional<SparsityWeights<T>> sparsity;

  static TrainState fresh(const ModelParams<T>& params);
};

/// One bias-corrected Adam update of every trainable tensor. When the state
/// carries sparsity weights, penalty_scale * weights .* B is added to the
/// gradient of each target first. Throws NumericError naming the tensor if a
/// gradient is not finite.
template <class T>
void adam_step(ModelParams<T>& params, const ModelParams<T>& grads, TrainState<T>& state,
               const ModelConfig& config, const AdamSettings& settings,
               double penalty_scale = 0.0);

/// 1 at epoch 0, 0 at the last epoch, linear in between (0 when epochs == 1).
double anneal_lambda(int epoch, int epochs);

/// Shuffled index chunks of `batch_size`; a trailing chunk of one document is
/// merged into the previous chunk.
std::vector<std::vector<std::size_t>> make_minibatches(std::size_t num_docs, int batch_size,
                                                       Rng& rng);

struct EpochRecord {
  int epoch = 0;
  double train_elbo = 0.0;
  std::optional<double> dev_elbo;
  std::optional<double> dev_accuracy;
  double sparsity_fraction = 0.0;
  double lambda = 0.0;
};

struct TrainResult {
  TrainedModel model;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;
  std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

TrainResult train(const Corpus& train_corpus, const Corpus* dev_corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void write_history_tsv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace metatopic
