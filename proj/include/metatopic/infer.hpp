#pragma once

// Held-out inference: document-topic proportions, label prediction and the
// ELBO-based perplexity bound. Everything here runs the network in eval mode
// and feeds zero label vectors to the encoder.

#include "metatopic/checkpoint.hpp"
#include "metatopic/corpus.hpp"
#include "metatopic/model.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace metatopic {

enum class PredictionMode { kJointLabel, kConditionalCovariate };

/// "joint" or "conditional".
PredictionMode parse_prediction_mode(std::string_view name);
std::string_view to_string(PredictionMode mode);

struct ThetaOptions {
  /// false: softmax(mu). true: mean of softmax(r) over `samples` draws.
  bool sampled = false;
  int samples = 20;
  std::uint64_t seed = 0;
};

/// Topic proportions for the listed documents (N x K). With an override,
/// every document is encoded with that covariate row instead of its own.
Matrix infer_theta(const TrainedModel& model, const Corpus& corpus,
                   std::span<const std::size_t> indices, const ThetaOptions& options = {},
                   const Vector* covariate_override = nullptr);

/// Topic proportions for every document (D x K).
Matrix infer_theta(const TrainedModel& model, const Corpus& corpus,
                   const ThetaOptions& options = {});

/// Index of the largest entry; ties go to the lowest index.
int argmax_lowest(const Vector& v);

struct LabelPrediction {
  int label = 0;
  /// Joint: label probabilities. Conditional: per-candidate word log-likelihood.
  Vector scores;
};

LabelPrediction predict_label_joint(const TrainedModel& model, const Corpus& corpus,
                                    std::size_t doc_index);
LabelPrediction predict_label_conditional(const TrainedModel& model, const Corpus& corpus,
                                          std::size_t doc_index);

/// Predictions for every document in `corpus`.
std::vector<LabelPrediction> predict_labels(const TrainedModel& model, const Corpus& corpus,
                                            PredictionMode mode);

/// Names of the classes predict_labels chooses between: label names for the
/// joint rule, covariate values (the part after "field=") for the conditional.
std::vector<std::string> prediction_class_names(const TrainedModel& model, PredictionMode mode);

/// Gold class per document for `mode`, or nullopt where unknown.
std::vector<std::optional<int>> gold_classes(const TrainedModel& model, const Corpus& corpus,
                                             PredictionMode mode);

struct PerplexityOptions {
  int samples = 20;
  std::uint64_t seed = 0;
  bool include_label_term = false;
};

struct PerplexityReport {
  double bound = 0.0;
  double total_elbo = 0.0;
  std::size_t total_tokens = 0;
  std::size_t docs_scored = 0;
  int samples = 0;
  bool include_label_term = false;
};

/// Per-document Monte Carlo ELBO. Each document draws its noise from a stream
/// keyed by its id, so the values do not depend on order or batching.
Vector document_bounds(const TrainedModel& model, const Corpus& corpus,
                       const PerplexityOptions& options = {});

/// exp(-sum of document bounds / total tokens).
PerplexityReport perplexity(const TrainedModel& model, const Corpus& corpus,
                            const PerplexityOptions& options = {});

/// doc_id, predicted_label, then one score column per class.
void write_predictions_tsv(const std::filesystem::path& path, const Corpus& corpus,
                           const std::vector<LabelPrediction>& predictions,
                           const std::vector<std::string>& class_names);

/// doc_id, theta_1 .. theta_K.
void write_theta_tsv(const std::filesystem::path& path, const Corpus& corpus,
                     const Matrix& theta);

}  // namespace metatopic
