#pragma once

// Topic tables and quantitative metrics.

#include "metatopic/checkpoint.hpp"
#include "metatopic/corpus.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace metatopic {

struct TopicWords {
  std::vector<std::string> words;
  std::vector<double> weights;
};

struct TopicReport {
  std::vector<TopicWords> topics;
  TopicWords background;
};

/// The n largest entries of `row`, ties broken alphabetically by word.
TopicWords top_words_of_row(const Eigen::Ref<const Eigen::RowVectorXd>& row,
                            const Vocabulary& vocab, std::size_t n);

/// Top words of every topic deviation row, plus the background's top words.
TopicReport top_words(const TrainedModel& model, std::size_t n = 10);

/// topic_id, rank, word, weight (background rows use topic_id "background").
void write_topic_tsv(const std::filesystem::path& path, const TopicReport& report);

/// Document-level binary co-occurrence counts over a fixed word list.
class CooccurrenceIndex {
 public:
  CooccurrenceIndex() = default;
  explicit CooccurrenceIndex(std::vector<std::string> words);

  /// Adds one reference document; repeated words count once.
  void add_document(std::span<const std::string> tokens);
  void add_document_ids(std::vector<int> word_ids);

  const std::vector<std::string>& words() const { return words_; }
  std::uint64_t doc_count() const { return doc_count_; }
  std::optional<int> find(const std::string& word) const;
  std::uint64_t word_doc_freq(int i) const { return word_df_.at(static_cast<std::size_t>(i)); }
  std::uint64_t pair_doc_freq(int i, int j) const;
  std::size_t num_pairs() const { return pair_df_.size(); }

  void save(const std::filesystem::path& path) const;
  static CooccurrenceIndex load(const std::filesystem::path& path);

  bool operator==(const CooccurrenceIndex&) const = default;

 private:
  static std::uint64_t key(int i, int j);

  std::vector<std::string> words_;
  std::unordered_map<std::string, int> lookup_;
  std::uint64_t doc_count_ = 0;
  std::vector<std::uint64_t> word_df_;
  std::unordered_map<std::uint64_t, std::uint64_t> pair_df_;
};

/// Index over the words of `vocab` from tokenized reference documents.
CooccurrenceIndex build_cooccurrence(const std::vector<std::vector<std::string>>& documents,
                                     const Vocabulary& vocab);
/// Index over the corpus vocabulary from its bag-of-words documents.
CooccurrenceIndex build_cooccurrence(const Corpus& corpus);

/// NPMI of one pair from document probabilities; the joint is smoothed by
/// 1e-12, and a zero joint gives -1. Unclamped, in [-1, 1].
double npmi_pair(double p1, double p2, double p12);

struct NpmiResult {
  double mean = 0.0;            // pair values clamped below at 0
  double mean_unclamped = 0.0;
  std::vector<double> per_topic;
  std::vector<double> per_topic_unclamped;
  std::size_t pairs_scored = 0;
  std::size_t pairs_skipped = 0;  // a word missing from the index or never seen
};

/// Mean over topics of the mean pair NPMI among each topic's words.
NpmiResult npmi(const std::vector<std::vector<std::string>>& topics,
                const CooccurrenceIndex& index);
NpmiResult npmi(const TopicReport& report, const CooccurrenceIndex& index);

/// Fraction of entries with |value| < threshold over B and, when present,
/// the covariate and interaction deviations.
double sparsity_fraction(const ModelParams<double>& params, double threshold = 1e-3);

double accuracy(std::span<const int> predictions, std::span<const int> gold);

struct EvalMetrics {
  std::optional<double> perplexity;
  std::optional<double> npmi_internal;
  std::optional<double> npmi_external;
  std::optional<double> npmi_internal_unclamped;
  std::optional<double> npmi_external_unclamped;
  std::optional<double> sparsity;
  std::optional<double> accuracy;
  std::optional<double> majority_baseline;

  /// Every key is always present; metrics not computed are null.
  nlohmann::json to_json() const;
};

void write_metrics_json(const std::filesystem::path& path, const EvalMetrics& metrics);

}  // namespace metatopic
