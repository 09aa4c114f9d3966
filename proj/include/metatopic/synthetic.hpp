#pragma once

// Corpora sampled from the model's own generative story, for recovery and
// behavior experiments:
//   r ~ N(mu0, diag sigma0^2), theta = softmax(r)
//   eta = d + theta B + c B_cov,  words ~ Multinomial(N, softmax(eta))
//   y = argmax theta (optionally flipped with some probability)

#include "metatopic/corpus.hpp"
#include "metatopic/numkit.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace metatopic {

struct SyntheticSpec {
  int num_docs = 2000;
  int num_topics = 3;
  int words_per_topic = 5;     // distinctive words per topic
  int background_words = 15;   // words shared by all topics
  double alpha = 0.5;          // prior on theta through the Laplace approximation
  double topic_strength = 3.0; // B entry for a topic's distinctive words
  int min_length = 40;
  int max_length = 80;
  /// Ordinal covariate with this many values (0 = none). Its deviations drift
  /// smoothly: drift word group m peaks at value m * (values - 1) / (groups - 1).
  int covariate_values = 0;
  int drift_groups = 3;
  int words_per_drift_group = 5;
  double drift_strength = 2.5;
  double drift_width = 2.0;
  /// Emit labels y = argmax theta; with this probability a random label instead.
  bool labels = false;
  double label_noise = 0.0;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  Corpus corpus;
  Matrix topics;      // K x V true deviations
  Matrix covariate_deviations;  // values x V (empty without covariate)
  Matrix theta;       // D x K
  std::vector<std::vector<std::string>> topic_words;  // distinctive words per topic
  std::vector<std::vector<std::string>> documents;    // token lists in sampled order
  std::vector<std::string> covariate_values;          // covariate value per document
  std::vector<std::string> labels;                    // label per document
};

/// Lowercase names "zaa", "zab", ...; valid tokens that survive
/// preprocessing and are not stopwords.
std::string synthetic_word(int index);

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// JSON-lines with "id", "tokens" and, when present, "year" and "label".
void write_synthetic_jsonl(const SyntheticCorpus& data, const std::filesystem::path& path);

}  // namespace metatopic
