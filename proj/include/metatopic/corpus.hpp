#pragma once

// Text preprocessing, vocabulary construction, metadata encoding, corpus
// splitting, and the on-disk corpus directory format.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace metatopic {

class CorpusError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by encode_document when no token survives the vocabulary filter.
class EmptyDocumentError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

class StopwordList {
 public:
  StopwordList() = default;
  explicit StopwordList(std::vector<std::string> words);

  /// The shipped English list (snowball).
  static const StopwordList& english();
  /// One word per line; blank lines and lines starting with '|' are ignored.
  static StopwordList from_file(const std::filesystem::path& path);

  bool contains(std::string_view word) const;
  std::size_t size() const { return words_.size(); }

 private:
  std::unordered_set<std::string> words_;
};

/// Lowercases, splits on whitespace, deletes every character outside
/// [a-z0-9] (bytes >= 0x80 are kept as letters), then drops tokens that
/// contain a digit, are shorter than 3 characters, or are stopwords. A token
/// is a stopword if either its lowercased form with edge punctuation trimmed
/// or its stripped form is on the list.
std::vector<std::string> tokenize(std::string_view text,
                                  const StopwordList& stopwords = StopwordList::english());

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> words);

  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  const std::vector<std::string>& words() const { return words_; }
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::optional<int> find(std::string_view word) const;
  /// FNV-1a over the newline-joined word list.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return words_ == other.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

/// Words ranked by document frequency (descending), ties alphabetical,
/// truncated to max_size.
Vocabulary build_vocab(const std::vector<std::vector<std::string>>& token_lists,
                       std::size_t max_size);

struct WordCount {
  int word = 0;
  int count = 0;
  bool operator==(const WordCount&) const = default;
};

struct Document {
  std::string id;
  std::vector<WordCount> counts;  // sorted by word id, counts > 0
  std::optional<int> label;       // index into Corpus::label_names
  std::vector<double> covariates;  // length C (empty when C == 0)
  int n_tokens = 0;

  bool operator==(const Document&) const = default;
};

enum class CovariateEncoding { kOneHot, kReal };

struct CovariateField {
  std::string name;
  CovariateEncoding encoding = CovariateEncoding::kOneHot;
  bool operator==(const CovariateField&) const = default;
};

struct MetadataSchema {
  std::optional<std::string> label_field;
  std::vector<CovariateField> covariate_fields;

  /// Parses "field" (one-hot) or "field:real" / "field:onehot", comma separated.
  static std::vector<CovariateField> parse_covariate_fields(std::string_view spec);
  nlohmann::json to_json() const;
  static MetadataSchema from_json(const nlohmann::json& j);
  bool operator==(const MetadataSchema&) const = default;
};

// Category levels observed across all records, fixed before encoding.
struct MetadataLevels {
  std::vector<std::string> label_names;
  std::vector<std::string> covariate_names;  // "field=value" for one-hot, "field" for real
  // For one-hot fields: value -> column. For real fields: the single column.
  std::vector<std::unordered_map<std::string, int>> field_columns;
};

/// Scans every record; throws CorpusError naming any schema field a record lacks.
MetadataLevels fit_metadata(const std::vector<nlohmann::json>& records,
                            const MetadataSchema& schema);

/// Counts in-vocabulary tokens (OOV dropped) and encodes metadata per schema.
/// Throws EmptyDocumentError when nothing remains.
Document encode_document(std::string_view id, const std::vector<std::string>& tokens,
                         const Vocabulary& vocab, const nlohmann::json& record,
                         const MetadataSchema& schema, const MetadataLevels& levels);

struct Corpus {
  Vocabulary vocabulary;
  std::vector<Document> documents;
  std::vector<std::string> label_names;
  std::vector<std::string> covariate_names;
  MetadataSchema schema;
  std::uint64_t seed = 0;

  std::size_t num_docs() const { return documents.size(); }
  std::size_t vocab_size() const { return vocabulary.size(); }
  std::size_t num_labels() const { return label_names.size(); }
  std::size_t num_covariates() const { return covariate_names.size(); }
  bool has_labels() const;
  std::size_t total_tokens() const;
  /// True when every covariate column comes from a single one-hot field.
  bool covariates_categorical() const;

  /// Copy with only the listed documents, in the given order.
  Corpus subset(const std::vector<std::size_t>& indices) const;
  /// Throws CorpusError if any document does not conform to V, L, C.
  void validate() const;
};

struct SplitFractions {
  double train = 0.8;
  double dev = 0.1;
  double test = 0.1;
};

/// Largest-remainder sizes over a seeded shuffle; each split keeps the
/// original document order.
std::vector<std::size_t> split_sizes(std::size_t n, const SplitFractions& fractions);

struct CorpusSplit {
  Corpus train;
  Corpus dev;
  Corpus test;
};

CorpusSplit split_corpus(const Corpus& corpus, const SplitFractions& fractions,
                         std::uint64_t seed);

// ---- input records --------------------------------------------------------

struct RawRecord {
  std::string id;
  std::vector<std::string> tokens;
  nlohmann::json metadata;
};

/// Reads JSON-lines records, tokenizing "text" or taking "tokens" verbatim.
/// Records without "id" get their zero-based line number.
std::vector<RawRecord> read_jsonl(const std::filesystem::path& path,
                                  const StopwordList& stopwords = StopwordList::english());

struct PreprocessOptions {
  std::size_t vocab_size = 2000;
  MetadataSchema schema;
  std::uint64_t seed = 0;
};

struct PreprocessResult {
  Corpus corpus;
  std::vector<std::string> dropped_ids;  // documents with no in-vocabulary tokens
};

/// Builds the vocabulary over all records (held-out ones included) and encodes each one. Documents left
/// empty are dropped and reported in dropped_ids.
PreprocessResult preprocess(const std::vector<RawRecord>& records,
                            const PreprocessOptions& options);

// ---- corpus directory -----------------------------------------------------

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace metatopic
