#pragma once

// Small hand-built corpora and parameter sets shared by the tests.

#include "metatopic/corpus.hpp"
#include "metatopic/model.hpp"
#include "metatopic/numkit.hpp"

#include <cstdio>
#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

namespace metatopic::testing {

inline std::vector<std::string> word_list(int v) {
  std::vector<std::string> words;
  for (int j = 0; j < v; ++j) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "w%03d", j);
    words.emplace_back(buf);
  }
  return words;
}

/// Random bag-of-words corpus; each document has 5-30 tokens. C covariates
/// are uniform reals in [0, 1]; L labels are assigned round-robin.
inline Corpus random_corpus(Rng& rng, int docs, int v, int c = 0, int l = 0) {
  Corpus corpus;
  corpus.vocabulary = Vocabulary(word_list(v));
  for (int j = 0; j < c; ++j) corpus.covariate_names.push_back("c" + std::to_string(j));
  for (int j = 0; j < l; ++j) corpus.label_names.push_back("y" + std::to_string(j));
  for (int d = 0; d < docs; ++d) {
    Document doc;
    doc.id = "d" + std::to_string(d);
    std::vector<int> counts(static_cast<std::size_t>(v), 0);
    const int n = 5 + static_cast<int>(rng.below(26));
    for (int t = 0; t < n; ++t) ++counts[rng.below(static_cast<std::uint64_t>(v))];
    for (int j = 0; j < v; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) doc.counts.push_back({j, counts[static_cast<std::size_t>(j)]});
    }
    doc.n_tokens = n;
    for (int j = 0; j < c; ++j) doc.covariates.push_back(rng.uniform());
    if (l > 0) doc.label = d % l;
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

/// Every tensor (including batchnorm affine and running statistics) filled
/// with random values of the given scale; running variances stay positive.
inline ModelParams<double> random_params(const ModelConfig& config, Rng& rng, double scale) {
  auto p = ModelParams<double>::zeros(config);
  for_each_tensor(
      [&](const TensorInfo& info, Matrix& m) {
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
        std::string_view name = info.name;
        if (name.ends_with("gamma")) m.array() += 1.0;
        if (name.ends_with("running_var")) m = m.array().abs() + 0.5;
      },
      p);
  return p;
}

inline ModelConfig toy_config(int v, int k, int c, int l, bool interactions, int cov_embed = 0) {
  ModelConfig mc;
  mc.dims.vocab_size = v;
  mc.dims.num_topics = k;
  mc.dims.embedding_dim = 6;
  mc.dims.num_covariates = c;
  mc.dims.covariate_embedding_dim = cov_embed;
  mc.dims.num_labels = l;
  mc.use_interactions = interactions;
  return mc;
}

/// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("metatopic-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(fnv1a64(tag) ^ reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace metatopic::testing
