#include "metatopic/synthetic.hpp"

#include "metatopic/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace metatopic {
namespace {

int sample_categorical(const Vector& cumulative, Rng& rng) {
  const double u = rng.uniform() * cumulative(cumulative.size() - 1);
  const auto* begin = cumulative.data();
  const auto* it = std::upper_bound(begin, begin + cumulative.size(), u);
  return static_cast<int>(std::min<std::ptrdiff_t>(it - begin, cumulative.size() - 1));
}

}  // namespace

std::string synthetic_word(int index) {
  if (index < 0) throw std::invalid_argument("negative word index");
  // "z" prefix keeps every name clear of the stopword list.
  std::string tail;
  int i = index;
  do {
    tail.insert(tail.begin(), static_cast<char>('a' + i % 26));
    i /= 26;
  } while (i > 0);
  while (tail.size() < 2) tail.insert(tail.begin(), 'a');
  return "z" + tail;
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  if (spec.num_docs < 1 || spec.num_topics < 2 || spec.words_per_topic < 1 ||
      spec.background_words < 0 || spec.min_length < 1 || spec.max_length < spec.min_length) {
    throw std::invalid_argument("invalid synthetic corpus settings");
  }
  const int k = spec.num_topics;
  const int topic_words = k * spec.words_per_topic;
  const int drift_words = spec.covariate_values > 0 ? spec.drift_groups * spec.words_per_drift_group : 0;
  const int v = topic_words + drift_words + spec.background_words;

  Rng rng(spec.seed);
  SyntheticCorpus out;
  std::vector<std::string> names(static_cast<std::size_t>(v));
  for (int j = 0; j < v; ++j) names[static_cast<std::size_t>(j)] = synthetic_word(j);

  // Background words are three times as common a priori as the others.
  Vector d(v);
  for (int j = 0; j < v; ++j) d(j) = std::log(j >= topic_words + drift_words ? 3.0 : 1.0);
  d.array() -= std::log(d.array().exp().sum());

  out.topics = Matrix::Zero(k, v);
  out.topic_words.resize(static_cast<std::size_t>(k));
  for (int t = 0; t < k; ++t) {
    for (int w = 0; w < spec.words_per_topic; ++w) {
      const int j = t * spec.words_per_topic + w;
      out.topics(t, j) = spec.topic_strength;
      out.topic_words[static_cast<std::size_t>(t)].push_back(names[static_cast<std::size_t>(j)]);
    }
  }
  const int y = spec.covariate_values;
  out.covariate_deviations = Matrix::Zero(y, v);
  for (int c = 0; c < y; ++c) {
    for (int g = 0; g < spec.drift_groups; ++g) {
      const double center = spec.drift_groups > 1
                                ? g * (y - 1.0) / (spec.drift_groups - 1.0)
                                : (y - 1.0) / 2.0;
      const double z = (c - center) / spec.drift_width;
      const double strength = spec.drift_strength * std::exp(-0.5 * z * z);
      for (int w = 0; w < spec.words_per_drift_group; ++w) {
        out.covariate_deviations(c, topic_words + g * spec.words_per_drift_group + w) = strength;
      }
    }
  }

  const auto prior = prior_params(spec.alpha, k);
  const Vector sigma = prior.sigma0_sq.array().sqrt();
  std::vector<RawRecord> records;
  out.theta = Matrix::Zero(spec.num_docs, k);
  char year[32];
  for (int doc = 0; doc < spec.num_docs; ++doc) {
    Vector r(k);
    for (int t = 0; t < k; ++t) r(t) = prior.mu0(t) + sigma(t) * rng.normal();
    const Vector theta = softmax(r);
    out.theta.row(doc) = theta.transpose();
    Vector eta = d + out.topics.transpose() * theta;
    RawRecord rec;
    rec.id = "doc" + std::to_string(doc);
    rec.metadata = nlohmann::json::object();
    if (y > 0) {
      const int c = doc % y;
      eta += out.covariate_deviations.row(c).transpose();
      std::snprintf(year, sizeof(year), "%d", 2000 + c);
      rec.metadata["year"] = year;
      out.covariate_values.emplace_back(year);
    }
    if (spec.labels) {
      int label = 0;
      theta.maxCoeff(&label);
      if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
        label = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
      }
      rec.metadata["label"] = "class" + std::to_string(label);
      out.labels.push_back("class" + std::to_string(label));
    }
    Vector cumulative = softmax(eta);
    for (int j = 1; j < v; ++j) cumulative(j) += cumulative(j - 1);
    const int n = spec.min_length +
                  static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_length - spec.min_length + 1)));
    for (int t = 0; t < n; ++t) {
      rec.tokens.push_back(names[static_cast<std::size_t>(sample_categorical(cumulative, rng))]);
    }
    out.documents.push_back(rec.tokens);
    records.push_back(std::move(rec));
  }

  PreprocessOptions options;
  options.vocab_size = static_cast<std::size_t>(v);
  options.seed = spec.seed;
  if (spec.labels) options.schema.label_field = "label";
  if (y > 0) options.schema.covariate_fields.push_back({"year", CovariateEncoding::kOneHot});
  auto result = preprocess(records, options);
  out.corpus = std::move(result.corpus);
  return out;
}

void write_synthetic_jsonl(const SyntheticCorpus& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t i = 0; i < data.documents.size(); ++i) {
    nlohmann::json rec;
    rec["id"] = "doc" + std::to_string(i);
    rec["tokens"] = data.documents[i];
    if (!data.covariate_values.empty()) rec["year"] = data.covariate_values[i];
    if (!data.labels.empty()) rec["label"] = data.labels[i];
    out << rec.dump() << '\n';
  }
}

}  // namespace metatopic
