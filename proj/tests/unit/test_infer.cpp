#include "metatopic/infer.hpp"

#include "metatopic/synthetic.hpp"
#include "metatopic/train.hpp"
#include "support/fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace metatopic;
using namespace metatopic::testing;

namespace {

TrainedModel zero_model(int v, int k, int c = 0, int l = 0, bool categorical = false) {
  TrainedModel m;
  m.config = toy_config(v, k, c, l, false);
  m.config.covariates_categorical = categorical;
  m.config.alpha = (k - 1.0) / k;
  m.params = ModelParams<double>::zeros(m.config);
  m.vocabulary = Vocabulary(word_list(v));
  for (int j = 0; j < l; ++j) m.label_names.push_back("y" + std::to_string(j));
  for (int j = 0; j < c; ++j) m.covariate_names.push_back("year=" + std::to_string(2000 + j));
  return m;
}

Corpus one_doc(int v, std::vector<WordCount> counts, int c = 0) {
  Corpus corpus;
  corpus.vocabulary = Vocabulary(word_list(v));
  for (int j = 0; j < c; ++j) corpus.covariate_names.push_back("year=" + std::to_string(2000 + j));
  Document d;
  d.id = "only";
  d.counts = std::move(counts);
  for (const auto& wc : d.counts) d.n_tokens += wc.count;
  d.covariates.assign(static_cast<std::size_t>(c), 0.0);
  if (c > 0) d.covariates[0] = 1.0;
  corpus.documents.push_back(d);
  return corpus;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("prediction mode names") {
  CHECK(parse_prediction_mode("joint") == PredictionMode::kJointLabel);
  CHECK(parse_prediction_mode("conditional") == PredictionMode::kConditionalCovariate);
  CHECK(to_string(PredictionMode::kConditionalCovariate) == "conditional");
  CHECK_THROWS_AS(parse_prediction_mode("both"), std::invalid_argument);
}

TEST_CASE("zero-weight encoder gives uniform theta") {
  auto m = zero_model(5, 4);
  Rng rng(1);
  auto corpus = random_corpus(rng, 6, 5);
  const Matrix theta = infer_theta(m, corpus);
  CHECK(theta.rows() == 6);
  CHECK((theta.array() - 0.25).abs().maxCoeff() < 1e-15);
}

TEST_CASE("theta is deterministic and on the simplex") {
  TrainedModel m = zero_model(12, 4, 2, 3);
  Rng rng(2);
  m.params = random_params(m.config, rng, 0.7);
  auto corpus = random_corpus(rng, 40, 12, 2, 3);
  const Matrix a = infer_theta(m, corpus);
  const Matrix b = infer_theta(m, corpus);
  CHECK(a == b);
  CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(a.minCoeff() > 0.0);
  // the same document scored alone matches its row in the batch
  const std::vector<std::size_t> idx = {7};
  CHECK(infer_theta(m, corpus, idx).row(0) == a.row(7));

  ThetaOptions sampled;
  sampled.sampled = true;
  sampled.samples = 50;
  sampled.seed = 3;
  const Matrix s1 = infer_theta(m, corpus, sampled);
  CHECK(s1 == infer_theta(m, corpus, sampled));
  CHECK((s1.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(s1 != a);
}

TEST_CASE("joint rule: label bias dominance, ties and missing head") {
  auto m = zero_model(4, 3, 0, 2);
  m.params.label_output_bias << 5.0, -5.0;
  Rng rng(3);
  auto corpus = random_corpus(rng, 5, 4, 0, 2);
  for (std::size_t d = 0; d < 5; ++d) {
    const auto p = predict_label_joint(m, corpus, d);
    CHECK(p.label == 0);
    CHECK(p.scores.sum() == doctest::Approx(1.0));
  }
  m.params.label_output_bias.setZero();
  CHECK(predict_label_joint(m, corpus, 0).label == 0);  // exact tie
  m.params.label_output_bias << -1.0, 1.0;
  CHECK(predict_label_joint(m, corpus, 0).label == 1);

  auto unsupervised = zero_model(4, 3);
  CHECK_THROWS(predict_label_joint(unsupervised, corpus, 0));
  CHECK_THROWS(predict_labels(unsupervised, corpus, PredictionMode::kJointLabel));
}

TEST_CASE("argmax ties go to the lowest index") {
  Vector v(4);
  v << 1.0, 3.0, 3.0, 2.0;
  CHECK(argmax_lowest(v) == 1);
  v.setConstant(0.5);
  CHECK(argmax_lowest(v) == 0);
}

TEST_CASE("conditional rule on the hand-built V=3 fixture") {
  // Covariate 0 adds +10 to exactly the document's words (0 and 1).
  auto m = zero_model(3, 2, 2, 0, true);
  m.params.covariate_deviations << 10.0, 10.0, 0.0, 0.0, 0.0, 0.0;
  const auto corpus = one_doc(3, {{0, 2}, {1, 1}}, 2);
  const auto p = predict_label_conditional(m, corpus, 0);
  // Oracle: theta is uniform and B = 0, so p(word | y) = softmax(B_cov[y]).
  const long double lse0 = std::log(2 * std::exp(10.0L) + 1);
  const long double score0 = 2 * (10 - lse0) + (10 - lse0);
  const long double score1 = 3 * -std::log(3.0L);
  CHECK(p.label == 0);
  CHECK(p.scores(0) == doctest::Approx(static_cast<double>(score0)).epsilon(1e-13));
  CHECK(p.scores(1) == doctest::Approx(static_cast<double>(score1)).epsilon(1e-13));
  CHECK(p.scores(0) == doctest::Approx(-2.079509640801559).epsilon(1e-12));
  CHECK(p.scores(1) == doctest::Approx(-3.295836866004329).epsilon(1e-12));

  // Doubling the counts doubles every score (the encoder ignores them here).
  const auto doubled = one_doc(3, {{0, 4}, {1, 2}}, 2);
  const auto q = predict_label_conditional(m, doubled, 0);
  CHECK(q.label == 0);
  CHECK(q.scores(0) == doctest::Approx(2 * p.scores(0)).epsilon(1e-14));
  CHECK(q.scores(1) == doctest::Approx(2 * p.scores(1)).epsilon(1e-14));

  m.params.covariate_deviations.setZero();
  const auto tie = predict_label_conditional(m, corpus, 0);
  CHECK(tie.scores(0) == tie.scores(1));
  CHECK(tie.label == 0);
}

TEST_CASE("conditional rule requires categorical covariates") {
  auto m = zero_model(3, 2, 2, 0, false);
  const auto corpus = one_doc(3, {{0, 1}}, 2);
  CHECK_THROWS(predict_label_conditional(m, corpus, 0));
  auto none = zero_model(3, 2);
  CHECK_THROWS(predict_label_conditional(none, one_doc(3, {{0, 1}}), 0));
}

TEST_CASE("class names and gold classes per mode") {
  auto m = zero_model(3, 2, 3, 2, true);
  CHECK(prediction_class_names(m, PredictionMode::kJointLabel) == std::vector<std::string>{"y0", "y1"});
  CHECK(prediction_class_names(m, PredictionMode::kConditionalCovariate) ==
        std::vector<std::string>{"2000", "2001", "2002"});
  Rng rng(4);
  auto corpus = random_corpus(rng, 3, 3, 0, 2);
  corpus.covariate_names = m.covariate_names;
  corpus.documents[0].covariates = {0, 0, 1};
  corpus.documents[1].covariates = {1, 0, 0};
  corpus.documents[2].covariates = {0, 0, 0};
  corpus.documents[2].label.reset();
  const auto joint = gold_classes(m, corpus, PredictionMode::kJointLabel);
  CHECK(joint[0] == 0);
  CHECK(joint[1] == 1);
  CHECK(!joint[2]);
  const auto cond = gold_classes(m, corpus, PredictionMode::kConditionalCovariate);
  CHECK(cond[0] == 2);
  CHECK(cond[1] == 0);
  CHECK(!cond[2]);
}

TEST_CASE("uniform model perplexity equals V") {
  for (int v : {3, 17, 100}) {
    for (int k : {2, 5}) {
      auto m = zero_model(v, k);
      Rng rng(static_cast<std::uint64_t>(v * k));
      auto corpus = random_corpus(rng, 9, v);
      const auto r = perplexity(m, corpus);
      CHECK(r.bound == doctest::Approx(v).epsilon(1e-12));
      CHECK(r.samples == 20);
      CHECK(r.docs_scored == 9);
      CHECK(r.total_tokens == corpus.total_tokens());
    }
  }
}

TEST_CASE("perplexity is order-invariant and at least 1") {
  TrainedModel m = zero_model(15, 3, 0, 2);
  m.config.alpha = 1.0;
  Rng rng(6);
  m.params = random_params(m.config, rng, 0.4);
  auto corpus = random_corpus(rng, 30, 15, 0, 2);
  const Vector bounds = document_bounds(m, corpus);
  CHECK(bounds.maxCoeff() < 0.0);
  auto reversed = corpus;
  std::reverse(reversed.documents.begin(), reversed.documents.end());
  const Vector rb = document_bounds(m, reversed);
  // Equal up to rounding: a document's row position changes the matmul kernel path.
  for (Eigen::Index i = 0; i < bounds.size(); ++i) {
    CHECK(rb(bounds.size() - 1 - i) == doctest::Approx(bounds(i)).epsilon(1e-13));
  }
  const auto a = perplexity(m, corpus), b = perplexity(m, reversed);
  CHECK(a.bound == doctest::Approx(b.bound).epsilon(1e-13));
  CHECK(a.bound >= 1.0);
  PerplexityOptions with_label;
  with_label.include_label_term = true;
  CHECK(perplexity(m, corpus, with_label).bound > a.bound);

  Corpus empty = corpus;
  empty.documents.clear();
  CHECK_THROWS(perplexity(m, empty));
}

TEST_CASE("a trained model beats the background-only model on held-out data") {
  SyntheticSpec spec;
  spec.num_docs = 600;
  spec.seed = 3;
  const auto data = generate_synthetic(spec);
  const auto split = split_corpus(data.corpus, {0.7, 0.1, 0.2}, 1);
  TrainConfig config;
  config.num_topics = 3;
  config.epochs = 100;
  config.batch_size = 50;
  config.embedding_dim = 32;
  config.seed = 2;
  const auto trained = train(split.train, nullptr, config).model;

  TrainedModel background = zero_model(static_cast<int>(data.corpus.vocab_size()), 3);
  background.vocabulary = data.corpus.vocabulary;
  background.params.background = background_log_frequency(split.train);
  const double p_trained = perplexity(trained, split.test).bound;
  const double p_background = perplexity(background, split.test).bound;
  MESSAGE("trained " << p_trained << " background-only " << p_background);
  CHECK(p_trained < p_background);
}

TEST_CASE("prediction and theta TSV layout") {
  TempDir dir("tsv");
  auto m = zero_model(4, 2, 0, 2);
  m.params.label_output_bias << 0.0, 1.0;
  Rng rng(3);
  auto corpus = random_corpus(rng, 2, 4, 0, 2);
  const auto preds = predict_labels(m, corpus, PredictionMode::kJointLabel);
  write_predictions_tsv(dir / "p.tsv", corpus, preds, prediction_class_names(m, PredictionMode::kJointLabel));
  const auto text = read_file(dir / "p.tsv");
  CHECK(text.rfind("doc_id\tpredicted_label\tscore_y0\tscore_y1\nd0\ty1\t", 0) == 0);
  write_theta_tsv(dir / "t.tsv", corpus, infer_theta(m, corpus));
  CHECK(read_file(dir / "t.tsv") == "doc_id\ttheta_1\ttheta_2\nd0\t0.5\t0.5\nd1\t0.5\t0.5\n");
}
