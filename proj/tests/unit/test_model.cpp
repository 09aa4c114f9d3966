#include "metatopic/model.hpp"

#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace metatopic;
using namespace metatopic::testing;

namespace {

std::vector<std::size_t> all_docs(const Corpus& c) {
  std::vector<std::size_t> idx(c.num_docs());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

struct GradCase {
  const char* name;
  int c;
  int l;
  bool interactions;
  int cov_embed;
  bool background;
  Mode mode;
  double lambda;
  int samples;
};

}  // namespace

TEST_CASE("prior parameters follow the Laplace approximation") {
  auto p = prior_params(0.5, 2);
  CHECK(p.sigma0_sq(0) == doctest::Approx(1.0));
  CHECK(p.mu0.isZero());
  CHECK(prior_params(1.0, 50).sigma0_sq(7) == doctest::Approx(0.98));
  for (int k : {2, 3, 10, 50}) {
    const double a = (k - 1.0) / k;
    CHECK(prior_params(a, k).sigma0_sq.isApprox(Vector::Ones(k), 1e-15));
  }
  CHECK_THROWS_AS(prior_params(1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(prior_params(0.0, 3), std::invalid_argument);
}

TEST_CASE("zero encoder yields zero posterior parameters") {
  auto cfg = toy_config(5, 3, 0, 0, false);
  auto p = ModelParams<double>::zeros(cfg);
  Rng rng(1);
  auto corpus = random_corpus(rng, 4, 5);
  const auto idx = all_docs(corpus);
  auto post = encode(p, cfg, make_batch<double>(corpus, idx, cfg), Mode::kEval);
  CHECK(post.mu.isZero(0.0));
  CHECK(post.log_var.isZero(0.0));
}

TEST_CASE("encoder consumes raw counts") {
  auto cfg = toy_config(5, 3, 0, 0, false);
  Rng rng(2);
  auto p = random_params(cfg, rng, 0.5);
  auto corpus = random_corpus(rng, 1, 5);
  auto doubled = corpus;
  for (auto& wc : doubled.documents[0].counts) wc.count *= 2;
  doubled.documents[0].n_tokens *= 2;
  const std::size_t idx[] = {0};
  auto a = encode(p, cfg, make_batch<double>(corpus, idx, cfg), Mode::kEval);
  auto b = encode(p, cfg, make_batch<double>(doubled, idx, cfg), Mode::kEval);
  CHECK_FALSE(a.mu.isApprox(b.mu));
}

TEST_CASE("reparameterize") {
  Matrix mu(1, 3), lv(1, 3), eps(1, 3);
  mu << 0.5, -1.0, 2.0;
  lv << 0.3, -0.7, 1.1;
  eps.setZero();
  CHECK(reparameterize(mu, lv, eps) == mu);
  eps << 0.1, -2.0, 3.0;
  CHECK(reparameterize(Matrix::Zero(1, 3), Matrix::Zero(1, 3), eps) == eps);
  CHECK(reparameterize(mu, lv, eps)(0, 2) == doctest::Approx(2.0 + std::exp(0.55) * 3.0));
  CHECK_THROWS_AS(reparameterize(mu, lv, Matrix::Zero(2, 3)), ShapeError);
}

TEST_CASE("sample mean of r approaches mu") {
  Rng rng(11);
  const int n = 100000;
  Matrix mu = Matrix::Constant(n, 1, 0.7);
  Matrix lv = Matrix::Constant(n, 1, std::log(2.0));
  const Matrix r = reparameterize(mu, lv, sample_standard_normal(n, 1, rng));
  const double se = std::sqrt(2.0 / n);
  CHECK(std::abs(r.mean() - 0.7) < 3 * se);
}

TEST_CASE("decode with zero deviations is the background distribution") {
  auto cfg = toy_config(4, 2, 2, 0, true);
  auto p = ModelParams<double>::zeros(cfg);
  p.background << 0.1, -0.4, 1.2, 0.0;
  Matrix theta(2, 2), cov(2, 2);
  theta << 0.3, 0.7, 0.9, 0.1;
  cov << 1, 0, 0.2, 0.5;
  const Matrix logp = decode(p, cfg, theta, cov, 0.0, Mode::kEval);
  const Vector want = log_softmax(Vector(p.background.row(0).transpose()));
  for (int i = 0; i < 2; ++i) CHECK(logp.row(i).transpose().isApprox(want, 1e-14));
}

TEST_CASE("decode with one topic adds the topic row") {
  auto cfg = toy_config(3, 1, 0, 0, false);
  auto p = ModelParams<double>::zeros(cfg);
  p.background << 0.2, 0.5, -0.3;
  p.topic_deviations << 1.0, -1.0, 0.25;
  Matrix theta = Matrix::Ones(1, 1);
  const Matrix logp = decode(p, cfg, theta, Matrix::Zero(1, 0), 0.0, Mode::kEval);
  Vector eta(3);
  eta << 1.2, -0.5, -0.05;
  CHECK(logp.row(0).transpose().isApprox(log_softmax(eta), 1e-14));
}

TEST_CASE("decode matches a hand evaluation with covariates and interactions") {
  // K=2, C=2, V=3. Interaction rows are ordered (k=0,c=0), (0,1), (1,0), (1,1).
  auto cfg = toy_config(3, 2, 2, 0, true);
  auto p = ModelParams<double>::zeros(cfg);
  p.background << 0.5, -0.5, 0.0;
  p.topic_deviations << 1.0, 0.0, -1.0,
                        0.0, 2.0, 0.5;
  p.covariate_deviations << 0.3, 0.0, 0.0,
                            0.0, 0.0, -0.6;
  p.interaction_deviations << 1.0, 0.0, 0.0,
                              0.0, 1.0, 0.0,
                              0.0, 0.0, 1.0,
                              2.0, 2.0, 2.0;
  Matrix theta(1, 2), cov(1, 2);
  theta << 0.25, 0.75;
  cov << 1.0, 2.0;
  // By hand:
  // d                     = ( 0.5,   -0.5,   0.0  )
  // theta B               = ( 0.25,   1.5,   0.125)
  // c B_cov               = ( 0.3,    0.0,  -1.2  )
  // theta(x)c = (0.25, 0.5, 0.75, 1.5)
  // (theta(x)c) B_int     = ( 0.25+3, 0.5+3, 0.75+3) = (3.25, 3.5, 3.75)
  // eta                   = ( 4.3,    4.5,   2.675)
  Vector eta(3);
  eta << 4.3, 4.5, 2.675;
  const Matrix logp = decode(p, cfg, theta, cov, 0.0, Mode::kEval);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(logp(0, j) - log_softmax(eta)(j)) < 1e-12);
}

TEST_CASE("decode rejects points off the simplex") {
  auto cfg = toy_config(3, 2, 0, 0, false);
  auto p = ModelParams<double>::zeros(cfg);
  Matrix theta(1, 2);
  theta << 0.5, 0.6;
  CHECK_THROWS(decode(p, cfg, theta, Matrix::Zero(1, 0), 0.0, Mode::kEval));
  theta << 0.5, 0.5 + 5e-6;
  CHECK_NOTHROW(decode(p, cfg, theta, Matrix::Zero(1, 0), 0.0, Mode::kEval));
}

TEST_CASE("eval-mode decode is independent of batch composition") {
  auto cfg = toy_config(6, 3, 0, 0, false);
  Rng rng(3);
  auto p = random_params(cfg, rng, 0.4);
  Matrix theta = softmax_rows<double>(sample_standard_normal(5, 3, rng));
  const double lambda = 0.6;
  const Matrix all = decode(p, cfg, theta, Matrix::Zero(5, 0), lambda, Mode::kEval);
  for (int i = 0; i < 5; ++i) {
    const Matrix one = decode(p, cfg, theta.row(i), Matrix::Zero(1, 0), lambda, Mode::kEval);
    CHECK(one.row(0).isApprox(all.row(i), 1e-14));
  }
}

TEST_CASE("label head") {
  auto cfg = toy_config(4, 3, 0, 2, false);
  auto p = ModelParams<double>::zeros(cfg);
  Matrix theta(1, 3);
  theta << 0.2, 0.3, 0.5;
  auto probs = predict_label_distribution(p, cfg, theta);
  CHECK(probs(0, 0) == doctest::Approx(0.5));
  p.label_output_bias << 10, -10;
  probs = predict_label_distribution(p, cfg, theta);
  CHECK(probs(0, 0) > 0.999999);
  CHECK(probs.row(0).sum() == doctest::Approx(1.0));
}

TEST_CASE("closed-form KL") {
  auto prior = prior_params(1.0, 3);
  CHECK(kl_divergence(prior.mu0, prior.sigma0_sq.array().log().matrix(), prior) ==
        doctest::Approx(0.0).epsilon(1e-15));
  PriorSpec unit{1.0, Vector::Zero(1), Vector::Ones(1)};
  Vector mu(1), lv(1);
  mu << 1.0;
  lv << 0.0;
  CHECK(kl_divergence(mu, lv, unit) == doctest::Approx(0.5));
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    const Vector m = sample_standard_normal(1, 3, rng).row(0).transpose();
    const Vector l = sample_standard_normal(1, 3, rng).row(0).transpose();
    CHECK(kl_divergence(m, l, prior) >= 0.0);
  }
}

TEST_CASE("uniform model bound is -N log V") {
  const int v = 7, k = 4;
  auto cfg = toy_config(v, k, 0, 0, false);
  cfg.alpha = (k - 1.0) / k;
  cfg.use_background = false;
  auto p = ModelParams<double>::zeros(cfg);
  Rng rng(9);
  auto corpus = random_corpus(rng, 3, v);
  for (std::size_t d = 0; d < 3; ++d) {
    const Matrix eps = sample_standard_normal(5, k, rng);
    auto est = elbo(p, cfg, corpus, d, eps, 0.0, Mode::kEval, false);
    CHECK(est.kl == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(est.bound == doctest::Approx(-corpus.documents[d].n_tokens * std::log(double(v))).epsilon(1e-13));
  }
}

TEST_CASE("larger S reduces the variance of the bound") {
  auto cfg = toy_config(8, 3, 0, 0, false);
  Rng rng(21);
  auto p = random_params(cfg, rng, 0.5);
  auto corpus = random_corpus(rng, 1, 8);
  auto variance = [&](int s) {
    std::vector<double> v;
    for (int seed = 0; seed < 200; ++seed) {
      Rng r(1000 + seed);
      v.push_back(elbo(p, cfg, corpus, 0, sample_standard_normal(s, 3, r), 0.0, Mode::kEval).bound);
    }
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return acc / (v.size() - 1);
  };
  CHECK(variance(100) < variance(1));
}

TEST_CASE("elbo rejects empty noise") {
  auto cfg = toy_config(4, 2, 0, 0, false);
  auto p = ModelParams<double>::zeros(cfg);
  Rng rng(1);
  auto corpus = random_corpus(rng, 1, 4);
  CHECK_THROWS(elbo(p, cfg, corpus, 0, Matrix::Zero(0, 2), 0.0, Mode::kEval));
}

TEST_CASE("theta stays on the simplex") {
  auto cfg = toy_config(10, 4, 2, 2, true);
  Rng rng(31);
  auto p = random_params(cfg, rng, 1.0);
  auto corpus = random_corpus(rng, 6, 10, 2, 2);
  const auto idx = all_docs(corpus);
  auto batch = make_batch<double>(corpus, idx, cfg);
  ForwardCache<double> cache;
  elbo_forward<double>(p, cfg, batch, sample_standard_normal(18, 4, rng), {Mode::kTrain, 0.3, true},
                       &cache);
  for (Eigen::Index i = 0; i < cache.theta.rows(); ++i) {
    CHECK(std::abs(cache.theta.row(i).sum() - 1.0) < 1e-6);
    CHECK((cache.theta.row(i).array() > 0.0).all());
  }
}

TEST_CASE("full ELBO gradient matches finite differences") {
  const GradCase cases[] = {
      {"unsupervised train lambda=1", 0, 0, false, 0, true, Mode::kTrain, 1.0, 1},
      {"unsupervised eval lambda=0", 0, 0, false, 0, true, Mode::kEval, 0.0, 1},
      {"full train lambda=0.5", 2, 2, true, 0, true, Mode::kTrain, 0.5, 1},
      {"full eval lambda=0.5 S=3", 2, 2, true, 0, true, Mode::kEval, 0.5, 3},
      {"projected covariates", 2, 2, true, 2, false, Mode::kTrain, 0.25, 2},
      {"labels only", 0, 2, false, 0, true, Mode::kTrain, 0.0, 1},
  };
  for (const auto& gc : cases) {
    CAPTURE(gc.name);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      Rng rng(seed);
      auto cfg = toy_config(20, 3, gc.c, gc.l, gc.interactions, gc.cov_embed);
      cfg.use_background = gc.background;
      auto corpus = random_corpus(rng, 5, 20, gc.c, gc.l);
      auto params = random_params(cfg, rng, 0.3);
      const Matrix eps = sample_standard_normal(5 * gc.samples, 3, rng);
      auto report = check_elbo_gradient(params, cfg, corpus, eps, {gc.mode, gc.lambda, true});
      CAPTURE(report.worst_tensor);
      CHECK(report.max_error < 1e-4);
    }
  }
}

TEST_CASE("unsupervised special case trains only the core tensors") {
  auto cfg = toy_config(10, 3, 0, 0, false);
  const std::vector<std::string> want = {"word_embedding", "mu_weight", "mu_bias",
                                         "log_var_weight", "log_var_bias", "mu_norm.gamma",
                                         "mu_norm.beta", "log_var_norm.gamma", "log_var_norm.beta",
                                         "background", "topic_deviations", "eta_norm.gamma",
                                         "eta_norm.beta"};
  CHECK(trainable_tensor_names(cfg) == want);
  cfg.freeze_word_vectors = true;
  cfg.use_background = false;
  auto names = trainable_tensor_names(cfg);
  CHECK(std::find(names.begin(), names.end(), "word_embedding") == names.end());
  CHECK(std::find(names.begin(), names.end(), "background") == names.end());
}

TEST_CASE("disabled components match zeroed components") {
  // A model with covariates whose covariate tensors are zero, fed zero
  // covariates, must agree with the covariate-free model.
  Rng rng(41);
  auto base = toy_config(12, 3, 0, 0, false);
  auto with = toy_config(12, 3, 2, 0, true);
  auto p = random_params(base, rng, 0.4);
  auto q = ModelParams<double>::zeros(with);
  for_each_tensor(
      [](const TensorInfo&, const Matrix& src, Matrix& dst) {
        if (src.size() > 0) dst = src;
      },
      p, q);
  auto corpus = random_corpus(rng, 4, 12);
  const auto idx = all_docs(corpus);
  const Matrix eps = sample_standard_normal(4, 3, rng);
  auto a = elbo_forward<double>(p, base, make_batch<double>(corpus, idx, base), eps,
                                {Mode::kTrain, 0.5, true});
  auto b = elbo_forward<double>(q, with, make_batch<double>(corpus, idx, with), eps,
                                {Mode::kTrain, 0.5, true});
  CHECK(a.elbo == b.elbo);
}

TEST_CASE("make_batch checks widths") {
  Rng rng(1);
  auto corpus = random_corpus(rng, 3, 5, 2, 0);
  auto cfg = toy_config(5, 2, 3, 0, false);
  const auto idx = all_docs(corpus);
  CHECK_THROWS_AS(make_batch<double>(corpus, idx, cfg), ShapeError);
  auto bare = random_corpus(rng, 3, 5);
  auto b = make_batch<double>(bare, idx, cfg);
  CHECK(b.covariates.isZero(0.0));
}
