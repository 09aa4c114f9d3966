#include "metatopic/numkit.hpp"

#include <charconv>
#include <cmath>
#include <numbers>

namespace metatopic {

std::string format_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

void require_shape(std::string_view what, Eigen::Index rows, Eigen::Index cols,
                   Eigen::Index want_rows, Eigen::Index want_cols) {
  if (rows != want_rows || cols != want_cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(want_rows) + "x" +
                     std::to_string(want_cols) + ", got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

template <class T>
T softplus(T x) {
  using std::abs;
  using std::exp;
  using std::log1p;
  return (x > T(0) ? x : T(0)) + log1p(exp(-abs(x)));
}

template <class T>
T sigmoid(T x) {
  using std::exp;
  if (x >= T(0)) return T(1) / (T(1) + exp(-x));
  T e = exp(x);
  return e / (T(1) + e);
}

template <class T>
MatrixT<T> softplus(const MatrixT<T>& x) {
  return x.unaryExpr([](T v) { return softplus(v); });
}

template <class T>
MatrixT<T> softplus_backward(const MatrixT<T>& x, const MatrixT<T>& dy) {
  return dy.cwiseProduct(x.unaryExpr([](T v) { return sigmoid(v); }));
}

template <class T>
MatrixT<T> softmax_rows(const MatrixT<T>& x) {
  MatrixT<T> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    T m = x.row(i).maxCoeff();
    out.row(i) = (x.row(i).array() - m).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <class T>
MatrixT<T> log_softmax_rows(const MatrixT<T>& x) {
  using std::log;
  MatrixT<T> out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    T m = x.row(i).maxCoeff();
    const auto shifted = x.row(i).array() - m;
    out.row(i) = shifted - log(shifted.exp().sum());
  }
  return out;
}

template <class T>
MatrixT<T> softmax_rows_backward(const MatrixT<T>& y, const MatrixT<T>& dy) {
  MatrixT<T> dx(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    T dot = y.row(i).dot(dy.row(i));
    dx.row(i) = y.row(i).array() * (dy.row(i).array() - dot);
  }
  return dx;
}

template <class T>
MatrixT<T> log_softmax_rows_backward(const MatrixT<T>& logp, const MatrixT<T>& dy) {
  MatrixT<T> dx(logp.rows(), logp.cols());
  for (Eigen::Index i = 0; i < logp.rows(); ++i) {
    T total = dy.row(i).sum();
    dx.row(i) = dy.row(i).array() - logp.row(i).array().exp() * total;
  }
  return dx;
}

Vector softmax(const Vector& v) {
  require_finite(v, "softmax input");
  Matrix row = v.transpose();
  return softmax_rows<double>(row).transpose();
}

Vector log_softmax(const Vector& v) {
  require_finite(v, "log_softmax input");
  Matrix row = v.transpose();
  return log_softmax_rows<double>(row).transpose();
}

Vector softplus(const Vector& v) {
  return v.unaryExpr([](double x) { return softplus(x); });
}

// ---- batch normalization --------------------------------------------------

template <class T>
BatchNormState<T> BatchNormState<T>::identity(Eigen::Index width) {
  BatchNormState<T> s;
  s.gamma = MatrixT<T>::Ones(1, width);
  s.beta = MatrixT<T>::Zero(1, width);
  s.running_mean = MatrixT<T>::Zero(1, width);
  s.running_var = MatrixT<T>::Ones(1, width);
  return s;
}

template <class T>
MatrixT<T> batchnorm_forward(const MatrixT<T>& x, const BatchNormState<T>& state, Mode mode,
                             BatchNormCache<T>* cache) {
  using std::sqrt;
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  require_shape("batchnorm gamma", state.gamma.rows(), state.gamma.cols(), 1, d);
  const T eps = static_cast<T>(state.epsilon);

  MatrixT<T> mean;
  MatrixT<T> var;
  if (mode == Mode::kTrain) {
    if (n < 2) throw std::invalid_argument("batchnorm in train mode needs a batch of at least 2");
    mean = x.colwise().mean();
    var = (x.rowwise() - mean.row(0)).array().square().colwise().mean();
  } else {
    mean = state.running_mean;
    var = state.running_var;
  }
  MatrixT<T> inv_std = (var.array() + eps).rsqrt();
  MatrixT<T> x_hat = ((x.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array());
  MatrixT<T> y =
      (x_hat.array().rowwise() * state.gamma.row(0).array()).rowwise() + state.beta.row(0).array();
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
    if (mode == Mode::kTrain) {
      cache->batch_mean = std::move(mean);
      cache->batch_var = std::move(var);
    } else {
      cache->batch_mean.resize(0, 0);
      cache->batch_var.resize(0, 0);
    }
  }
  return y;
}

template <class T>
void batchnorm_update_running(BatchNormState<T>& state, const BatchNormCache<T>& cache) {
  if (cache.mode != Mode::kTrain) return;
  const T m = static_cast<T>(state.momentum);
  state.running_mean = m * state.running_mean + (T(1) - m) * cache.batch_mean;
  state.running_var = m * state.running_var + (T(1) - m) * cache.batch_var;
}

template <class T>
MatrixT<T> batchnorm_backward(const MatrixT<T>& dy, const BatchNormState<T>& state,
                              const BatchNormCache<T>& cache, MatrixT<T>& dgamma,
                              MatrixT<T>& dbeta) {
  const Eigen::Index n = dy.rows();
  dgamma += dy.cwiseProduct(cache.x_hat).colwise().sum();
  dbeta += dy.colwise().sum();
  MatrixT<T> dx_hat = dy.array().rowwise() * state.gamma.row(0).array();
  if (cache.mode == Mode::kEval) {
    return dx_hat.array().rowwise() * cache.inv_std.row(0).array();
  }
  const T inv_n = T(1) / static_cast<T>(n);
  const MatrixT<T> mean_dx_hat = dx_hat.colwise().sum() * inv_n;
  const MatrixT<T> mean_dx_hat_xhat = dx_hat.cwiseProduct(cache.x_hat).colwise().sum() * inv_n;
  MatrixT<T> dx = dx_hat.array().rowwise() - mean_dx_hat.row(0).array();
  dx.array() -= cache.x_hat.array().rowwise() * mean_dx_hat_xhat.row(0).array();
  // The columns of dx sum to zero exactly in theory; re-centering removes the
  // rounding residue so gradients of per-column shifts stay at zero.
  const MatrixT<T> residue = dx.colwise().sum() * inv_n;
  dx.array().rowwise() -= residue.row(0).array();
  dx.array().rowwise() *= cache.inv_std.row(0).array();
  return dx;
}

// ---- random numbers -------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : engine_(seed), seed_(seed) {}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  return Rng(splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 1.0 - uniform();  // (0, 1]
  double u2 = uniform();
  double radius = std::sqrt(-2.0 * std::log(u1));
  double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

Matrix sample_standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  return m;
}

// ---- gradient checking ----------------------------------------------------

template <class T>
double check_gradient(const std::function<T(std::span<const T>)>& f, std::span<const T> point,
                      std::span<const T> analytic, T h, Stencil stencil,
                      std::vector<double>* per_coordinate) {
  using std::abs;
  if (analytic.size() != point.size()) {
    throw ShapeError("check_gradient: analytic gradient size mismatch");
  }
  std::vector<T> x(point.begin(), point.end());
  auto eval_at = [&](std::size_t i, T offset) {
    const T saved = x[i];
    x[i] = saved + offset;
    T v = f(std::span<const T>(x));
    x[i] = saved;
    return v;
  };
  double worst = 0.0;
  if (per_coordinate) per_coordinate->assign(point.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    T numeric;
    if (stencil == Stencil::kCentral2) {
      numeric = (eval_at(i, h) - eval_at(i, -h)) / (T(2) * h);
    } else {
      numeric = (-eval_at(i, T(2) * h) + T(8) * eval_at(i, h) - T(8) * eval_at(i, -h) +
                 eval_at(i, T(-2) * h)) /
                (T(12) * h);
    }
    const T a = analytic[i];
    const T denom = std::max({abs(a), abs(numeric), T(1e-8)});
    const double err = static_cast<double>(abs(a - numeric) / denom);
    if (per_coordinate) (*per_coordinate)[i] = err;
    worst = std::max(worst, err);
  }
  return worst;
}

#define METATOPIC_INSTANTIATE_NUMKIT(T)                                                        \
  template T softplus<T>(T);                                                                   \
  template T sigmoid<T>(T);                                                                    \
  template MatrixT<T> softplus<T>(const MatrixT<T>&);                                          \
  template MatrixT<T> softplus_backward<T>(const MatrixT<T>&, const MatrixT<T>&);              \
  template MatrixT<T> softmax_rows<T>(const MatrixT<T>&);                                      \
  template MatrixT<T> log_softmax_rows<T>(const MatrixT<T>&);                                  \
  template MatrixT<T> softmax_rows_backward<T>(const MatrixT<T>&, const MatrixT<T>&);          \
  template MatrixT<T> log_softmax_rows_backward<T>(const MatrixT<T>&, const MatrixT<T>&);      \
  template struct BatchNormState<T>;                                                           \
  template MatrixT<T> batchnorm_forward<T>(const MatrixT<T>&, const BatchNormState<T>&, Mode,  \
                                           BatchNormCache<T>*);                                \
  template void batchnorm_update_running<T>(BatchNormState<T>&, const BatchNormCache<T>&);     \
  template MatrixT<T> batchnorm_backward<T>(const MatrixT<T>&, const BatchNormState<T>&,       \
                                            const BatchNormCache<T>&, MatrixT<T>&,             \
                                            MatrixT<T>&);                                      \
  template double check_gradient<T>(const std::function<T(std::span<const T>)>&,               \
                                    std::span<const T>, std::span<const T>, T, Stencil,        \
                                    std::vector<double>*);

METATOPIC_INSTANTIATE_NUMKIT(float)
METATOPIC_INSTANTIATE_NUMKIT(double)
METATOPIC_INSTANTIATE_NUMKIT(long double)

#undef METATOPIC_INSTANTIATE_NUMKIT

}  // namespace metatopic
