#pragma once

// Dense numeric kernels used by the topic model: row-wise nonlinearities,
// batch normalization with running statistics, a portable seeded RNG, and a
// finite-difference gradient checker. Everything is templated on the scalar
// type so the same code runs in float (training), double (default) and
// long double (test oracles).

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metatopic {

template <class T>
using MatrixT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using VectorT = Eigen::Matrix<T, Eigen::Dynamic, 1>;

using Matrix = MatrixT<double>;
using Vector = VectorT<double>;

enum class Mode { kTrain, kEval };

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Throws NumericError naming `what` if any entry is NaN or infinite.
template <class Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite value in " + std::string(what));
  }
}

void require_shape(std::string_view what, Eigen::Index rows, Eigen::Index cols,
                   Eigen::Index want_rows, Eigen::Index want_cols);

// ---- nonlinearities -------------------------------------------------------

template <class T>
T softplus(T x);
template <class T>
T sigmoid(T x);

template <class T>
MatrixT<T> softplus(const MatrixT<T>& x);
template <class T>
MatrixT<T> softplus_backward(const MatrixT<T>& x, const MatrixT<T>& dy);

/// Row-wise softmax with max subtraction.
template <class T>
MatrixT<T> softmax_rows(const MatrixT<T>& x);
template <class T>
MatrixT<T> log_softmax_rows(const MatrixT<T>& x);
/// Given y = softmax_rows(x) and dL/dy, returns dL/dx.
template <class T>
MatrixT<T> softmax_rows_backward(const MatrixT<T>& y, const MatrixT<T>& dy);
/// Given logp = log_softmax_rows(x) and dL/dlogp, returns dL/dx.
template <class T>
MatrixT<T> log_softmax_rows_backward(const MatrixT<T>& logp, const MatrixT<T>& dy);

/// Vector softmax. Throws NumericError on non-finite input.
/// Shortest decimal text that reads back to exactly `v`.
std::string format_real(double v);

Vector softmax(const Vector& v);
Vector log_softmax(const Vector& v);
Vector softplus(const Vector& v);

// ---- batch normalization --------------------------------------------------

// Learnable affine (gamma, beta) plus running statistics, all stored as 1 x d
// row matrices so they travel with the other parameters.
template <class T>
struct BatchNormState {
  MatrixT<T> gamma;
  MatrixT<T> beta;
  MatrixT<T> running_mean;
  MatrixT<T> running_var;
  double momentum = 0.99;
  double epsilon = 1e-5;

  static BatchNormState identity(Eigen::Index width);
  Eigen::Index width() const { return gamma.cols(); }
};

template <class T>
struct BatchNormCache {
  MatrixT<T> x_hat;
  MatrixT<T> inv_std;     // 1 x d
  MatrixT<T> batch_mean;  // 1 x d, train mode only
  MatrixT<T> batch_var;   // 1 x d, biased estimator
  Mode mode = Mode::kEval;
};

/// Train mode normalizes by batch statistics (requires >= 2 rows); eval mode
/// uses the running statistics. The state is never mutated here; call
/// batchnorm_update_running with the cache to advance the running stats.
template <class T>
MatrixT<T> batchnorm_forward(const MatrixT<T>& x, const BatchNormState<T>& state, Mode mode,
                             BatchNormCache<T>* cache = nullptr);

/// running = momentum * running + (1 - momentum) * batch.
template <class T>
void batchnorm_update_running(BatchNormState<T>& state, const BatchNormCache<T>& cache);

/// Returns dL/dx and accumulates into dgamma / dbeta (both 1 x d).
template <class T>
MatrixT<T> batchnorm_backward(const MatrixT<T>& dy, const BatchNormState<T>& state,
                              const BatchNormCache<T>& cache, MatrixT<T>& dgamma,
                              MatrixT<T>& dbeta);

// ---- random numbers -------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view s);

// mt19937_64 for raw bits; uniforms and normals are derived here rather than
// through <random> distributions, whose output is implementation-defined.
// Normals use the Box-Muller transform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent stream derived from (seed, stream).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double normal();
  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

Matrix sample_standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng);

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(items[i - 1], items[j]);
  }
}

// ---- gradient checking ----------------------------------------------------

enum class Stencil { kCentral2, kCentral4 };

/// Compares `analytic` against central finite differences of `f` at `point`
/// and returns max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-8). kCentral2 is the
/// plain (f(x+h) - f(x-h)) / 2h; kCentral4 is the five-point stencil.
template <class T>
double check_gradient(const std::function<T(std::span<const T>)>& f, std::span<const T> point,
                      std::span<const T> analytic, T h, Stencil stencil = Stencil::kCentral2,
                      std::vector<double>* per_coordinate = nullptr);

}  // namespace metatopic
