#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "eventfuse/types.hpp"

namespace eventfuse {

/// Matrix product with explicit shape checking. The inner dimension is
/// accumulated sequentially per output entry, so the result is reproducible
/// bit-for-bit and matches a naive triple-loop evaluation exactly.
Matrix matmul(const Matrix& a, const Matrix& b);

/// a * x for a column vector x, same accumulation order as matmul.
Vector matvec(const Matrix& a, const Vector& x);

/// qᵀ · w · x, the bilinear score used by the attention blocks.
Scalar bilinear(const Vector& q, const Matrix& w, const Vector& x);

/// Numerically safe softmax (max-subtracted). Output is non-negative and
/// sums to 1 within 1e-12. Throws ArgumentError on empty input.
Vector softmax(const Vector& scores);

enum class Activation { Tanh, Sigmoid };

/// Entry-wise tanh or logistic sigmoid.
Matrix elementwise(Activation fn, const Matrix& m);

/// Overflow-safe logistic sigmoid, output strictly inside (0, 1) for finite x.
Scalar sigmoid(Scalar x);

/// Central-difference gradient of a scalar functional: entry (i,j) is
/// (f(at + h·e_ij) − f(at − h·e_ij)) / (2h). Throws NumericError if f
/// produces a non-finite value at any probe point.
Matrix finite_difference_grad(const std::function<Scalar(const Matrix&)>& f,
                              const Matrix& at, Scalar h);

/// Deterministic pseudo-random source (splitmix64). Equal seeds produce
/// equal draw sequences on every platform; instances are single-owner.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed), seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform draw in [0, 1).
  Scalar uniform();

  /// Uniform draw in [lo, hi).
  Scalar uniform(Scalar lo, Scalar hi);

  /// Standard normal draw (Box-Muller, spare cached).
  Scalar normal();

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
    }
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t state_;
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  Scalar spare_ = 0.0;
};

}  // namespace eventfuse
