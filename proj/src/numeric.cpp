#include "eventfuse/numeric.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "eventfuse/errors.hpp"

namespace eventfuse {

namespace {

std::string shape_of(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) {
    throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: incompatible shapes " + shape_of(a) + " and " +
                     shape_of(b));
  }
  Matrix out(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < b.cols(); ++j) {
      Scalar acc = 0.0;
      for (Index k = 0; k < a.cols(); ++k) {
        acc += a(i, k) * b(k, j);
      }
      out(i, j) = acc;
    }
  }
  require_finite(out, "matmul");
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    std::ostringstream os;
    os << "matvec: incompatible shapes " << shape_of(a) << " and " << x.size()
       << "x1";
    throw ShapeError(os.str());
  }
  Vector out(a.rows());
  for (Index i = 0; i < a.rows(); ++i) {
    Scalar acc = 0.0;
    for (Index k = 0; k < a.cols(); ++k) {
      acc += a(i, k) * x(k);
    }
    out(i) = acc;
  }
  if (!out.allFinite()) {
    throw NumericError("matvec produced a non-finite value");
  }
  return out;
}

Scalar bilinear(const Vector& q, const Matrix& w, const Vector& x) {
  if (w.rows() != q.size() || w.cols() != x.size()) {
    std::ostringstream os;
    os << "bilinear: weight " << shape_of(w) << " does not match vectors "
       << q.size() << " and " << x.size();
    throw ShapeError(os.str());
  }
  Scalar acc = 0.0;
  for (Index i = 0; i < w.rows(); ++i) {
    Scalar row = 0.0;
    for (Index j = 0; j < w.cols(); ++j) {
      row += w(i, j) * x(j);
    }
    acc += q(i) * row;
  }
  if (!std::isfinite(acc)) {
    throw NumericError("bilinear produced a non-finite value");
  }
  return acc;
}

Vector softmax(const Vector& scores) {
  if (scores.size() == 0) {
    throw ArgumentError("softmax: empty input");
  }
  if (!scores.allFinite()) {
    throw NumericError("softmax: non-finite score");
  }
  const Scalar peak = scores.maxCoeff();
  Vector out(scores.size());
  Scalar total = 0.0;
  for (Index i = 0; i < scores.size(); ++i) {
    out(i) = std::exp(scores(i) - peak);
    total += out(i);
  }
  out /= total;
  return out;
}

Scalar sigmoid(Scalar x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const Scalar e = std::exp(x);
  return e / (1.0 + e);
}

Matrix elementwise(Activation fn, const Matrix& m) {
  if (!m.allFinite()) {
    throw NumericError("elementwise: non-finite input");
  }
  Matrix out(m.rows(), m.cols());
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      out(i, j) =
          fn == Activation::Tanh ? std::tanh(m(i, j)) : sigmoid(m(i, j));
    }
  }
  return out;
}

Matrix finite_difference_grad(const std::function<Scalar(const Matrix&)>& f,
                              const Matrix& at, Scalar h) {
  if (!(h > 0.0)) {
    throw ArgumentError("finite_difference_grad: step h must be positive");
  }
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (Index i = 0; i < at.rows(); ++i) {
    for (Index j = 0; j < at.cols(); ++j) {
      const Scalar saved = probe(i, j);
      probe(i, j) = saved + h;
      const Scalar up = f(probe);
      probe(i, j) = saved - h;
      const Scalar down = f(probe);
      probe(i, j) = saved;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericError("finite_difference_grad: functional is non-finite");
      }
      grad(i, j) = (up - down) / (2.0 * h);
    }
  }
  return grad;
}

std::uint64_t Rng::next_u64() {
  // splitmix64 (Steele, Lea, Flood 2014); fixed-width arithmetic keeps the
  // sequence identical across platforms.
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Scalar Rng::uniform() {
  return static_cast<Scalar>(next_u64() >> 11) * 0x1.0p-53;
}

Scalar Rng::uniform(Scalar lo, Scalar hi) {
  return lo + (hi - lo) * uniform();
}

Scalar Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const Scalar u1 = 1.0 - uniform();  // (0, 1], keeps the log finite
  const Scalar u2 = uniform();
  const Scalar r = std::sqrt(-2.0 * std::log(u1));
  const Scalar theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) {
    throw ArgumentError("Rng::below: n must be positive");
  }
  const unsigned __int128 wide =
      static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

}  // namespace eventfuse
