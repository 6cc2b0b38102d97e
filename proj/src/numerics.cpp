#include "encdecad/numerics.hpp"

#include <cmath>
#include <string>

#include "encdecad/errors.hpp"

namespace encdecad::numerics {

Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  if (a.cols() != b.rows()) {
    throw NumericError("matmul: inner dimensions disagree (" + std::to_string(a.rows()) + "x" +
                       std::to_string(a.cols()) + " times " + std::to_string(b.rows()) + "x" +
                       std::to_string(b.cols()) + ")");
  }
  return a * b;
}

SpdFactorization factor_spd(const Eigen::Ref<const Matrix>& s, double base_regularization) {
  if (s.rows() != s.cols()) {
    throw NumericError("factor_spd: matrix is not square");
  }
  if (s.rows() == 0) {
    throw NumericError("factor_spd: empty matrix");
  }
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  if (((s - s.transpose()).cwiseAbs().maxCoeff()) > 1e-9 * scale) {
    throw NumericError("factor_spd: matrix is not symmetric");
  }
  if (base_regularization < 0.0) {
    throw NumericError("factor_spd: negative base regularization");
  }

  const double diag_mean = s.diagonal().mean();
  const double cap = 0.1 * (diag_mean > 0.0 ? diag_mean : 1.0);

  double eps = base_regularization;
  while (true) {
    Matrix shifted = s;
    shifted.diagonal().array() += eps;
    Eigen::LLT<Matrix> llt(shifted);
    if (llt.info() == Eigen::Success) {
      return SpdFactorization{s.rows(), Matrix(llt.matrixL()), eps};
    }
    // A failing eps of zero cannot grow by multiplication; restart the ladder
    // from a tiny absolute floor (covers the all-zero covariance case).
    const double next = eps > 0.0 ? eps * 10.0 : 1e-12 * std::max(1.0, std::abs(diag_mean));
    if (next > cap) {
      throw NumericError("covariance degenerate: regularization " + std::to_string(next) +
                         " exceeds 0.1*mean(diag) = " + std::to_string(cap));
    }
    eps = next;
  }
}

Vector solve_spd(const SpdFactorization& f, const Eigen::Ref<const Vector>& v) {
  if (v.size() != f.dimension) {
    throw NumericError("solve_spd: vector length " + std::to_string(v.size()) +
                       " does not match dimension " + std::to_string(f.dimension));
  }
  Vector y = f.lower.triangularView<Eigen::Lower>().solve(v);
  return f.lower.transpose().triangularView<Eigen::Upper>().solve(y);
}

Vector column_means(const Eigen::Ref<const Matrix>& data) {
  return data.colwise().mean().transpose();
}

Matrix covariance(const Eigen::Ref<const Matrix>& data) {
  if (data.rows() < 1) {
    throw NumericError("covariance: no samples");
  }
  Matrix centered = data.rowwise() - data.colwise().mean();
  return (centered.transpose() * centered) / static_cast<double>(data.rows());
}

namespace {

// Start vector seed for power iteration; fixed so that repeated leading
// eigenvalues resolve to the same (mathematically arbitrary) direction.
constexpr std::uint64_t kPowerIterationSeed = 0x9d2c5680u;

}  // namespace

PrincipalComponent leading_pc(const Eigen::Ref<const Matrix>& data) {
  if (data.rows() < 2) {
    throw NumericError("leading_pc: need at least 2 samples, got " + std::to_string(data.rows()));
  }
  if (data.cols() < 1) {
    throw NumericError("leading_pc: need at least 1 column");
  }
  const Matrix cov = covariance(data);
  const double trace = cov.trace();
  if (!(trace > 0.0)) {
    throw NumericError("no variance: data is constant");
  }

  Vector v = seeded_gaussian(kPowerIterationSeed, cov.rows(), 1.0);
  v.normalize();
  for (int iter = 0; iter < 10000; ++iter) {
    Vector w = cov * v;
    const double norm = w.norm();
    if (norm == 0.0) {
      throw NumericError("no variance: start vector lies in the null space");
    }
    w /= norm;
    const double step = (w - v).norm();
    v = w;
    if (step <= 1e-10) {
      break;
    }
  }

  for (Index k = 0; k < v.size(); ++k) {
    if (v[k] != 0.0) {
      if (v[k] < 0.0) v = -v;
      break;
    }
  }
  const double eigenvalue = v.dot(cov * v);
  const double ratio = std::clamp(eigenvalue / trace, 0.0, 1.0);
  return PrincipalComponent{v, ratio};
}

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

constexpr double kTwoPi = 6.283185307179586476925286766559;

}  // namespace

Rng::Rng(std::uint64_t seed) {
  std::uint64_t s = seed;
  for (auto& word : state_) {
    word = splitmix64(s);
  }
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
  const double u1 = 1.0 - uniform();  // (0, 1]: keeps the log finite
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

std::uint64_t Rng::below(std::uint64_t bound) {
  if (bound == 0) {
    throw NumericError("Rng::below: zero bound");
  }
  const std::uint64_t threshold = (-bound) % bound;  // 2^64 mod bound
  while (true) {
    const std::uint64_t r = next_u64();
    if (r >= threshold) {
      return r % bound;
    }
  }
}

Vector seeded_gaussian(std::uint64_t seed, Index n, double stddev) {
  if (n < 1) {
    throw NumericError("seeded_gaussian: n must be >= 1");
  }
  if (!(stddev > 0.0)) {
    throw NumericError("seeded_gaussian: stddev must be > 0");
  }
  Rng rng(seed);
  Vector out(n);
  for (Index i = 0; i < n; ++i) {
    out[i] = stddev * rng.gaussian();
  }
  return out;
}

}  // namespace encdecad::numerics
