#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace encdecad::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Dense product with an explicit inner-dimension check.
Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

/// Cholesky factor of S + eps*I with the eps that was actually added.
struct SpdFactorization {
  Index dimension = 0;
  Matrix lower;                 // L with L*L^T = S + regularization*I
  double regularization = 0.0;  // final eps of the ladder, >= 0
};

// Factors S + eps*I, escalating eps by 10x from base_regularization until the
// Cholesky succeeds. Throws NumericError("covariance degenerate ...") once eps
// would exceed 0.1*mean(diag S) (0.1 absolute when the diagonal mean is zero).
SpdFactorization factor_spd(const Eigen::Ref<const Matrix>& s, double base_regularization);

// Solves (S + eps*I) u = v through the cached factor.
Vector solve_spd(const SpdFactorization& f, const Eigen::Ref<const Vector>& v);

struct PrincipalComponent {
  Vector direction;                      // unit norm, first nonzero coordinate positive
  double explained_variance_ratio = 0.0; // leading eigenvalue / trace of covariance
};

Vector column_means(const Eigen::Ref<const Matrix>& data);

/// Mean-centered sample covariance with MLE denominator N.
Matrix covariance(const Eigen::Ref<const Matrix>& data);

// Leading eigenvector of covariance(data) by power iteration (relative
// tolerance 1e-10, at most 10000 iterations) from a fixed seeded start
// vector, so repeated leading eigenvalues resolve deterministically.
PrincipalComponent leading_pc(const Eigen::Ref<const Matrix>& data);

// xoshiro256** with splitmix64 seed expansion. Gaussians come from Box-Muller
// without spare caching, so the full generator state is exactly four words
// and runs reproduce across platforms from the seed alone.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();   // [0, 1)
  double gaussian();  // standard normal, consumes two words per draw

  /// Uniform integer in [0, bound), rejection-sampled (no modulo bias).
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

/// n gaussian draws with the given stddev; deterministic in the seed.
Vector seeded_gaussian(std::uint64_t seed, Index n, double stddev);

}  // namespace encdecad::numerics
