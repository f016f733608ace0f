#pragma once

// Shared numerical primitives: error taxonomy, planar rotations, block
// operators over per-bus R^2 coordinates, norms, and deterministic RNG
// helpers. Everything downstream works on stacked 2-vectors (one per bus or
// branch), so the A -> A (x) I2 lift and the 90-degree rotation J appear in
// nearly every module.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dvoc {

// ---------------------------------------------------------------------------
// Error taxonomy. All library errors derive from Error so callers can catch
// one base; the concrete type encodes the failure class the operation
// contracts promise.
// ---------------------------------------------------------------------------
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct AssumptionViolated : Error { using Error::Error; };
struct InconsistentProfile : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct StepSizeUnderflow : Error { using Error::Error; };
struct NonFiniteState : Error { using Error::Error; };
struct DegenerateNetwork : Error { using Error::Error; };
struct DegenerateVoltage : Error { using Error::Error; };
struct EigensolveFailure : Error { using Error::Error; };
struct DisconnectedGraph : Error { using Error::Error; };
struct SingularImpedance : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Planar rotations.
// ---------------------------------------------------------------------------

// 2-D rotation by `angle` radians (counter-clockwise).
inline Eigen::Matrix2d rot(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

// Rotation by +90 degrees; multiplication by J is the real-coordinate image
// of multiplication by the imaginary unit on phasors.
inline const Eigen::Matrix2d& J2() {
  static const Eigen::Matrix2d j = (Eigen::Matrix2d() << 0, -1, 1, 0).finished();
  return j;
}

// I_n (x) R(angle): rotates every stacked 2-vector by the same angle.
inline Eigen::MatrixXd block_rot(Eigen::Index n, double angle) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  const Eigen::Matrix2d r = rot(angle);
  for (Eigen::Index k = 0; k < n; ++k) out.block<2, 2>(2 * k, 2 * k) = r;
  return out;
}

// I_n (x) J.
inline Eigen::MatrixXd block_J(Eigen::Index n) { return block_rot(n, M_PI / 2.0); }

// A (x) I2: lifts a scalar coupling matrix to stacked 2-vector coordinates.
inline Eigen::MatrixXd kron_I2(const Eigen::MatrixXd& a) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(2 * a.rows(), 2 * a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      out(2 * i, 2 * j) = a(i, j);
      out(2 * i + 1, 2 * j + 1) = a(i, j);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Vector access helpers for stacked 2-vectors.
// ---------------------------------------------------------------------------
inline Eigen::Vector2d seg2(const Eigen::VectorXd& x, Eigen::Index k) {
  return x.segment<2>(2 * k);
}

inline void set_seg2(Eigen::VectorXd& x, Eigen::Index k, const Eigen::Vector2d& v) {
  x.segment<2>(2 * k) = v;
}

// ---------------------------------------------------------------------------
// Norms.
// ---------------------------------------------------------------------------

// Induced 2-norm (largest singular value). Dense SVD: matrices here are tiny.
inline double spectral_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Instantaneous power forms. With voltage v and output current i as planar
// vectors, active power is the in-phase product and reactive power the
// quadrature product; both are invariant under a common rotation of (v, i).
// ---------------------------------------------------------------------------
inline double active_power(const Eigen::Vector2d& v, const Eigen::Vector2d& i) {
  return v.dot(i);
}

inline double reactive_power(const Eigen::Vector2d& v, const Eigen::Vector2d& i) {
  return v.dot(J2() * i);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. One master seed, independent streams per purpose so
// adding a consumer never perturbs another stream's draws.
// ---------------------------------------------------------------------------
inline std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{seed, stream ^ std::uint64_t{0x9e3779b97f4a7c15ull}};
  return std::mt19937_64(seq);
}

inline bool all_finite(const Eigen::VectorXd& x) { return x.allFinite(); }

}  // namespace dvoc
