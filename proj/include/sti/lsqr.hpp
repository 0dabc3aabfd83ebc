#pragma once

// LSQR (Paige & Saunders) for min ‖Ax − b‖² + damping² ‖x‖² with A given
// only through products with A and Aᵀ.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sti/error.hpp"

namespace sti {

template <typename Scalar>
struct BasicLinearMap {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_adjoint;
};

using LinearMap = BasicLinearMap<double>;

template <typename Derived>
BasicLinearMap<typename Derived::Scalar> dense_map(const Eigen::MatrixBase<Derived>& matrix) {
  using Scalar = typename Derived::Scalar;
  using Vector = typename BasicLinearMap<Scalar>::Vector;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> a = matrix;
  return {a.rows(), a.cols(), [a](const Vector& x) -> Vector { return a * x; },
          [a](const Vector& y) -> Vector { return a.transpose() * y; }};
}

// max over random probe pairs of |⟨Ax, y⟩ − ⟨x, Aᵀy⟩| / (‖Ax‖ ‖y‖).
template <typename Scalar>
Scalar adjoint_mismatch(const BasicLinearMap<Scalar>& a, int probes, std::uint64_t seed) {
  using Vector = typename BasicLinearMap<Scalar>::Vector;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Scalar worst = 0;
  for (int p = 0; p < probes; ++p) {
    Vector x(a.cols), y(a.rows);
    for (auto& v : x) v = Scalar(normal(rng));
    for (auto& v : y) v = Scalar(normal(rng));
    const Vector ax = a.apply(x);
    const Scalar denom = ax.norm() * y.norm();
    if (denom == Scalar(0)) continue;
    worst = std::max(worst, std::abs(ax.dot(y) - x.dot(a.apply_adjoint(y))) / denom);
  }
  return worst;
}

struct LsqrConfig {
  int max_iterations = 300;
  // Stops when ‖r‖/‖b‖ or ‖Aᵀr‖/(‖A‖‖r‖) falls below this.
  double tolerance = 1e-6;
  double damping = 0.0;
};

enum class LsqrStop { ZeroRhs, ResidualTolerance, NormalTolerance, MaxIterations };

template <typename Scalar>
struct LsqrResult {
  typename BasicLinearMap<Scalar>::Vector x;
  int iterations = 0;
  Scalar relative_residual = 0;
  Scalar normal_residual = 0;
  LsqrStop stop = LsqrStop::MaxIterations;
  // ‖[b; 0] − [A; damping·I] x_k‖ for k = 0 … iterations.
  std::vector<Scalar> residual_history;
};

template <typename Scalar>
LsqrResult<Scalar> lsqr_solve(const BasicLinearMap<Scalar>& a, const typename BasicLinearMap<Scalar>::Vector& b,
                              const LsqrConfig& cfg) {
  using Vector = typename BasicLinearMap<Scalar>::Vector;
  using std::sqrt;
  if (b.size() != a.rows) {
    throw InputError("lsqr: right-hand side has length " + std::to_string(b.size()) + ", map has " +
                     std::to_string(a.rows) + " rows");
  }
  if (cfg.max_iterations < 1) throw UsageError("lsqr: max_iterations must be >= 1");
  if (!(cfg.tolerance > 0)) throw UsageError("lsqr: tolerance must be > 0");
  if (cfg.damping < 0) throw UsageError("lsqr: damping must be >= 0");

  LsqrResult<Scalar> res;
  res.x = Vector::Zero(a.cols);
  const Scalar damp = Scalar(cfg.damping);
  const Scalar bnorm = b.norm();
  res.residual_history.push_back(bnorm);
  if (bnorm == Scalar(0)) {
    res.stop = LsqrStop::ZeroRhs;
    return res;
  }
  const auto check = [](Scalar v, const char* what) {
    if (!std::isfinite(double(v))) throw NumericalError(std::string("lsqr: non-finite ") + what);
  };

  Scalar beta = bnorm;
  Vector u = b / beta;
  Vector v = a.apply_adjoint(u);
  if (v.size() != a.cols) throw InputError("lsqr: adjoint returned a vector of the wrong length");
  Scalar alpha = v.norm();
  check(alpha, "alpha");
  if (alpha > Scalar(0)) v /= alpha;
  Vector w = v;

  Scalar phibar = beta;
  Scalar rhobar = alpha;
  Scalar anorm = 0;
  Scalar damped_sq = 0;  // accumulated ψ² from the damping rotations

  if (alpha == Scalar(0)) {
    // b is orthogonal to the range of A; x = 0 is already optimal.
    res.stop = LsqrStop::NormalTolerance;
    res.relative_residual = 1;
    return res;
  }

  for (int itn = 1; itn <= cfg.max_iterations; ++itn) {
    u = a.apply(v) - alpha * u;
    if (u.size() != a.rows) throw InputError("lsqr: map returned a vector of the wrong length");
    beta = u.norm();
    check(beta, "beta");
    anorm = sqrt(anorm * anorm + alpha * alpha + beta * beta + damp * damp);
    if (beta > Scalar(0)) {
      u /= beta;
      v = a.apply_adjoint(u) - beta * v;
      alpha = v.norm();
      check(alpha, "alpha");
      if (alpha > Scalar(0)) v /= alpha;
    } else {
      alpha = 0;
    }

    // Eliminate the damping term, then the subdiagonal β.
    const Scalar rhobar1 = sqrt(rhobar * rhobar + damp * damp);
    const Scalar cs1 = rhobar / rhobar1;
    const Scalar sn1 = damp / rhobar1;
    const Scalar psi = sn1 * phibar;
    phibar = cs1 * phibar;

    const Scalar rho = sqrt(rhobar1 * rhobar1 + beta * beta);
    check(rho, "rho");
    const Scalar cs = rhobar1 / rho;
    const Scalar sn = beta / rho;
    const Scalar theta = sn * alpha;
    rhobar = -cs * alpha;
    const Scalar phi = cs * phibar;
    phibar = sn * phibar;

    res.x += (phi / rho) * w;
    w = v - (theta / rho) * w;

    damped_sq += psi * psi;
    const Scalar rnorm = sqrt(phibar * phibar + damped_sq);
    const Scalar arnorm = alpha * std::abs(sn * phi);
    res.residual_history.push_back(rnorm);
    res.iterations = itn;
    res.relative_residual = rnorm / bnorm;
    res.normal_residual = (anorm > 0 && rnorm > 0) ? arnorm / (anorm * rnorm) : Scalar(0);
    if (!res.x.allFinite()) throw NumericalError("lsqr: iterate became non-finite");

    if (res.relative_residual <= Scalar(cfg.tolerance)) {
      res.stop = LsqrStop::ResidualTolerance;
      return res;
    }
    if (res.normal_residual <= Scalar(cfg.tolerance)) {
      res.stop = LsqrStop::NormalTolerance;
      return res;
    }
  }
  res.stop = LsqrStop::MaxIterations;
  return res;
}

}  // namespace sti
