#include <doctest.h>

#include "sti/phantom.hpp"
#include "sti/solvers.hpp"
#include "support.hpp"

using namespace sti;

namespace {

FieldSet random_fields(const Grid& g, const std::vector<Orientation>& o, std::uint64_t seed) {
  FieldSet y(g, o);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (Index i = 0; i < y.data.size(); ++i) y.data.data()[i] = normal(rng);
  return y;
}

Mask center_box(const Grid& g, Index margin) {
  Mask m(g, false);
  for (Index k = margin; k < g.dims[2] - margin; ++k)
    for (Index j = margin; j < g.dims[1] - margin; ++j)
      for (Index i = margin; i < g.dims[0] - margin; ++i) m.set(g.index(i, j, k), true);
  return m;
}

double outside_energy(const TensorVolume& x, const Mask& mask) {
  double s = 0.0;
  for (Index v = 0; v < x.size(); ++v)
    if (!mask[v]) s += x.data().row(v).squaredNorm();
  return s;
}

}  // namespace

TEST_CASE("lsqr on a dense system matches the normal equations") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(30, 20);
  Eigen::VectorXd b(30);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
  for (auto& v : b) v = normal(rng);

  const auto res = lsqr_solve(dense_map(a), b, {200, 1e-14, 0.0});
  const Eigen::VectorXd oracle = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  CHECK(test::rel_diff(res.x, oracle) < 1e-6);
  for (std::size_t i = 1; i < res.residual_history.size(); ++i)
    CHECK(res.residual_history[i] <= res.residual_history[i - 1] * (1 + 1e-12));

  const double damp = 0.7;
  const auto damped = lsqr_solve(dense_map(a), b, {200, 1e-14, damp});
  const Eigen::MatrixXd reg = a.transpose() * a + damp * damp * Eigen::MatrixXd::Identity(20, 20);
  CHECK(test::rel_diff(damped.x, reg.ldlt().solve(a.transpose() * b)) < 1e-6);
}

TEST_CASE("lsqr trivial cases and argument checks") {
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(7, -1.0, 2.0);
  const auto id = lsqr_solve(dense_map(Eigen::MatrixXd::Identity(7, 7)), b, {});
  CHECK(id.iterations <= 2);
  CHECK(test::rel_diff(id.x, b) < 1e-6);

  const auto zero = lsqr_solve(dense_map(Eigen::MatrixXd::Ones(4, 3)), Eigen::VectorXd::Zero(4), {});
  CHECK(zero.x == Eigen::VectorXd::Zero(3));
  CHECK(zero.stop == LsqrStop::ZeroRhs);

  const auto m = dense_map(Eigen::MatrixXd::Ones(4, 3));
  CHECK_THROWS_AS(lsqr_solve(m, Eigen::VectorXd::Ones(5), {}), InputError);
  CHECK_THROWS_AS(lsqr_solve(m, Eigen::VectorXd::Ones(4), {0, 1e-6, 0.0}), UsageError);
  CHECK_THROWS_AS(lsqr_solve(m, Eigen::VectorXd::Ones(4), {10, 0.0, 0.0}), UsageError);

  LinearMap broken = m;
  broken.apply = [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(4, std::nan("")) * x.sum();
  };
  CHECK_THROWS_AS(lsqr_solve(broken, Eigen::VectorXd::Ones(4), {}), NumericalError);
}

TEST_CASE("stacked map is adjoint-consistent") {
  const Grid g({6, 5, 4});
  const Mask mask = center_box(g, 1);
  const auto o = icosahedral_orientations();
  CHECK(adjoint_mismatch(stacked_map(build_operator(g, o, {mask, 1.0}), mask, 1.0), 4, 1) < 1e-8);
  CHECK(adjoint_mismatch(stacked_map(build_operator(g, o, {mask, 1.5}), mask, 0.3), 4, 2) < 1e-8);
  CHECK(adjoint_mismatch(stacked_map(build_asym_operator(g, o, {mask, 1.0}), mask, 2.0), 4, 3) < 1e-8);
  CHECK(stacked_map(build_operator(g, o), mask, 0.0).rows == g.size() * 6);
  CHECK(stacked_map(build_operator(g, o), mask, 1.0).rows == g.size() * 12);
}

TEST_CASE("sti_imag") {
  const Grid g = test::cube(8);
  const Mask mask = center_box(g, 2);
  const auto o = icosahedral_orientations();

  const TensorVolume zero = sti_imag(FieldSet(g, o), mask);
  CHECK(zero.data().cwiseAbs().maxCoeff() == 0.0);

  const FieldSet y = random_fields(g, o, 3);
  SolveInfo info;
  const TensorVolume a = sti_imag(y, mask, {}, &info);
  CHECK(a.grid() == g);
  CHECK(info.iterations > 0);
  for (std::size_t i = 1; i < info.residual_history.size(); ++i)
    CHECK(info.residual_history[i] <= info.residual_history[i - 1] * (1 + 1e-12));
  CHECK(sti_imag(y, mask).data() == a.data());

  // Out-of-mask energy shrinks as the shrinkage weight grows.
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {0.1, 1.0, 10.0}) {
    StiImagConfig cfg;
    cfg.lambda = lambda;
    cfg.lsqr = {2000, 1e-12, 0.0};
    const double e = outside_energy(sti_imag(y, mask, cfg), mask);
    CHECK(e < previous);
    previous = e;
  }
}

TEST_CASE("sti_imag with a single orientation completes") {
  const Grid g = test::cube(8);
  const auto o = icosahedral_orientations();
  const FieldSet y = random_fields(g, {o[2]}, 4);
  const TensorVolume x = sti_imag(y, center_box(g, 2));
  CHECK(x.data().allFinite());
}

TEST_CASE("asti decomposition") {
  const Grid g = test::cube(6);
  const auto full = test::random_volume<9>(g, 8);
  const AstiResult r = split_asymmetric(full);
  CHECK((recombine(r.symmetric, r.antisymmetric).data() - full.data()).cwiseAbs().maxCoeff() < 1e-15);
  for (Index v = 0; v < g.size(); ++v) {
    const Eigen::RowVectorXd row = full.data().row(v);
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = row[3 * i + j];
    const Mat3 s = tensor_at(r.symmetric, v);
    REQUIRE(s == s.transpose());
    CHECK((s - 0.5 * (m + m.transpose())).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(r.antisymmetric.data()(v, 0) == doctest::Approx(0.5 * (m(0, 1) - m(1, 0))));
    CHECK(r.antisymmetric.data()(v, 2) == doctest::Approx(0.5 * (m(1, 2) - m(2, 1))));
  }

  // Fitted field is reproduced by the recombined tensor.
  const auto o = icosahedral_orientations();
  const Mask mask(g, true);
  const FieldSet y = random_fields(g, o, 6);
  const AstiResult fit = asti_fit(y, mask);
  const auto op = build_asym_operator(g, o, {mask, 1.0});
  const FieldSet f1 = forward(op, fit.full);
  const FieldSet f2 = forward(op, recombine(fit.symmetric, fit.antisymmetric));
  CHECK((f1.data - f2.data).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("asti antisymmetric energy grows with noise") {
  const Grid g = test::cube(12);
  Mask mask(g, true);
  TensorVolume x(g);
  for (Index v = 0; v < g.size(); ++v) {
    CounterRng r(2, std::uint64_t(v));
    const Vec3 d = Vec3(r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1));
    set_tensor_at(x, v, compose_tensor(solve_eigenvalues(r.uniform(-0.02, 0.02), 0.03, 0.001), d, r));
  }
  const auto o = icosahedral_orientations();
  const FieldSet clean = forward(build_operator(g, o), x);
  const FieldSet noisy = add_noise(clean, 10.0, 1).fields;
  StiImagConfig cfg;
  cfg.lsqr = {400, 1e-10, 0.0};
  const double e_clean = asti_fit(clean, mask, cfg).antisymmetric.data().squaredNorm();
  const double e_noisy = asti_fit(noisy, mask, cfg).antisymmetric.data().squaredNorm();
  CHECK(e_noisy > e_clean);
}

TEST_CASE("proximal operators") {
  CHECK(soft_threshold(0.025, 0.01) == doctest::Approx(0.015).epsilon(1e-12));
  CHECK(soft_threshold(-0.005, 0.01) == 0.0);
  CHECK(soft_threshold(-0.3, 0.1) == doctest::Approx(-0.2));

  // Scalar grid-search minimizer of ½(u − v)² + τ|u|.
  const double tau = 0.013;
  for (double v : {-0.05, -0.013, -0.002, 0.0, 0.007, 0.02, 0.041}) {
    double best = 0.0, best_obj = std::numeric_limits<double>::infinity();
    for (int i = -100000; i <= 100000; ++i) {
      const double u = i * 1e-6;
      const double obj = 0.5 * (u - v) * (u - v) + tau * std::abs(u);
      if (obj < best_obj) best_obj = obj, best = u;
    }
    CHECK(std::abs(soft_threshold(v, tau) - best) <= 1e-6);
  }

  const Grid g = test::cube(4);
  const auto x = test::random_volume<6>(g, 2, 0.02);
  CHECK(apply_proximal(IdentityProx{}, x).data() == x.data());
  SoftThresholdProx st;
  st.tau = {0.01, 0.0, 0.02, 0.01, 0.0, 0.03};
  const TensorVolume s = apply_proximal(st, x);
  for (Index v = 0; v < g.size(); ++v)
    for (int c = 0; c < 6; ++c) REQUIRE(s.data()(v, c) == soft_threshold(x.data()(v, c), st.tau[std::size_t(c)]));
  CHECK_THROWS(apply_proximal(CnnProx{}, x));
}

TEST_CASE("pgd with identity prox reaches the least-squares solution") {
  const Grid g = test::cube(8);
  const Mask mask(g, true);
  const auto o = icosahedral_orientations();
  const FieldSet y = random_fields(g, o, 12);

  PgdConfig cfg;
  cfg.iterations = 500;
  cfg.operator_options = {mask, 1.0};
  PgdInfo info;
  const TensorVolume pgd = pgd_reconstruct(y, mask, IdentityProx{}, cfg, nullptr, &info);

  const auto op = build_operator(g, o, {mask, 1.0});
  const auto ls = lsqr_solve(stacked_map(op, mask, 0.0), Eigen::Map<const Eigen::VectorXd>(y.data.data(), y.data.size()),
                             {2000, 1e-14, 0.0});
  CHECK(test::rel_diff(flatten(pgd), ls.x) < 1e-3);

  CHECK(info.lipschitz > 0.0);
  CHECK(info.alpha == doctest::Approx(1.0 / info.lipschitz));
  REQUIRE(info.objective.size() == 501);
  for (std::size_t i = 1; i < info.objective.size(); ++i) CHECK(info.objective[i] <= info.objective[i - 1] * (1 + 1e-12));
}

TEST_CASE("pgd fixed point, defaults and failure modes") {
  CHECK(PgdConfig{}.iterations == 4);
  const Grid g = test::cube(8);
  const Mask mask = center_box(g, 1);
  const auto o = icosahedral_orientations();
  const auto xs = test::random_volume<6>(g, 30, 0.01);
  const FieldSet y = forward(build_operator(g, o, {mask, 1.0}), xs);
  PgdConfig cfg;
  cfg.operator_options = {mask, 1.0};
  const TensorVolume out = pgd_reconstruct(y, mask, IdentityProx{}, cfg, &xs);
  CHECK((out.data() - xs.data()).cwiseAbs().maxCoeff() < 1e-12);

  cfg.init = InitRule::ScaledAdjoint;
  cfg.zero_outside_mask = true;
  const TensorVolume projected = pgd_reconstruct(y, mask, IdentityProx{}, cfg);
  CHECK(outside_energy(projected, mask) == 0.0);
  CHECK(pgd_reconstruct(y, mask, IdentityProx{}, cfg).data() == projected.data());

  PgdConfig bad;
  bad.iterations = 0;
  CHECK_THROWS_AS(pgd_reconstruct(y, mask, IdentityProx{}, bad), UsageError);
  bad.iterations = 3;
  bad.step_rule = StepRule::Fixed;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(pgd_reconstruct(y, mask, IdentityProx{}, bad), UsageError);
  bad.alpha = 1e6;
  bad.iterations = 100;
  CHECK_THROWS_AS(pgd_reconstruct(y, mask, IdentityProx{}, bad), NumericalError);
}

TEST_CASE("l1 loss") {
  const Grid g = test::cube(4);
  const auto a = test::random_volume<6>(g, 1);
  CHECK(l1_loss(a, a) == 0.0);
  TensorVolume b = a;
  b.data().array() += 0.5;
  CHECK(l1_loss(a, b) == doctest::Approx(0.5).epsilon(1e-14));

  const auto c = test::random_volume<6>(g, 2);
  double sum = 0.0;
  for (Index v = 0; v < g.size(); ++v)
    for (int k = 0; k < 6; ++k) sum += std::abs(a.data()(v, k) - c.data()(v, k));
  CHECK(std::abs(l1_loss(a, c) - sum / double(6 * g.size())) < 1e-12);

  Mask m(g, false);
  m.set(5, true);
  CHECK(l1_loss(a, c, &m) == doctest::Approx((a.data().row(5) - c.data().row(5)).cwiseAbs().mean()));
  CHECK_THROWS_AS(l1_loss(a, TensorVolume(test::cube(3))), InputError);
}
