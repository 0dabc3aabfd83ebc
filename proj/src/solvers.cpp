#include "sti/solvers.hpp"

#include <cmath>

namespace sti {

template <int C>
LinearMap stacked_map(const BasicDipoleOperator<C>& op_in, const Mask& mask, double lambda) {
  require_same_grid(op_in.grid(), mask.grid(), "stacked_map mask");
  if (lambda < 0.0) throw UsageError("shrinkage weight lambda must be >= 0");
  const auto op = std::make_shared<const BasicDipoleOperator<C>>(op_in.with_mask(mask));
  const Grid grid = op->grid();
  const Index n = grid.size();
  const Index m = op->count();
  const Eigen::VectorXd outside = lambda * (1.0 - mask.weights().array()).matrix();
  const Index rows = n * m + (lambda > 0.0 ? n * C : 0);

  LinearMap map;
  map.rows = rows;
  map.cols = n * C;
  map.apply = [op, grid, n, m, outside, rows, lambda](const Eigen::VectorXd& x) {
    Eigen::VectorXd out(rows);
    const auto vol = unflatten<C>(grid, x);
    const FieldSet f = forward(*op, vol);
    out.head(n * m) = Eigen::Map<const Eigen::VectorXd>(f.data.data(), n * m);
    if (lambda > 0.0) {
      for (Index c = 0; c < C; ++c) out.segment(n * m + c * n, n) = outside.cwiseProduct(x.segment(c * n, n));
    }
    return out;
  };
  map.apply_adjoint = [op, grid, n, m, outside, lambda](const Eigen::VectorXd& y) {
    FieldSet f(grid, op->orientations(), Eigen::Map<const Eigen::MatrixXd>(y.data(), n, m));
    Eigen::VectorXd out = flatten(adjoint(*op, f));
    if (lambda > 0.0) {
      for (Index c = 0; c < C; ++c) out.segment(c * n, n) += outside.cwiseProduct(y.segment(n * m + c * n, n));
    }
    return out;
  };
  return map;
}

template LinearMap stacked_map<6>(const BasicDipoleOperator<6>&, const Mask&, double);
template LinearMap stacked_map<9>(const BasicDipoleOperator<9>&, const Mask&, double);

namespace {

template <int C>
Volume<double, C> solve_stacked(const BasicDipoleOperator<C>& op, const FieldSet& y, const Mask& mask,
                                const StiImagConfig& cfg, SolveInfo* info) {
  require_same_grid(y.grid, mask.grid(), "reconstruction mask");
  const LinearMap map = stacked_map(op, mask, cfg.lambda);
  const Index n = y.grid.size();
  const Index m = y.count();
  Eigen::VectorXd b = Eigen::VectorXd::Zero(map.rows);
  Eigen::MatrixXd masked = y.data;
  masked.array().colwise() *= mask.weights().array();
  b.head(n * m) = Eigen::Map<const Eigen::VectorXd>(masked.data(), n * m);
  auto res = lsqr_solve(map, b, cfg.lsqr);
  if (info) *info = {res.iterations, res.relative_residual, res.stop, std::move(res.residual_history)};
  return unflatten<C>(y.grid, res.x);
}

}  // namespace

TensorVolume sti_imag(const FieldSet& y, const Mask& mask, const StiImagConfig& cfg, SolveInfo* info) {
  if (y.count() < 1) throw InputError("sti_imag needs at least one orientation");
  const DipoleOperator op = build_operator(y.grid, y.orientations, cfg.operator_options);
  return solve_stacked(op, y, mask, cfg, info);
}

AstiResult split_asymmetric(const AsymTensorVolume& full) {
  const Grid& g = full.grid();
  AstiResult r{full, TensorVolume(g), DirectionField(g)};
  const auto& d = full.data();
  for (int c = 0; c < 6; ++c) {
    const auto [i, j] = kTensorIndex[std::size_t(c)];
    r.symmetric.data().col(c) = 0.5 * (d.col(3 * i + j) + d.col(3 * j + i));
  }
  constexpr std::array<std::pair<int, int>, 3> anti{{{0, 1}, {0, 2}, {1, 2}}};
  for (int c = 0; c < 3; ++c) {
    const auto [i, j] = anti[std::size_t(c)];
    r.antisymmetric.data().col(c) = 0.5 * (d.col(3 * i + j) - d.col(3 * j + i));
  }
  return r;
}

AsymTensorVolume recombine(const TensorVolume& sym, const DirectionField& anti) {
  require_same_grid(sym.grid(), anti.grid(), "recombine");
  AsymTensorVolume out(sym.grid());
  auto& d = out.data();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      d.col(3 * i + j) = sym.data().col(tensor_component(i, j));
      if (i == j) continue;
      const int a = (i + j == 1) ? 0 : (i + j == 2 ? 1 : 2);
      const double sign = i < j ? 1.0 : -1.0;
      d.col(3 * i + j) += sign * anti.data().col(a);
    }
  return out;
}

AstiResult asti_fit(const FieldSet& y, const Mask& mask, const StiImagConfig& cfg, SolveInfo* info) {
  if (y.count() < 1) throw InputError("asti_fit needs at least one orientation");
  const AsymDipoleOperator op = build_asym_operator(y.grid, y.orientations, cfg.operator_options);
  return split_asymmetric(solve_stacked(op, y, mask, cfg, info));
}

TensorVolume apply_proximal(const ProximalOperator& prox, const TensorVolume& x) {
  return std::visit(
      [&](const auto& p) -> TensorVolume {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, IdentityProx>) {
          return x;
        } else if constexpr (std::is_same_v<T, SoftThresholdProx>) {
          TensorVolume out = x;
          for (int c = 0; c < 6; ++c) {
            const double tau = p.tau[std::size_t(c)];
            if (tau < 0.0) throw UsageError("soft threshold must be >= 0");
            out.data().col(c) = x.data().col(c).unaryExpr([tau](double v) { return soft_threshold(v, tau); });
          }
          return out;
        } else {
          if (!p.network) throw UsageError("CNN proximal operator has no network");
          return p.network->infer(x);
        }
      },
      prox);
}

TensorVolume pgd_reconstruct(const FieldSet& y, const Mask& mask, const ProximalOperator& prox,
                             const PgdConfig& cfg, const TensorVolume* initial, PgdInfo* info) {
  if (cfg.iterations < 1) throw UsageError("PGD needs at least one iteration");
  if (cfg.step_rule == StepRule::Fixed && !(cfg.alpha > 0.0)) throw UsageError("fixed step size must be > 0");
  require_same_grid(y.grid, mask.grid(), "pgd mask");
  const DipoleOperator op =
      build_operator(y.grid, y.orientations, cfg.operator_options).with_mask(mask);

  PgdInfo local;
  PgdInfo& out = info ? *info : local;
  out = {};
  double alpha = cfg.alpha;
  if (cfg.step_rule == StepRule::InverseLipschitz || cfg.init == InitRule::ScaledAdjoint) {
    out.lipschitz = operator_norm(op, cfg.power_iterations);
    if (!(out.lipschitz > 0.0)) throw NumericalError("operator norm estimate is zero");
  }
  if (cfg.step_rule == StepRule::InverseLipschitz) alpha = 1.0 / out.lipschitz;
  out.alpha = alpha;

  TensorVolume x(y.grid);
  if (initial) {
    require_same_grid(initial->grid(), y.grid, "pgd initial estimate");
    x = *initial;
  } else if (cfg.init == InitRule::ScaledAdjoint) {
    x = adjoint(op, y);
    x.data() /= out.lipschitz;
  }
  out.objective.push_back(data_fidelity(op, x, y));
  const Eigen::VectorXd w = mask.weights();
  for (int k = 0; k < cfg.iterations; ++k) {
    x = apply_proximal(prox, gradient_step(op, x, y, alpha));
    if (cfg.zero_outside_mask) x.data().array().colwise() *= w.array();
    if (!x.all_finite()) throw NumericalError("PGD iterate " + std::to_string(k + 1) + " is non-finite");
    out.objective.push_back(data_fidelity(op, x, y));
  }
  return x;
}

double l1_loss(const TensorVolume& a, const TensorVolume& b, const Mask* mask) {
  require_same_grid(a.grid(), b.grid(), "l1_loss");
  if (!mask) return (a.data() - b.data()).cwiseAbs().sum() / double(a.data().size());
  require_same_grid(a.grid(), mask->grid(), "l1_loss mask");
  const Index count = mask->count();
  if (count == 0) throw InputError("l1_loss: empty mask");
  const Eigen::VectorXd w = mask->weights();
  return ((a.data() - b.data()).cwiseAbs().array().colwise() * w.array()).sum() / double(6 * count);
}

}  // namespace sti
