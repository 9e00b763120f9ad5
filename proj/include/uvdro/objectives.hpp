#pragma once

#include <optional>
#include <string>

#include "uvdro/dataset.hpp"
#include "uvdro/distances.hpp"
#include "uvdro/errors.hpp"
#include "uvdro/model.hpp"
#include "uvdro/types.hpp"

namespace uvdro {

enum class Objective { erm, cvar_dro, covshift_dro, uv_dro };

std::string to_string(Objective objective);
/// Accepts the names produced by to_string; throws ConfigError otherwise.
Objective objective_from_string(const std::string& name);
/// covshift_dro and uv_dro carry a transport matrix.
bool uses_transport(Objective objective);

struct RobustnessConfig {
  double alpha = 0.2;      ///< smallest subpopulation size, in (0, 1]
  double lipschitz = 1.0;  ///< L >= 0
  double ridge = 0.0;      ///< lambda on |weights|^2, bias excluded
  Objective objective = Objective::uv_dro;

  void validate() const;
};

/// Transport matrix B (n x n, nonnegative, zero diagonal) and cutoff eta >= 0.
struct DualState {
  Matrix transport;
  double eta = 0.0;

  static DualState zeros(Index n);
  void validate() const;
};

struct ObjectiveValue {
  double total = 0.0;
  double robust_term = 0.0;
  double transport_cost = 0.0;  ///< (L/n) sum_ij D_ij B_ij
  double eta_term = 0.0;
  double ridge_term = 0.0;
};

double ridge_penalty(const ModelParams& params, double ridge);

ObjectiveValue erm_objective(const Vector& losses, const ModelParams& params, double ridge);

struct CvarValue {
  double value = 0.0;
  double eta = 0.0;  ///< lower empirical quantile attaining the infimum
};

/// inf_eta (1/alpha) mean[(l - eta)_+] + eta, solved exactly by sorting.
CvarValue cvar_objective(const Vector& losses, double alpha);

/// a_i = l_i - sum_j (B_ij - B_ji)
Vector adjusted_losses(const Vector& losses, const Matrix& transport);

/// (1/alpha) sqrt(mean[(a - eta)_+^2]); 0 when every hinge is inactive.
double robust_term(const Vector& adjusted, double eta, double alpha);

/// Minimizer over eta >= 0 of robust_term(adjusted, eta, alpha) + eta, by
/// bisection on the subgradient over [0, max(adjusted)].
double solve_eta(const Vector& adjusted, double alpha);

/// w_i = (a_i - eta)_+ / (n sqrt(mean[(a - eta)_+^2])), the derivative of the
/// square-root term (without the 1/alpha) with respect to a_i. All zero when
/// every hinge is inactive.
Vector hinge_weights(const Vector& adjusted, double eta);

/// Gradient (times alpha) of min over eta of the robust term plus eta, taken
/// at its minimizer `eta`. Equals hinge_weights unless every hinge is zero
/// with eta at the maximum, where the objective is locally max(adjusted) and
/// the weight alpha is split over the tied maxima.
Vector robust_weights(const Vector& adjusted, double eta, double alpha);

/// Finite-sample dual objective with combined cost D = D_x + D_c.
ObjectiveValue uvdro_objective(const Vector& losses, const DistanceMatrix& cost,
                               const DualState& dual, const RobustnessConfig& cfg,
                               const ModelParams& params);
ObjectiveValue uvdro_objective(const Vector& losses, const DistanceMatrix& dx,
                               const DistanceMatrix& dc, const DualState& dual,
                               const RobustnessConfig& cfg, const ModelParams& params);

struct UvdroGradients {
  ModelParams theta;
  Matrix transport;
};

/// Gradients of uvdro_objective at (params, dual) with eta held fixed at
/// dual.eta (set it with solve_eta first).
UvdroGradients uvdro_gradients(const Dataset& data, const ModelParams& params,
                               const DistanceMatrix& dx, const DistanceMatrix& dc,
                               const DualState& dual, const RobustnessConfig& cfg, LossKind kind);

/// Minimizes the dual objective over (B, eta) for a fixed loss vector by
/// projected gradient descent with backtracking, eta solved exactly at every
/// iterate. Intended for small n (verification and analysis).
struct DualSolveOptions {
  int max_iterations = 2000;  ///< Newton steps in total
  double tolerance = 1e-11;   ///< relative duality-gap bound of the barrier path
  Index max_size = 40;
};
struct DualSolution {
  DualState dual;
  double value = 0.0;  ///< robust + transport + eta (no ridge)
  int iterations = 0;
};
DualSolution minimize_dual(const Vector& losses, const DistanceMatrix& cost, double alpha,
                           double lipschitz, const DualSolveOptions& options = {});

// ---- primal verification oracle --------------------------------------------

/// Feasible point of
///   max (1/n) sum_i h_i (l_i - eta)
///   s.t. h >= 0, (1/n) sum h_i^2 <= 1, h_i - h_j <= alpha L D_ij.
/// The alpha factor matches the estimator above, whose transport cost is not
/// divided by alpha.
struct PrimalWitness {
  Vector h;
  double value = 0.0;
};

struct PrimalOracleOptions {
  int max_iterations = 2000;  ///< Newton steps in total
  double tolerance = 1e-11;   ///< relative duality-gap bound of the barrier path
  /// Test-scale only: larger inputs are rejected.
  Index max_size = 32;
};

class PrimalConvergenceError : public Error {
 public:
  PrimalConvergenceError(const std::string& what, PrimalWitness best)
      : Error(what), best_(std::move(best)) {}
  const PrimalWitness& best() const noexcept { return best_; }

 private:
  PrimalWitness best_;
};

/// Log-barrier Newton method on the problem above; indices tied by a zero
/// bound are merged first. The returned witness is repaired to be exactly
/// feasible, so its value never exceeds the true supremum. Pass
/// lipschitz = +inf to drop the smoothness constraints.
PrimalWitness primal_inner_sup_oracle(const Vector& losses, const DistanceMatrix& cost,
                                      double alpha, double lipschitz, double eta,
                                      const PrimalOracleOptions& options = {});

/// inf over eta >= 0 of (1/alpha) * primal value + eta, by golden-section
/// search (the map is convex in eta).
struct PrimalRobustValue {
  double value = 0.0;
  double eta = 0.0;
};
PrimalRobustValue primal_robust_value(const Vector& losses, const DistanceMatrix& cost,
                                      double alpha, double lipschitz,
                                      const PrimalOracleOptions& options = {});

}  // namespace uvdro
