#pragma once

#include "ici/common.hpp"
#include "ici/icipath.hpp"

namespace ici::logit {

using path::GammaPath;
using path::LambdaGrid;
using path::Penalty;

/// Xbar = (X | I), so Xbar * (beta; gamma) = X*beta + gamma row-wise.
struct AugmentedDesign {
    Matrix Xbar;  // n x (d+n)
    Eigen::Index d = 0;
    Eigen::Index n = 0;
};

struct LogitPathConfig {
    double alpha = 0.5;  // lambda1 = alpha * lambda2; must be > 0 for uniqueness
    LambdaGrid grid;     // over lambda2; empty => computed from lambda2_max
    int grid_count = 100;
    double grid_ratio = 1e-3;
    double tol = 1e-6;
    int max_outer = 100;   // partial-Newton steps per grid point
    int max_inner = 2000;  // coordinate sweeps per quadratic subproblem
};

AugmentedDesign augment_design(const Matrix& X);

/// Penalized negative log-likelihood (log-sum-exp stabilized):
/// -(1/n) sum_i [sum_l Y_il eta_il - log sum_l exp(eta_il)]
///   + lambda1*R(beta) + lambda2*R(gamma),  eta = X*beta + gamma.
double nll_objective(const Matrix& X, const Matrix& Y, const Matrix& beta,
                     const Matrix& gamma, double lambda1, double lambda2,
                     Penalty penalty);

/// Data term only (lambda1 = lambda2 = 0).
double nll_data_term(const Matrix& X, const Matrix& Y, const Matrix& beta,
                     const Matrix& gamma);

/// Softmax probabilities of the model at (beta, gamma).
Matrix probabilities(const Matrix& X, const Matrix& beta, const Matrix& gamma);

/// Smallest lambda2 (x2 safety factor) making gamma vanish at the
/// beta-only solution with lambda1 = alpha*lambda2, found by bisection.
double lambda2_max(const Matrix& X, const Matrix& Y, double alpha, Penalty penalty,
                   const LogitPathConfig& cfg = {});

/// Full solve at one (lambda1, lambda2); beta/gamma are warm starts on entry
/// and the solution on exit. Returns false if step-halving could not restore
/// descent (divergence). If step_objectives is non-null it receives the
/// objective after every accepted partial-Newton step.
bool solve_logit_point(const Matrix& X, const Matrix& Y, double lambda1, double lambda2,
                       Penalty penalty, const LogitPathConfig& cfg, Matrix& beta,
                       Matrix& gamma, std::vector<double>* step_objectives = nullptr);

/// Descending lambda2 grid with warm starts; the gamma block populates the
/// GammaPath exactly as in the linear module (vanish-lambda included).
GammaPath solve_logit_path(const Matrix& X, const Matrix& Y, const LogitPathConfig& cfg,
                           Penalty penalty);

/// Analytic gradient of the smooth part vs central finite differences
/// (step 1e-5); returns the max relative error.
double gradient_check(const Matrix& X, const Matrix& Y, const Matrix& beta,
                      const Matrix& gamma);

}  // namespace ici::logit
