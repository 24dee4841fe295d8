#pragma once

// Independent reference implementations used only by tests. Everything here
// deliberately avoids the coordinate-descent code paths it is used to check.

#include <vector>

#include "ici/common.hpp"
#include "ici/icipath.hpp"
#include "ici/rng.hpp"
#include "ici/theory.hpp"

namespace oracles {

using ici::Matrix;
using ici::Vector;

/// FISTA on (1/(2n))||Ytilde - Xtilde*gamma||_F^2 + lambda*R(gamma),
/// run to `tol` on the iterate change.
Matrix prox_gradient_linear(const Matrix& Xtilde, const Matrix& Ytilde, double lambda,
                            ici::path::Penalty penalty, double tol = 1e-10,
                            int max_iter = 200000);

/// Proximal gradient with backtracking on the penalized multinomial
/// negative log-likelihood (data term averaged over rows).
void prox_gradient_logit(const Matrix& X, const Matrix& Y, double lambda1,
                         double lambda2, ici::path::Penalty penalty, Matrix& beta,
                         Matrix& gamma, double tol = 1e-9, int max_iter = 200000);

struct KktResult {
    bool ok = true;
    double worst_active = 0.0;  // max violation of gradient balance on active blocks
    double worst_zero = 0.0;    // max dual-norm excess over lambda on zero blocks
};

/// Stationarity certificate for the linear problem at the 1/(2n) scaling:
/// active blocks must balance the gradient within `slack`; zero blocks must
/// have dual norm <= lambda*(1+slack_rel).
KktResult kkt_check_linear(const Matrix& Xtilde, const Matrix& Ytilde,
                           const Matrix& gamma, double lambda,
                           ici::path::Penalty penalty, double slack);

/// Same certificate for the vectorized l1 problem
/// 0.5*||y_u - U*g||^2 + lambda*||g||_1 with U materialized densely.
KktResult kkt_check_u_lasso(const Matrix& U, const Vector& y_u, const Vector& gamma,
                            double lambda, double slack);

/// Dense Utilde = I_c (x) U2t, materialized (tests only).
Matrix dense_utilde(const ici::theory::VectorizedModel& vm);

struct DenseConditions {
    double C_min, eta, mu, h, gamma_min;
};

/// Conditions recomputed from a dense Utilde with plain dense algebra.
DenseConditions dense_conditions(const Matrix& U, const std::vector<int>& S,
                                 const Vector& gamma_star, double lambda);

Matrix random_matrix(ici::Rng& rng, Eigen::Index rows, Eigen::Index cols,
                     double scale = 1.0);

}  // namespace oracles
