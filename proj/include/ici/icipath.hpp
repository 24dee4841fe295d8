#pragma once

#include <filesystem>
#include <vector>

#include "ici/common.hpp"

namespace ici::path {

enum class Penalty { l1, group_l2 };

/// Projector onto the orthogonal complement of the feature column space.
/// Xtilde = I - H with H = X (X^T X)^+ X^T; symmetric and idempotent.
struct Annihilator {
    Matrix Xtilde;   // n x n
    int rank_X = 0;
    double rcond = 0.0;
};

/// Strictly descending geometric grid; values[0] = lambda_max.
struct LambdaGrid {
    std::vector<double> values;
    double ratio = 1e-3;

    static LambdaGrid geometric(double lambda_max, int count = 100, double ratio = 1e-3);
};

struct SolverOptions {
    double tol = 1e-6;
    int max_iter = 10000;  // coordinate-descent sweeps per grid point
};

/// Solutions gamma_hat(lambda) over a descending grid, one n x c matrix per
/// grid point, plus per-instance vanish-lambda and per-point diagnostics.
struct GammaPath {
    std::vector<Matrix> gammas;
    LambdaGrid grid;
    Penalty penalty = Penalty::group_l2;
    std::vector<double> vanish;          // per instance
    std::vector<double> residual_norms;  // data-term residual per grid point
    std::vector<char> converged;         // per grid point
    double tol = 1e-6;

    Eigen::Index instances() const { return gammas.empty() ? 0 : gammas.front().rows(); }
};

struct CredibilityRanking {
    std::vector<int> order;       // instance indices, most credible first
    std::vector<double> scores;   // vanish-lambda per instance (store order)
    std::vector<double> residual; // tie-break: ||gamma_i|| at the smallest grid lambda
};

/// Default pseudo-inverse cutoff factor: singular values below
/// rcond * sigma_max are truncated.
double default_rcond(Eigen::Index n, Eigen::Index d);

Annihilator annihilator(const Matrix& X, double rcond);

/// lambda_max = max_i ||Xtilde_{.i}^T Ytilde||_2 / n with Ytilde = Xtilde*Y;
/// the smallest penalty at which the whole path solution is exactly zero.
double lambda_max(const Annihilator& ann, const Matrix& Y);

/// Block coordinate descent on (1/(2n))||Ytilde - Xtilde*gamma||_F^2
/// + lambda*R(gamma), warm-started along the descending grid. R is the
/// elementwise l1 or the row-wise group l2 penalty. Non-convergence at a
/// grid point is flagged, not fatal.
GammaPath solve_path(const Annihilator& ann, const Matrix& Y, const LambdaGrid& grid,
                     Penalty penalty, const SolverOptions& opts = {});

/// Single fixed-lambda solve (exposed for verification); gamma is the warm
/// start on entry and the solution on exit. Returns true on convergence.
/// If sweep_objectives is non-null it receives the objective value after
/// every sweep.
bool coordinate_descent(const Matrix& Xtilde, const Matrix& Ytilde, double lambda,
                        Penalty penalty, const SolverOptions& opts, Matrix& gamma,
                        std::vector<double>* sweep_objectives = nullptr);

double objective(const Matrix& Xtilde, const Matrix& Ytilde, const Matrix& gamma,
                 double lambda, Penalty penalty);

/// Smallest grid value at and above which an instance's row stays zero
/// (row norm < 10*tol); lambda_max if the row never settles below it.
std::vector<double> vanish_lambda(const GammaPath& path);

/// Ascending vanish-lambda; ties by smaller residual row norm at the last
/// grid point, then higher classifier confidence, then lower index.
CredibilityRanking rank_instances(const GammaPath& path,
                                  const std::vector<double>& confidences);

/// beta_hat = (X^T X)^+ X^T (Y - gamma).
Matrix beta_hat(const Matrix& X, const Matrix& Y, const Matrix& gamma, double rcond);

/// Path dump in the shared CSV format: header
/// `lambda,instance,class,gamma,variant`, rows grouped by instance then
/// class with lambda strictly descending inside each block. The companion
/// file holds `instance,vanish_lambda` plus optional marker columns.
void dump_path_csv(const GammaPath& path, const std::filesystem::path& file,
                   const std::string& variant);
void dump_vanish_csv(const GammaPath& path, const std::filesystem::path& file,
                     const std::vector<int>* selected = nullptr,
                     const std::vector<int>* correct = nullptr);

}  // namespace ici::path
