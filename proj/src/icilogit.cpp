#include "ici/icilogit.hpp"

#include <algorithm>
#include <cmath>

namespace ici::logit {

namespace {

constexpr double kWeightFloor = 1e-5;

double penalty_value(const Matrix& M, Penalty penalty) {
    if (penalty == Penalty::l1) return M.cwiseAbs().sum();
    double s = 0.0;
    for (Eigen::Index i = 0; i < M.rows(); ++i) s += M.row(i).norm();
    return s;
}

/// min_u sum_l [A_l/2 u_l^2 - B_l u_l] + lambda*||u||_2, all A_l > 0.
/// Zero iff ||B|| <= lambda; otherwise u_l = B_l/(A_l + lambda/t) with
/// t = ||u|| found by bisection on g(t) = sum B_l^2/(A_l+lambda/t)^2 - t^2,
/// which is positive near 0 and negative for large t.
void group_row_update(const Eigen::RowVectorXd& A, const Eigen::RowVectorXd& B,
                      double lambda, Eigen::RowVectorXd& u) {
    const double bnorm = B.norm();
    if (bnorm <= lambda) {
        u.setZero();
        return;
    }
    if (lambda <= 0.0) {
        u = B.cwiseQuotient(A);
        return;
    }
    double hi = 0.0;
    for (Eigen::Index l = 0; l < B.size(); ++l) {
        hi += (B(l) / A(l)) * (B(l) / A(l));
    }
    hi = std::sqrt(hi);
    double lo = 0.0;
    for (int it = 0; it < 80; ++it) {
        const double t = 0.5 * (lo + hi);
        double s = 0.0;
        for (Eigen::Index l = 0; l < B.size(); ++l) {
            const double den = A(l) + lambda / t;
            s += (B(l) / den) * (B(l) / den);
        }
        if (s > t * t) {
            lo = t;
        } else {
            hi = t;
        }
    }
    const double t = 0.5 * (lo + hi);
    for (Eigen::Index l = 0; l < B.size(); ++l) {
        u(l) = B(l) / (A(l) + lambda / t);
    }
}

struct QuadModel {
    Matrix w;  // n x c IRLS weights
    Matrix z;  // n x c working responses
};

QuadModel quad_model(const Matrix& eta, const Matrix& Y, const Matrix& P) {
    QuadModel q;
    q.w = (P.array() * (1.0 - P.array())).cwiseMax(kWeightFloor);
    q.z = eta + ((Y - P).array() / q.w.array()).matrix();
    return q;
}

/// Penalized weighted least squares over Theta = (beta; gamma) by cyclic
/// block coordinate descent on rows. Rows k < d carry weight lambda1, rows
/// k >= d carry lambda2. If freeze_gamma, the gamma block stays at zero.
void weighted_cd(const Matrix& X, const QuadModel& q, double lambda1, double lambda2,
                 Penalty penalty, const LogitPathConfig& cfg, bool freeze_gamma,
                 Matrix& beta, Matrix& gamma) {
    const Eigen::Index n = X.rows(), d = X.cols(), c = q.z.cols();
    const double dn = static_cast<double>(n);

    // Residual of the working response under the current iterate.
    Matrix R = q.z - X * beta - gamma;

    // Per-class curvature of beta coordinates: A_kl = (1/n) sum_i w_il x_ik^2.
    Matrix Abeta(d, c);
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index l = 0; l < c; ++l) {
            Abeta(k, l) = X.col(k).cwiseAbs2().dot(q.w.col(l)) / dn;
        }
    }

    Eigen::RowVectorXd B(c), updated(c), delta(c);
    for (int sweep = 0; sweep < cfg.max_inner; ++sweep) {
        double max_change = 0.0;

        for (Eigen::Index k = 0; k < d; ++k) {
            if (X.col(k).cwiseAbs2().sum() == 0.0) continue;  // flat coordinate
            for (Eigen::Index l = 0; l < c; ++l) {
                B(l) = (X.col(k).array() * q.w.col(l).array() * R.col(l).array()).sum() / dn +
                       Abeta(k, l) * beta(k, l);
            }
            if (penalty == Penalty::group_l2) {
                group_row_update(Abeta.row(k), B, lambda1, updated);
            } else {
                for (Eigen::Index l = 0; l < c; ++l) {
                    const double v = B(l);
                    double s = 0.0;
                    if (v > lambda1) s = v - lambda1;
                    else if (v < -lambda1) s = v + lambda1;
                    updated(l) = s / Abeta(k, l);
                }
            }
            delta = updated - beta.row(k);
            const double dmax = delta.cwiseAbs().maxCoeff();
            if (dmax > 0.0) {
                max_change = std::max(max_change, dmax);
                R.noalias() -= X.col(k) * delta;
                beta.row(k) = updated;
            }
        }

        if (!freeze_gamma) {
            for (Eigen::Index i = 0; i < n; ++i) {
                // gamma row i touches only residual row i.
                const Eigen::RowVectorXd A = q.w.row(i) / dn;
                B = (q.w.row(i).array() * R.row(i).array()).matrix() / dn +
                    A.cwiseProduct(gamma.row(i));
                if (penalty == Penalty::group_l2) {
                    group_row_update(A, B, lambda2, updated);
                } else {
                    for (Eigen::Index l = 0; l < c; ++l) {
                        const double v = B(l);
                        double s = 0.0;
                        if (v > lambda2) s = v - lambda2;
                        else if (v < -lambda2) s = v + lambda2;
                        updated(l) = s / A(l);
                    }
                }
                delta = updated - gamma.row(i);
                const double dmax = delta.cwiseAbs().maxCoeff();
                if (dmax > 0.0) {
                    max_change = std::max(max_change, dmax);
                    R.row(i) -= delta;
                    gamma.row(i) = updated;
                }
            }
        }

        if (max_change < cfg.tol) break;
    }
}

}  // namespace

AugmentedDesign augment_design(const Matrix& X) {
    AugmentedDesign a;
    a.n = X.rows();
    a.d = X.cols();
    a.Xbar.resize(a.n, a.d + a.n);
    a.Xbar.leftCols(a.d) = X;
    a.Xbar.rightCols(a.n) = Matrix::Identity(a.n, a.n);
    return a;
}

Matrix probabilities(const Matrix& X, const Matrix& beta, const Matrix& gamma) {
    Matrix eta = X * beta + gamma;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double m = eta.row(i).maxCoeff();
        eta.row(i) = (eta.row(i).array() - m).exp();
        eta.row(i) /= eta.row(i).sum();
    }
    return eta;
}

double nll_data_term(const Matrix& X, const Matrix& Y, const Matrix& beta,
                     const Matrix& gamma) {
    const Matrix eta = X * beta + gamma;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < eta.rows(); ++i) {
        const double m = eta.row(i).maxCoeff();
        const double lse = m + std::log((eta.row(i).array() - m).exp().sum());
        nll += lse - eta.row(i).dot(Y.row(i));
    }
    return nll / static_cast<double>(X.rows());
}

double nll_objective(const Matrix& X, const Matrix& Y, const Matrix& beta,
                     const Matrix& gamma, double lambda1, double lambda2,
                     Penalty penalty) {
    return nll_data_term(X, Y, beta, gamma) + lambda1 * penalty_value(beta, penalty) +
           lambda2 * penalty_value(gamma, penalty);
}

bool solve_logit_point(const Matrix& X, const Matrix& Y, double lambda1, double lambda2,
                       Penalty penalty, const LogitPathConfig& cfg, Matrix& beta,
                       Matrix& gamma, std::vector<double>* step_objectives) {
    const bool freeze_gamma = lambda2 == std::numeric_limits<double>::infinity();
    double obj = nll_objective(X, Y, beta, gamma, lambda1, freeze_gamma ? 0.0 : lambda2,
                               penalty);

    for (int outer = 0; outer < cfg.max_outer; ++outer) {
        const Matrix eta = X * beta + gamma;
        const Matrix P = probabilities(X, beta, gamma);
        const QuadModel q = quad_model(eta, Y, P);

        Matrix beta_new = beta, gamma_new = gamma;
        weighted_cd(X, q, lambda1, freeze_gamma ? 0.0 : lambda2, penalty, cfg,
                    freeze_gamma, beta_new, gamma_new);

        double obj_new = nll_objective(X, Y, beta_new, gamma_new, lambda1,
                                       freeze_gamma ? 0.0 : lambda2, penalty);
        int halvings = 0;
        while (obj_new > obj + 1e-8 && halvings < 20) {
            beta_new = 0.5 * (beta_new + beta);
            gamma_new = 0.5 * (gamma_new + gamma);
            obj_new = nll_objective(X, Y, beta_new, gamma_new, lambda1,
                                    freeze_gamma ? 0.0 : lambda2, penalty);
            ++halvings;
        }
        if (obj_new > obj + 1e-8) return false;  // diverged

        const double change = std::max((beta_new - beta).cwiseAbs().maxCoeff(),
                                       (gamma_new - gamma).cwiseAbs().maxCoeff());
        beta = beta_new;
        gamma = gamma_new;
        obj = obj_new;
        if (step_objectives) step_objectives->push_back(obj);
        if (change < cfg.tol) break;
    }
    return true;
}

namespace {

double gamma_dual_norm(const Matrix& X, const Matrix& Y, const Matrix& beta,
                       Penalty penalty) {
    const Matrix G = (probabilities(X, beta, Matrix::Zero(Y.rows(), Y.cols())) - Y) /
                     static_cast<double>(X.rows());
    if (penalty == Penalty::l1) return G.cwiseAbs().maxCoeff();
    double best = 0.0;
    for (Eigen::Index i = 0; i < G.rows(); ++i) best = std::max(best, G.row(i).norm());
    return best;
}

}  // namespace

double lambda2_max(const Matrix& X, const Matrix& Y, double alpha, Penalty penalty,
                   const LogitPathConfig& cfg) {
    if (!(alpha > 0.0)) throw ConfigError("logit path requires alpha > 0");

    const double inf = std::numeric_limits<double>::infinity();
    auto gamma_vanishes = [&](double l2) {
        Matrix beta = Matrix::Zero(X.cols(), Y.cols());
        Matrix gamma = Matrix::Zero(Y.rows(), Y.cols());
        solve_logit_point(X, Y, alpha * l2, inf, penalty, cfg, beta, gamma);
        return gamma_dual_norm(X, Y, beta, penalty) <= l2;
    };

    // Start from the dual norm at beta = 0 and grow until gamma vanishes.
    double hi = std::max(gamma_dual_norm(X, Y, Matrix::Zero(X.cols(), Y.cols()), penalty),
                         1e-12);
    int grow = 0;
    while (!gamma_vanishes(hi) && grow++ < 60) hi *= 2.0;
    double lo = hi / 2.0;
    if (grow == 0) {
        // Shrink to bracket the threshold from below.
        while (lo > 1e-12 && gamma_vanishes(lo)) {
            hi = lo;
            lo /= 2.0;
        }
    }
    for (int it = 0; it < 20; ++it) {
        const double mid = std::sqrt(lo * hi);  // geometric bisection
        if (gamma_vanishes(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return 2.0 * hi;  // safety factor
}

GammaPath solve_logit_path(const Matrix& X, const Matrix& Y, const LogitPathConfig& cfg,
                           Penalty penalty) {
    if (!(cfg.alpha > 0.0)) throw ConfigError("logit path requires alpha > 0");

    LambdaGrid grid = cfg.grid;
    if (grid.values.empty()) {
        grid = LambdaGrid::geometric(lambda2_max(X, Y, cfg.alpha, penalty, cfg),
                                     cfg.grid_count, cfg.grid_ratio);
    }

    GammaPath out;
    out.grid = grid;
    out.penalty = penalty;
    out.tol = cfg.tol;
    out.gammas.reserve(grid.values.size());
    out.residual_norms.reserve(grid.values.size());
    out.converged.reserve(grid.values.size());

    Matrix beta = Matrix::Zero(X.cols(), Y.cols());
    Matrix gamma = Matrix::Zero(Y.rows(), Y.cols());
    for (double l2 : grid.values) {
        const bool ok =
            solve_logit_point(X, Y, cfg.alpha * l2, l2, penalty, cfg, beta, gamma);
        out.gammas.push_back(gamma);
        out.residual_norms.push_back(nll_data_term(X, Y, beta, gamma));
        out.converged.push_back(ok ? 1 : 0);
    }
    out.vanish = path::vanish_lambda(out);
    return out;
}

double gradient_check(const Matrix& X, const Matrix& Y, const Matrix& beta,
                      const Matrix& gamma) {
    const Eigen::Index n = X.rows(), d = X.cols(), c = Y.cols();
    const Matrix P = probabilities(X, beta, gamma);
    const Matrix G = (P - Y) / static_cast<double>(n);
    const Matrix grad_beta = X.transpose() * G;
    const Matrix& grad_gamma = G;

    const double h = 1e-5;
    double worst = 0.0;
    Matrix beta_mut = beta, gamma_mut = gamma;
    for (Eigen::Index k = 0; k < d; ++k) {
        for (Eigen::Index l = 0; l < c; ++l) {
            const double saved = beta_mut(k, l);
            beta_mut(k, l) = saved + h;
            const double fp = nll_data_term(X, Y, beta_mut, gamma);
            beta_mut(k, l) = saved - h;
            const double fm = nll_data_term(X, Y, beta_mut, gamma);
            beta_mut(k, l) = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(grad_beta(k, l) - fd) /
                               std::max({1.0, std::abs(grad_beta(k, l)), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index l = 0; l < c; ++l) {
            const double saved = gamma_mut(i, l);
            gamma_mut(i, l) = saved + h;
            const double fp = nll_data_term(X, Y, beta, gamma_mut);
            gamma_mut(i, l) = saved - h;
            const double fm = nll_data_term(X, Y, beta, gamma_mut);
            gamma_mut(i, l) = saved;
            const double fd = (fp - fm) / (2.0 * h);
            const double rel = std::abs(grad_gamma(i, l) - fd) /
                               std::max({1.0, std::abs(grad_gamma(i, l)), std::abs(fd)});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace ici::logit
