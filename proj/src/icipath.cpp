#include "ici/icipath.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>

namespace ici::path {

double default_rcond(Eigen::Index n, Eigen::Index d) {
    return 1e-10 * static_cast<double>(std::max(n, d));
}

Annihilator annihilator(const Matrix& X, double rcond) {
    const Eigen::Index n = X.rows();
    if (n < 1 || X.cols() < 1) throw ConfigError("annihilator needs n >= 1, d >= 1");

    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rcond * sv(0) : 0.0;
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) ++rank;
    }

    Annihilator ann;
    ann.rank_X = rank;
    ann.rcond = rcond;
    if (rank == 0) {
        ann.Xtilde = Matrix::Identity(n, n);
    } else if (rank == n) {
        // Full column space: the complement is empty, exactly.
        ann.Xtilde = Matrix::Zero(n, n);
    } else {
        const Matrix Ur = svd.matrixU().leftCols(rank);
        ann.Xtilde = Matrix::Identity(n, n) - Ur * Ur.transpose();
    }
    return ann;
}

double lambda_max(const Annihilator& ann, const Matrix& Y) {
    const Eigen::Index n = ann.Xtilde.rows();
    const Matrix Ytilde = ann.Xtilde * Y;
    double best = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::RowVectorXd zi = ann.Xtilde.col(i).transpose() * Ytilde;
        best = std::max(best, zi.norm());
    }
    return best / static_cast<double>(n);
}

LambdaGrid LambdaGrid::geometric(double lambda_max, int count, double ratio) {
    if (count < 1) throw ConfigError("lambda grid needs count >= 1");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("lambda grid needs ratio in (0,1]");
    LambdaGrid g;
    g.ratio = ratio;
    g.values.resize(static_cast<std::size_t>(count));
    if (lambda_max <= 0.0) {
        std::fill(g.values.begin(), g.values.end(), 0.0);
        return g;
    }
    if (count == 1) {
        g.values[0] = lambda_max;
        return g;
    }
    const double step = std::log(ratio) / (count - 1);
    for (int i = 0; i < count; ++i) {
        g.values[static_cast<std::size_t>(i)] = lambda_max * std::exp(step * i);
    }
    g.values[0] = lambda_max;  // exact, no exp() round-off at the head
    return g;
}

double objective(const Matrix& Xtilde, const Matrix& Ytilde, const Matrix& gamma,
                 double lambda, Penalty penalty) {
    const double n = static_cast<double>(Xtilde.rows());
    const double fit = (Ytilde - Xtilde * gamma).squaredNorm() / (2.0 * n);
    double pen = 0.0;
    if (penalty == Penalty::l1) {
        pen = gamma.cwiseAbs().sum();
    } else {
        for (Eigen::Index i = 0; i < gamma.rows(); ++i) pen += gamma.row(i).norm();
    }
    return fit + lambda * pen;
}

bool coordinate_descent(const Matrix& Xtilde, const Matrix& Ytilde, double lambda,
                        Penalty penalty, const SolverOptions& opts, Matrix& gamma,
                        std::vector<double>* sweep_objectives) {
    const Eigen::Index n = Xtilde.rows();
    const Eigen::Index c = Ytilde.cols();
    const double dn = static_cast<double>(n);

    if (gamma.rows() != n || gamma.cols() != c) gamma = Matrix::Zero(n, c);

    // Residual R = Ytilde - Xtilde*gamma, maintained incrementally.
    Matrix R = Ytilde - Xtilde * gamma;
    const Vector diag = Xtilde.diagonal();  // ||Xtilde_{.i}||^2 for a projector

    Eigen::RowVectorXd z(c), updated(c);
    auto sweep_rows = [&](const std::vector<Eigen::Index>& rows) {
        double max_change = 0.0;
        for (Eigen::Index i : rows) {
            const double a = diag(i);
            z = (Xtilde.col(i).transpose() * R) / dn;
            z += (a / dn) * gamma.row(i);

            if (a <= 1e-12) {
                // Degenerate coordinate: the loss ignores gamma_i, the
                // penalty drives it to zero.
                updated.setZero();
            } else if (penalty == Penalty::group_l2) {
                const double znorm = z.norm();
                if (znorm <= lambda) {
                    updated.setZero();
                } else {
                    updated = z * ((1.0 - lambda / znorm) * dn / a);
                }
            } else {
                for (Eigen::Index j = 0; j < c; ++j) {
                    const double v = z(j);
                    double s = 0.0;
                    if (v > lambda) {
                        s = v - lambda;
                    } else if (v < -lambda) {
                        s = v + lambda;
                    }
                    updated(j) = s * dn / a;
                }
            }

            const Eigen::RowVectorXd delta = updated - gamma.row(i);
            const double dmax = delta.cwiseAbs().maxCoeff();
            if (dmax > 0.0) {
                max_change = std::max(max_change, dmax);
                R.noalias() -= Xtilde.col(i) * delta;
                gamma.row(i) = updated;
            }
        }
        if (sweep_objectives) {
            sweep_objectives->push_back(objective(Xtilde, Ytilde, gamma, lambda, penalty));
        }
        return max_change;
    };

    std::vector<Eigen::Index> all_rows(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all_rows[static_cast<std::size_t>(i)] = i;

    // Full sweeps establish convergence; in between, iterate the active set
    // only (rows with nonzero blocks), which is where path solves spend
    // nearly all their time.
    int sweeps = 0;
    while (sweeps < opts.max_iter) {
        const double full_change = sweep_rows(all_rows);
        ++sweeps;
        if (full_change < opts.tol) return true;

        std::vector<Eigen::Index> active;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (gamma.row(i).cwiseAbs().maxCoeff() > 0.0) {
                active.push_back(i);
            }
        }
        if (active.empty()) continue;
        while (sweeps < opts.max_iter) {
            const double change = sweep_rows(active);
            ++sweeps;
            if (change < opts.tol) break;
        }
    }
    return false;
}

GammaPath solve_path(const Annihilator& ann, const Matrix& Y, const LambdaGrid& grid,
                     Penalty penalty, const SolverOptions& opts) {
    if (grid.values.empty()) throw ConfigError("empty lambda grid");
    for (std::size_t g = 1; g < grid.values.size(); ++g) {
        if (grid.values[g] > grid.values[g - 1]) {
            throw ConfigError("lambda grid must be descending");
        }
    }
    if (!(opts.tol > 0.0)) throw ConfigError("solver tol must be positive");

    const Matrix Ytilde = ann.Xtilde * Y;
    const double lmax = lambda_max(ann, Y);

    GammaPath out;
    out.grid = grid;
    out.penalty = penalty;
    out.tol = opts.tol;
    out.gammas.reserve(grid.values.size());
    out.residual_norms.reserve(grid.values.size());
    out.converged.reserve(grid.values.size());

    Matrix gamma = Matrix::Zero(Y.rows(), Y.cols());
    for (double lambda : grid.values) {
        bool ok = true;
        if (lambda >= lmax) {
            // At or above lambda_max the zero matrix is the exact solution.
            gamma.setZero();
        } else {
            ok = coordinate_descent(ann.Xtilde, Ytilde, lambda, penalty, opts, gamma);
        }
        out.gammas.push_back(gamma);
        out.residual_norms.push_back((Ytilde - ann.Xtilde * gamma).norm());
        out.converged.push_back(ok ? 1 : 0);
    }
    out.vanish = vanish_lambda(out);
    return out;
}

std::vector<double> vanish_lambda(const GammaPath& path) {
    const Eigen::Index n = path.instances();
    const double zero_thresh = 10.0 * path.tol;
    std::vector<double> out(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        // Longest prefix of the descending grid on which the row stays zero.
        std::size_t last = 0;
        for (std::size_t g = 0; g < path.gammas.size(); ++g) {
            if (path.gammas[g].row(i).norm() < zero_thresh) {
                last = g;
            } else {
                break;
            }
        }
        out[static_cast<std::size_t>(i)] = path.grid.values[last];
    }
    return out;
}

CredibilityRanking rank_instances(const GammaPath& path,
                                  const std::vector<double>& confidences) {
    const Eigen::Index n = path.instances();
    if (static_cast<Eigen::Index>(confidences.size()) != n) {
        throw ConfigError("confidences size mismatch");
    }
    CredibilityRanking r;
    r.scores = path.vanish;
    r.residual.resize(static_cast<std::size_t>(n));
    const Matrix& tail = path.gammas.back();
    for (Eigen::Index i = 0; i < n; ++i) {
        r.residual[static_cast<std::size_t>(i)] = tail.row(i).norm();
    }
    r.order.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) r.order[static_cast<std::size_t>(i)] = static_cast<int>(i);
    std::sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        const auto ai = static_cast<std::size_t>(a);
        const auto bi = static_cast<std::size_t>(b);
        if (r.scores[ai] != r.scores[bi]) return r.scores[ai] < r.scores[bi];
        if (r.residual[ai] != r.residual[bi]) return r.residual[ai] < r.residual[bi];
        if (confidences[ai] != confidences[bi]) return confidences[ai] > confidences[bi];
        return a < b;
    });
    return r;
}

Matrix beta_hat(const Matrix& X, const Matrix& Y, const Matrix& gamma, double rcond) {
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    const double cutoff = sv.size() > 0 ? rcond * sv(0) : 0.0;
    Vector inv = Vector::Zero(sv.size());
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > cutoff && sv(i) > 0.0) inv(i) = 1.0 / sv(i);
    }
    return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * (Y - gamma);
}

void dump_path_csv(const GammaPath& path, const std::filesystem::path& file,
                   const std::string& variant) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out.precision(17);
    out << "lambda,instance,class,gamma,variant\n";
    const Eigen::Index n = path.instances();
    const Eigen::Index c = path.gammas.empty() ? 0 : path.gammas.front().cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < c; ++j) {
            for (std::size_t g = 0; g < path.grid.values.size(); ++g) {
                out << path.grid.values[g] << ',' << i << ',' << j << ','
                    << path.gammas[g](i, j) << ',' << variant << '\n';
            }
        }
    }
    if (!out) throw DataError("write failed for " + file.string());
}

void dump_vanish_csv(const GammaPath& path, const std::filesystem::path& file,
                     const std::vector<int>* selected, const std::vector<int>* correct) {
    std::ofstream out(file);
    if (!out) throw DataError("cannot write " + file.string());
    out.precision(17);
    out << "instance,vanish_lambda";
    if (selected) out << ",selected";
    if (correct) out << ",correct";
    out << '\n';
    for (std::size_t i = 0; i < path.vanish.size(); ++i) {
        out << i << ',' << path.vanish[i];
        if (selected) out << ',' << (*selected)[i];
        if (correct) out << ',' << (*correct)[i];
        out << '\n';
    }
    if (!out) throw DataError("write failed for " + file.string());
}

}  // namespace ici::path
