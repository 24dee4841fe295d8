#include "ici/classifiers.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace ici::clf {

namespace {

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& logits) {
    Matrix p = logits;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double m = p.row(i).maxCoeff();
        p.row(i) = (p.row(i).array() - m).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

struct LogRegProblem {
    const Matrix& X;
    const Matrix& Y;  // one-hot m x c
    double reg;

    // theta layout: [W (D*c), b (c)], column-major W.
    double value_grad(const Vector& theta, Vector& grad) const {
        const Eigen::Index m = X.rows(), D = X.cols(), c = Y.cols();
        const Eigen::Map<const Matrix> W(theta.data(), D, c);
        const Eigen::Map<const Vector> b(theta.data() + D * c, c);

        Matrix logits = X * W;
        logits.rowwise() += b.transpose();

        double nll = 0.0;
        Matrix P(m, c);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double mx = logits.row(i).maxCoeff();
            const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
            nll += lse - logits.row(i).dot(Y.row(i));
            P.row(i) = (logits.row(i).array() - lse).exp();
        }
        nll /= static_cast<double>(m);
        nll += 0.5 * reg * W.squaredNorm();

        const Matrix G = (P - Y) / static_cast<double>(m);
        grad.resize(theta.size());
        Eigen::Map<Matrix> gW(grad.data(), D, c);
        Eigen::Map<Vector> gb(grad.data() + D * c, c);
        gW = X.transpose() * G + reg * W;
        gb = G.colwise().sum();
        return nll;
    }
};

/// Plain two-loop L-BFGS with backtracking Armijo line search. The objective
/// is smooth and strongly convex (reg > 0), so this reaches tight gradient
/// norms quickly and deterministically.
void lbfgs_minimize(const LogRegProblem& prob, Vector& theta, double grad_tol,
                    int max_iters) {
    const int memory = 10;
    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;

    Vector grad;
    double f = prob.value_grad(theta, grad);
    for (int iter = 0; iter < max_iters; ++iter) {
        if (grad.norm() < grad_tol) return;

        // Two-loop recursion.
        Vector q = grad;
        std::vector<double> alpha(s_hist.size());
        for (int h = static_cast<int>(s_hist.size()) - 1; h >= 0; --h) {
            alpha[static_cast<std::size_t>(h)] =
                rho_hist[static_cast<std::size_t>(h)] *
                s_hist[static_cast<std::size_t>(h)].dot(q);
            q -= alpha[static_cast<std::size_t>(h)] * y_hist[static_cast<std::size_t>(h)];
        }
        if (!s_hist.empty()) {
            const Vector& s = s_hist.back();
            const Vector& yv = y_hist.back();
            q *= s.dot(yv) / yv.dot(yv);
        }
        for (std::size_t h = 0; h < s_hist.size(); ++h) {
            const double beta = rho_hist[h] * y_hist[h].dot(q);
            q += (alpha[h] - beta) * s_hist[h];
        }
        Vector dir = -q;
        double dg = dir.dot(grad);
        if (dg >= 0.0) {  // not a descent direction; reset to steepest descent
            dir = -grad;
            dg = -grad.squaredNorm();
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
        }

        double step = 1.0;
        Vector theta_new, grad_new;
        double f_new = f;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            theta_new = theta + step * dir;
            f_new = prob.value_grad(theta_new, grad_new);
            if (f_new <= f + 1e-4 * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) return;  // step underflow; gradient is numerically flat

        const Vector s = theta_new - theta;
        const Vector yv = grad_new - grad;
        const double sy = s.dot(yv);
        if (sy > 1e-12) {
            s_hist.push_back(s);
            y_hist.push_back(yv);
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > memory) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        theta = theta_new;
        grad = grad_new;
        f = f_new;
    }
}

}  // namespace

LinearClassifier fit_logreg(const Matrix& X, const IntVector& y, int c, double reg) {
    const Eigen::Index m = X.rows();
    if (m < c) throw ConfigError("fit_logreg needs at least one instance per class");
    if (static_cast<Eigen::Index>(y.size()) != m) throw ConfigError("X/y size mismatch");

    std::vector<char> present(static_cast<std::size_t>(c), 0);
    for (int l : y) {
        if (l < 0 || l >= c) throw ConfigError("label out of range: " + std::to_string(l));
        present[static_cast<std::size_t>(l)] = 1;
    }
    for (int l = 0; l < c; ++l) {
        if (!present[static_cast<std::size_t>(l)]) {
            throw DataError("class " + std::to_string(l) + " absent from training labels");
        }
    }

    Matrix Y = Matrix::Zero(m, c);
    for (Eigen::Index i = 0; i < m; ++i) Y(i, y[static_cast<std::size_t>(i)]) = 1.0;

    const Eigen::Index D = X.cols();
    Vector theta = Vector::Zero(D * c + c);
    LogRegProblem prob{X, Y, reg};
    lbfgs_minimize(prob, theta, 1e-6, 2000);

    LinearClassifier clf;
    clf.W = Eigen::Map<Matrix>(theta.data(), D, c);
    clf.b = theta.tail(c);
    clf.reg = reg;
    clf.trained = true;
    return clf;
}

std::vector<Prediction> predict(const LinearClassifier& clf, const Matrix& X) {
    if (!clf.trained) throw ConfigError("classifier not trained");
    if (X.cols() != clf.W.rows()) throw ConfigError("feature dimension mismatch");

    Matrix logits = X * clf.W;
    logits.rowwise() += clf.b.transpose();
    const Matrix P = softmax_rows(logits);

    std::vector<Prediction> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        Prediction& p = out[static_cast<std::size_t>(i)];
        p.proba = P.row(i).transpose();
        p.label = 0;
        for (Eigen::Index j = 1; j < P.cols(); ++j) {
            if (P(i, j) > p.proba(p.label)) p.label = static_cast<int>(j);
        }
    }
    return out;
}

std::vector<Prediction> fit_predict_knn(const Matrix& X_train, const IntVector& y_train,
                                        const Matrix& X_test, int k, KnnMetric metric,
                                        int c) {
    const Eigen::Index m = X_train.rows();
    if (m == 0) throw DataError("knn: empty training set");
    if (k < 1 || k > m) throw ConfigError("knn needs 1 <= k <= |train|");

    auto dist = [&](Eigen::Index t, Eigen::Index i) {
        if (metric == KnnMetric::euclidean) {
            return (X_test.row(t) - X_train.row(i)).norm();
        }
        const double denom = X_test.row(t).norm() * X_train.row(i).norm();
        if (denom == 0.0) return 1.0;
        return 1.0 - X_test.row(t).dot(X_train.row(i)) / denom;
    };

    std::vector<Prediction> out(static_cast<std::size_t>(X_test.rows()));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    for (Eigen::Index t = 0; t < X_test.rows(); ++t) {
        Vector d(m);
        for (Eigen::Index i = 0; i < m; ++i) d(i) = dist(t, i);
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              return d(a) != d(b) ? d(a) < d(b) : a < b;
                          });

        std::vector<int> votes(static_cast<std::size_t>(c), 0);
        std::vector<double> summed(static_cast<std::size_t>(c), 0.0);
        for (int a = 0; a < k; ++a) {
            const Eigen::Index i = order[static_cast<std::size_t>(a)];
            const int l = y_train[static_cast<std::size_t>(i)];
            votes[static_cast<std::size_t>(l)] += 1;
            summed[static_cast<std::size_t>(l)] += d(i);
        }
        int best = 0;
        for (int l = 1; l < c; ++l) {
            const auto li = static_cast<std::size_t>(l);
            const auto bi = static_cast<std::size_t>(best);
            if (votes[li] > votes[bi] ||
                (votes[li] == votes[bi] && votes[li] > 0 && summed[li] < summed[bi])) {
                best = l;
            }
        }
        Prediction& p = out[static_cast<std::size_t>(t)];
        p.label = best;
        p.proba = Vector::Zero(c);
        for (int l = 0; l < c; ++l) {
            p.proba(l) = static_cast<double>(votes[static_cast<std::size_t>(l)]) / k;
        }
    }
    return out;
}

}  // namespace ici::clf
