#include "ici/dimreduce.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <numeric>
#include <vector>

namespace ici::dimred {

namespace {

/// Largest-magnitude entry positive; ties broken by first occurrence.
void fix_sign(Eigen::Ref<Vector> v) {
    Eigen::Index best = 0;
    double mag = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v(i));
        if (a > mag) {
            mag = a;
            best = i;
        }
    }
    if (v(best) < 0.0) v = -v;
}

}  // namespace

Matrix lle_weights(const Matrix& X, int k, double reg) {
    const Eigen::Index n = X.rows();
    if (k < 1) throw ConfigError("lle needs k >= 1");
    if (k >= n) throw ConfigError("lle needs k < n (k=" + std::to_string(k) +
                                  ", n=" + std::to_string(n) + ")");

    Matrix W = Matrix::Zero(n, n);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        // k nearest by Euclidean distance, self excluded, ties by index.
        std::iota(order.begin(), order.end(), 0);
        Vector d2(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            d2(j) = (X.row(j) - X.row(i)).squaredNorm();
        }
        d2(i) = std::numeric_limits<double>::infinity();
        std::partial_sort(order.begin(), order.begin() + k, order.end(),
                          [&](Eigen::Index a, Eigen::Index b) {
                              return d2(a) != d2(b) ? d2(a) < d2(b) : a < b;
                          });

        Matrix diff(k, X.cols());
        for (int a = 0; a < k; ++a) {
            diff.row(a) = X.row(order[static_cast<std::size_t>(a)]) - X.row(i);
        }
        Matrix G = diff * diff.transpose();
        // Conditioning for coincident neighbors; never an error.
        double ridge = reg * G.trace() / k;
        if (ridge <= 0.0) ridge = reg;
        G.diagonal().array() += ridge;

        Vector w = G.ldlt().solve(Vector::Ones(k));
        const double sum = w.sum();
        if (sum != 0.0) w /= sum;
        for (int a = 0; a < k; ++a) {
            W(i, order[static_cast<std::size_t>(a)]) = w(a);
        }
    }
    return W;
}

ReducedFeatures lle_fit_transform(const Matrix& X, int d, int k, double reg) {
    const Eigen::Index n = X.rows();
    if (d < 1) throw ConfigError("lle needs d >= 1");
    if (d > std::min<Eigen::Index>(X.cols(), n - 1)) {
        throw ConfigError("lle needs d <= min(D, n-1)");
    }

    const Matrix W = lle_weights(X, k, reg);
    const Matrix IW = Matrix::Identity(n, n) - W;
    const Matrix M = IW.transpose() * IW;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(M);
    if (eig.info() != Eigen::Success) throw Error("lle eigensolver failed");

    ReducedFeatures out;
    out.method = Method::lle;
    out.d = d;
    out.Z.resize(n, d);
    const double scale = std::sqrt(static_cast<double>(n));
    for (int j = 0; j < d; ++j) {
        Vector v = eig.eigenvectors().col(j + 1);  // skip the constant eigenvector
        fix_sign(v);
        out.Z.col(j) = v * scale;
    }
    return out;
}

ReducedFeatures pca_fit_transform(const Matrix& X, int d) {
    const Eigen::Index n = X.rows();
    if (d < 1) throw ConfigError("pca needs d >= 1");
    if (d > std::min(n, X.cols())) throw ConfigError("pca needs d <= min(n, D)");

    const Matrix centered = X.rowwise() - X.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(centered, Eigen::ComputeThinU | Eigen::ComputeThinV);

    ReducedFeatures out;
    out.method = Method::pca;
    out.d = d;
    out.Z.resize(n, d);
    for (int j = 0; j < d; ++j) {
        Vector comp = svd.matrixV().col(j);
        Eigen::Index best = 0;
        double mag = 0.0;
        for (Eigen::Index i = 0; i < comp.size(); ++i) {
            if (std::abs(comp(i)) > mag) {
                mag = std::abs(comp(i));
                best = i;
            }
        }
        const double sign = comp(best) < 0.0 ? -1.0 : 1.0;
        out.Z.col(j) = sign * svd.singularValues()(j) * svd.matrixU().col(j);
    }
    return out;
}

}  // namespace ici::dimred
