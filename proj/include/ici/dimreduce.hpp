#pragma once

#include "ici/common.hpp"

namespace ici::dimred {

enum class Method { lle, pca, none };

struct ReducedFeatures {
    Matrix Z;      // n x d embedded coordinates
    Method method = Method::none;
    int d = 0;
};

/// Locally Linear Embedding. Reconstruction weights over the k Euclidean
/// nearest neighbors solve the local least-squares problem with Gram
/// regularization reg*trace(G)/k on the diagonal and sum to 1 per row; the
/// embedding is eigenvectors 2..d+1 (ascending eigenvalue) of
/// M = (I-W)^T (I-W), scaled by sqrt(n). Signs are fixed by making each
/// eigenvector's largest-magnitude entry positive.
ReducedFeatures lle_fit_transform(const Matrix& X, int d, int k = 5, double reg = 1e-3);

/// The reconstruction-weight matrix W alone (n x n, row-sum 1). Exposed for
/// verification; lle_fit_transform uses it internally.
Matrix lle_weights(const Matrix& X, int k, double reg);

/// PCA on centered X via SVD; components ordered by descending singular
/// value, sign fixed so each component's largest-magnitude entry is positive.
ReducedFeatures pca_fit_transform(const Matrix& X, int d);

}  // namespace ici::dimred
