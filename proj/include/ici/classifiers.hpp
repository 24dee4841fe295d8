#pragma once

#include <vector>

#include "ici/common.hpp"

namespace ici::clf {

/// Multinomial logistic regression with intercept. Trained on original
/// (unreduced) features; immutable once fitted.
struct LinearClassifier {
    Matrix W;        // D x c
    Vector b;        // c
    double reg = 0;  // l2 strength on W (intercept unpenalized)
    bool trained = false;
};

struct Prediction {
    int label = 0;
    Vector proba;  // simplex vector, sums to 1
};

/// Minimizes the l2-regularized multinomial negative log-likelihood to
/// gradient norm < 1e-6 by L-BFGS from zero initialization. Every class id
/// in [0, c) must be present in y.
LinearClassifier fit_logreg(const Matrix& X, const IntVector& y, int c, double reg);

std::vector<Prediction> predict(const LinearClassifier& clf, const Matrix& X);

enum class KnnMetric { euclidean, cosine };

/// Majority vote among the k nearest training points; ties by smallest
/// summed distance, then lowest class id. proba holds vote fractions.
std::vector<Prediction> fit_predict_knn(const Matrix& X_train, const IntVector& y_train,
                                        const Matrix& X_test, int k, KnnMetric metric,
                                        int c);

}  // namespace ici::clf
