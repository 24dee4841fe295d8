#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ici/common.hpp"
#include "ici/datamodel.hpp"
#include "ici/selftrain.hpp"

namespace ici::theory {

/// Vectorized single-response form of the incidental-parameter regression.
/// vec() is column-major, so vec index ell = class*n + instance. The
/// annihilating basis of I_c (x) X is I_c (x) U2(X)^T; only the n-block U2^T
/// is stored and all products use the Kronecker structure.
struct VectorizedModel {
    Eigen::Index n = 0, c = 0, d = 0;
    int rank_X = 0;
    Matrix U2t;  // (n - rank_X) x n, orthonormal rows
    Vector y_u;  // (n - rank_X) * c entries, = Utilde * vec(Y)

    Eigen::Index utilde_rows() const { return U2t.rows() * c; }
    Eigen::Index utilde_cols() const { return n * c; }

    /// w = Utilde * v for v of length n*c.
    Vector apply(const Vector& v) const;
    /// v = Utilde^T * w.
    Vector apply_transpose(const Vector& w) const;
};

VectorizedModel vectorize(const Matrix& X, const Matrix& Y);

struct ConditionReport {
    double C_min = 0, eta = 0, mu = 0, gamma_min = 0, h = 0;
    bool c1 = false, c2 = false, c3 = false;
    bool undefined = false;  // singular on-support Gram; quantities unusable

    std::vector<int> S, S_hat;  // vec-entry indices, ascending
    std::vector<int> O, O_hat;  // instance indices, ascending
    bool s_hat_subset_of_s = false;
    bool support_exact = false;
    bool sign_consistent = false;
    bool o_hat_subset_of_o = false;
    double gamma_err_inf = 0;  // ||gamma_hat_S - gamma*_S||_inf
    double lambda_used = 0, sigma = 0;
};

/// Measures C1 (restricted eigenvalue), C2 (irrepresentability margin), mu,
/// gamma_min and the threshold h at the given lambda. S holds vec-entry
/// indices; gamma_star is the length-n*c planted vector supported on S.
ConditionReport check_conditions(const VectorizedModel& vm, const std::vector<int>& S,
                                 const Vector& gamma_star, double lambda, double sigma);

/// 2*sigma*sqrt(mu)/eta * sqrt(log(c*n)).
double theorem_lambda(double sigma, double mu, double eta, int c, int n);

/// l1-penalized solve in Utilde coordinates:
/// min 0.5*||y_u - Utilde*g||^2 + lambda*||g||_1, coordinate descent on the
/// Kronecker blocks. Returns the length-n*c solution.
Vector solve_u_lasso(const VectorizedModel& vm, double lambda, double tol = 1e-6,
                     int max_iter = 10000);

struct TrialParams {
    int n = 30, d = 3, c = 3, flips = 2;
    double sigma = 0.05;
    double tol = 1e-6;
};

/// Plants a sparse-error linear model, solves at lambda = theorem_lambda
/// (floored at 1e-8 when sigma = 0) and reports measured conditions plus the
/// recovery outcome.
ConditionReport support_recovery_trial(const TrialParams& p, std::uint64_t seed);

struct FrequencyTable {
    // Buckets partition episodes: none (!C1), C1 only, C1&C2 only, all.
    std::array<long, 4> total{0, 0, 0, 0};
    std::array<long, 4> improved{0, 0, 0, 0};
};

/// Per episode: measure which conditions hold (S = wrongly pseudo-labeled
/// entries after the initial classifier, sigma estimated from the
/// support-only fit) and whether the self-taught loop improved query
/// accuracy over the no-unlabeled baseline.
FrequencyTable condition_frequency_study(const data::FeatureStore& store,
                                         const data::EpisodeSpec& spec,
                                         const loop::LoopConfig& cfg, int episodes,
                                         std::uint64_t master_seed);

struct Histogram {
    std::vector<long> counts;
    double lo = 0, bin_width = 0;
    double mean = 0, variance = 0;
    long total = 0;
};

/// Residuals Y - X*beta - gamma binned into `bins` symmetric bins around 0.
Histogram residual_histogram(const Matrix& X, const Matrix& Y, const Matrix& beta,
                             const Matrix& gamma, int bins = 101);
/// Same binning for an already-computed residual matrix.
Histogram bin_residuals(const Matrix& residuals, int bins = 101);

void write_trial_log_csv(const std::vector<std::pair<std::uint64_t, ConditionReport>>& trials,
                         const std::filesystem::path& file);
void write_frequency_csv(const FrequencyTable& table, const std::filesystem::path& file);
void write_histogram_csv(const Histogram& h, const std::filesystem::path& file);

}  // namespace ici::theory
