#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ici/datamodel.hpp"
#include "ici/icilogit.hpp"
#include "ici/rng.hpp"
#include "oracles.hpp"

using namespace ici;
using path::Penalty;

TEST_CASE("augmented design layout") {
    const Matrix Z = Matrix::Zero(3, 2);
    const auto a = logit::augment_design(Z);
    CHECK(a.Xbar.leftCols(2) == Z);
    CHECK(a.Xbar.rightCols(3) == Matrix::Identity(3, 3));

    Matrix X(2, 1);
    X << 1.5, -2.0;
    const auto b = logit::augment_design(X);
    Matrix expect(2, 3);
    expect << 1.5, 1, 0, -2.0, 0, 1;
    CHECK(b.Xbar == expect);
}

TEST_CASE("augmented design reproduces X*beta + gamma") {
    Rng rng(1);
    const Matrix X = oracles::random_matrix(rng, 5, 3);
    const Matrix beta = oracles::random_matrix(rng, 3, 2);
    const Matrix gamma = oracles::random_matrix(rng, 5, 2);
    const auto a = logit::augment_design(X);

    Matrix stacked(3 + 5, 2);
    stacked.topRows(3) = beta;
    stacked.bottomRows(5) = gamma;
    CHECK((a.Xbar * stacked - (X * beta + gamma)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("nll at zero parameters is log c") {
    Rng rng(2);
    const Matrix X = oracles::random_matrix(rng, 6, 2);
    const Matrix Y = data::one_hot({0, 1, 2, 0, 1, 2}, 3);
    const double v = logit::nll_objective(X, Y, Matrix::Zero(2, 3), Matrix::Zero(6, 3),
                                          0.0, 0.0, Penalty::l1);
    CHECK(v == doctest::Approx(std::log(3.0)).epsilon(1e-12));
}

TEST_CASE("nll scalar case") {
    Matrix X(1, 1);
    X << 1.0;
    Matrix beta(1, 2);
    beta << 10.0, -10.0;
    const Matrix Y = data::one_hot({0}, 2);
    const double v = logit::nll_objective(X, Y, beta, Matrix::Zero(1, 2), 0.0, 0.0,
                                          Penalty::l1);
    CHECK(v == doctest::Approx(std::log(1.0 + std::exp(-20.0))).epsilon(1e-9));
}

TEST_CASE("data term is invariant to shifting one beta row across classes") {
    Rng rng(3);
    const Matrix X = oracles::random_matrix(rng, 7, 3);
    const Matrix Y = data::one_hot({0, 1, 1, 0, 1, 0, 1}, 2);
    const Matrix beta = oracles::random_matrix(rng, 3, 2);
    const Matrix gamma = oracles::random_matrix(rng, 7, 2);

    Matrix shifted = beta;
    shifted.row(1).array() += 7.25;
    CHECK(logit::nll_data_term(X, Y, beta, gamma) ==
          doctest::Approx(logit::nll_data_term(X, Y, shifted, gamma)).epsilon(1e-12));
}

TEST_CASE("fully shrunk solution is the uniform model") {
    Rng rng(4);
    const Matrix X = oracles::random_matrix(rng, 6, 2);
    const Matrix Y = data::one_hot({0, 1, 0, 1, 0, 1}, 2);

    logit::LogitPathConfig cfg;
    Matrix beta = Matrix::Zero(2, 2), gamma = Matrix::Zero(6, 2);
    logit::solve_logit_point(X, Y, 100.0, 100.0, Penalty::group_l2, cfg, beta, gamma);
    CHECK(beta.cwiseAbs().maxCoeff() == 0.0);
    CHECK(gamma.cwiseAbs().maxCoeff() == 0.0);
    CHECK(logit::nll_data_term(X, Y, beta, gamma) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("logit solve matches the proximal-gradient oracle") {
    Rng rng(5);
    for (int rep = 0; rep < 3; ++rep) {
        const Matrix X = oracles::random_matrix(rng, 6, 2);
        IntVector labels;
        for (int i = 0; i < 6; ++i) labels.push_back(i % 2);
        const Matrix Y = data::one_hot(labels, 2);

        for (auto penalty : {Penalty::group_l2, Penalty::l1}) {
            const double l2 = 0.02, l1 = 0.01;
            logit::LogitPathConfig cfg;
            cfg.tol = 1e-9;
            cfg.max_outer = 400;
            Matrix beta = Matrix::Zero(2, 2), gamma = Matrix::Zero(6, 2);
            const bool ok =
                logit::solve_logit_point(X, Y, l1, l2, penalty, cfg, beta, gamma);
            CHECK(ok);

            Matrix beta_ref, gamma_ref;
            oracles::prox_gradient_logit(X, Y, l1, l2, penalty, beta_ref, gamma_ref);
            const double obj = logit::nll_objective(X, Y, beta, gamma, l1, l2, penalty);
            const double obj_ref =
                logit::nll_objective(X, Y, beta_ref, gamma_ref, l1, l2, penalty);
            CHECK(std::abs(obj - obj_ref) <= 1e-4);
        }
    }
}

TEST_CASE("separable data is fit perfectly by the beta block at small lambda") {
    const auto store = data::synth_gaussian(2, 8, 3, 8.0, 0.1, 77);
    const Matrix X = data::l2_normalize(store.features);
    const Matrix Y = data::one_hot(store.labels, 2);

    logit::LogitPathConfig cfg;
    Matrix beta = Matrix::Zero(3, 2), gamma = Matrix::Zero(16, 2);
    logit::solve_logit_point(X, Y, 1e-4, 1e-3, Penalty::group_l2, cfg, beta, gamma);

    const Matrix scores = X * beta;
    int correct = 0;
    for (Eigen::Index i = 0; i < 16; ++i) {
        const int pred = scores(i, 0) >= scores(i, 1) ? 0 : 1;
        if (pred == store.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    CHECK(correct == 16);
}

TEST_CASE("objective is non-increasing across accepted partial-Newton steps") {
    Rng rng(6);
    const Matrix X = oracles::random_matrix(rng, 8, 3);
    IntVector labels;
    for (int i = 0; i < 8; ++i) labels.push_back(i % 2);
    const Matrix Y = data::one_hot(labels, 2);

    logit::LogitPathConfig cfg;
    Matrix beta = Matrix::Zero(3, 2), gamma = Matrix::Zero(8, 2);
    std::vector<double> objs;
    logit::solve_logit_point(X, Y, 0.01, 0.02, Penalty::group_l2, cfg, beta, gamma,
                             &objs);
    REQUIRE(!objs.empty());
    CHECK(objs.front() <= std::log(2.0) + 1e-8);
    for (std::size_t s = 1; s < objs.size(); ++s) {
        CHECK(objs[s] <= objs[s - 1] + 1e-8);
    }
}

TEST_CASE("probability rows sum to one") {
    Rng rng(7);
    const Matrix X = oracles::random_matrix(rng, 9, 3);
    const Matrix beta = oracles::random_matrix(rng, 3, 4, 5.0);
    const Matrix gamma = oracles::random_matrix(rng, 9, 4, 5.0);
    const Matrix P = logit::probabilities(X, beta, gamma);
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
        CHECK(std::abs(P.row(i).sum() - 1.0) <= 1e-10);
        CHECK(P.row(i).minCoeff() >= 0.0);
    }
}

TEST_CASE("gamma vanishes at the head of the automatic grid") {
    const auto store = data::synth_gaussian(3, 5, 3, 3.0, 1.0, 11);
    const Matrix X = data::l2_normalize(store.features);
    const Matrix Y = data::one_hot(store.labels, 3);

    logit::LogitPathConfig cfg;
    cfg.grid_count = 12;
    const auto p = logit::solve_logit_path(X, Y, cfg, Penalty::group_l2);
    REQUIRE(p.gammas.size() == 12);
    CHECK(p.gammas[0].cwiseAbs().maxCoeff() == 0.0);
    CHECK(p.gammas.back().cwiseAbs().maxCoeff() > 0.0);
    CHECK(p.vanish.size() == 15);
}

TEST_CASE("alpha must be positive") {
    const Matrix X = Matrix::Zero(4, 2);
    const Matrix Y = data::one_hot({0, 1, 0, 1}, 2);
    logit::LogitPathConfig cfg;
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(logit::solve_logit_path(X, Y, cfg, Penalty::l1), ConfigError);
}

TEST_CASE("solver beta rows have minimal penalty among shift-equivalent solutions") {
    Rng rng(8);
    const Matrix X = oracles::random_matrix(rng, 10, 3);
    IntVector labels;
    for (int i = 0; i < 10; ++i) labels.push_back(i % 2);
    const Matrix Y = data::one_hot(labels, 2);

    logit::LogitPathConfig cfg;
    cfg.tol = 1e-9;
    cfg.max_outer = 400;
    Matrix beta = Matrix::Zero(3, 2), gamma = Matrix::Zero(10, 2);
    logit::solve_logit_point(X, Y, 0.02, 0.04, Penalty::group_l2, cfg, beta, gamma);

    // Shifting any beta row by kappa keeps the data term fixed; the returned
    // row must already be (near) the penalty minimizer over kappa.
    for (Eigen::Index k = 0; k < 3; ++k) {
        const double base = beta.row(k).norm();
        for (double kappa : {-0.05, -0.01, 0.01, 0.05}) {
            const double shifted = (beta.row(k).array() + kappa).matrix().norm();
            CHECK(shifted >= base - 1e-5);
        }
    }
}

TEST_CASE("gradient check against finite differences") {
    Rng rng(9);
    const Matrix X = oracles::random_matrix(rng, 5, 2);
    const Matrix Y = data::one_hot({0, 1, 2, 0, 1}, 3);
    const Matrix beta = oracles::random_matrix(rng, 2, 3);
    const Matrix gamma = oracles::random_matrix(rng, 5, 3);
    CHECK(logit::gradient_check(X, Y, beta, gamma) < 1e-4);
}

TEST_CASE("gradient at zero is the uniform-softmax expression") {
    Rng rng(10);
    const Matrix X = oracles::random_matrix(rng, 6, 2);
    const Matrix Y = data::one_hot({0, 1, 0, 1, 0, 1}, 2);
    const Matrix beta = Matrix::Zero(2, 2), gamma = Matrix::Zero(6, 2);

    const Matrix P = logit::probabilities(X, beta, gamma);
    CHECK((P.array() - 0.5).abs().maxCoeff() <= 1e-15);

    const auto a = logit::augment_design(X);
    const Matrix G = (P - Y) / 6.0;
    Matrix grad_full(2 + 6, 2);
    grad_full.topRows(2) = X.transpose() * G;
    grad_full.bottomRows(6) = G;
    const Matrix expect = -(a.Xbar.transpose() * (Y.array() - 0.5).matrix()) / 6.0;
    CHECK((grad_full - expect).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("duplicating every instance leaves the averaged gradient unchanged") {
    Rng rng(11);
    const Matrix X = oracles::random_matrix(rng, 4, 2);
    const Matrix Y = data::one_hot({0, 1, 1, 0}, 2);
    const Matrix beta = oracles::random_matrix(rng, 2, 2);

    Matrix X2(8, 2), Y2(8, 2);
    X2 << X, X;
    Y2 << Y, Y;

    const Matrix G1 =
        X.transpose() * (logit::probabilities(X, beta, Matrix::Zero(4, 2)) - Y) / 4.0;
    const Matrix G2 =
        X2.transpose() * (logit::probabilities(X2, beta, Matrix::Zero(8, 2)) - Y2) / 8.0;
    CHECK((G1 - G2).cwiseAbs().maxCoeff() <= 1e-12);
}
