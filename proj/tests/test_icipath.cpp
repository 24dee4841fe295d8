#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "ici/datamodel.hpp"
#include "ici/icipath.hpp"
#include "ici/rng.hpp"
#include "oracles.hpp"

using namespace ici;
using path::Penalty;

namespace {

path::Annihilator identity_annihilator(Eigen::Index n) {
    // X = 0 has empty column space, so the projector is the identity.
    return path::annihilator(Matrix::Zero(n, 2), path::default_rcond(n, 2));
}

}  // namespace

TEST_CASE("annihilator of a full-rank square design is zero") {
    const Matrix X = Matrix::Identity(4, 4);
    const auto ann = path::annihilator(X, path::default_rcond(4, 4));
    CHECK(ann.rank_X == 4);
    CHECK(ann.Xtilde.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("annihilator with orthonormal columns kills the design") {
    Matrix X = Matrix::Zero(5, 2);
    X(0, 0) = 1.0;
    X(3, 1) = 1.0;
    const auto ann = path::annihilator(X, path::default_rcond(5, 2));
    const Matrix H = Matrix::Identity(5, 5) - ann.Xtilde;
    CHECK((H - X * X.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((ann.Xtilde * X).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("annihilator is symmetric and idempotent") {
    Rng rng(2);
    const Matrix X = oracles::random_matrix(rng, 12, 5);
    const auto ann = path::annihilator(X, path::default_rcond(12, 5));
    CHECK((ann.Xtilde - ann.Xtilde.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((ann.Xtilde * ann.Xtilde - ann.Xtilde).cwiseAbs().maxCoeff() <= 1e-10);
    CHECK((ann.Xtilde * X).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("annihilator handles rank deficiency by truncation") {
    Rng rng(4);
    Matrix X = oracles::random_matrix(rng, 10, 4);
    X.col(3) = 2.0 * X.col(1);  // rank 3
    const auto ann = path::annihilator(X, path::default_rcond(10, 4));
    CHECK(ann.rank_X == 3);
    CHECK((ann.Xtilde * X).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("lambda_max identity case") {
    const auto ann = identity_annihilator(2);
    const Matrix Y = Matrix::Identity(2, 2);
    CHECK(path::lambda_max(ann, Y) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("lambda_max is zero when Y lies in the design column space") {
    Rng rng(6);
    const Matrix X = oracles::random_matrix(rng, 8, 3);
    const Matrix Y = X * oracles::random_matrix(rng, 3, 2);
    const auto ann = path::annihilator(X, path::default_rcond(8, 3));
    CHECK(path::lambda_max(ann, Y) <= 1e-10);
}

TEST_CASE("lambda_max equals the brute-force column loop") {
    Rng rng(8);
    const Matrix X = oracles::random_matrix(rng, 10, 4);
    const Matrix Y = oracles::random_matrix(rng, 10, 3);
    const auto ann = path::annihilator(X, path::default_rcond(10, 4));

    const Matrix Ytilde = ann.Xtilde * Y;
    double brute = 0.0;
    for (Eigen::Index i = 0; i < 10; ++i) {
        double sq = 0.0;
        for (Eigen::Index j = 0; j < Y.cols(); ++j) {
            double dot = 0.0;
            for (Eigen::Index r = 0; r < 10; ++r) dot += ann.Xtilde(r, i) * Ytilde(r, j);
            sq += dot * dot;
        }
        brute = std::max(brute, std::sqrt(sq));
    }
    brute /= 10.0;
    CHECK(path::lambda_max(ann, Y) == doctest::Approx(brute).epsilon(1e-12));
}

TEST_CASE("lambda grid is geometric and anchored at lambda_max") {
    const auto g = path::LambdaGrid::geometric(2.0, 100, 1e-3);
    REQUIRE(g.values.size() == 100);
    CHECK(g.values[0] == 2.0);
    CHECK(g.values[99] == doctest::Approx(2e-3).epsilon(1e-10));
    for (std::size_t i = 1; i < 100; ++i) {
        CHECK(g.values[i] < g.values[i - 1]);
        CHECK(g.values[i] / g.values[i - 1] ==
              doctest::Approx(std::pow(1e-3, 1.0 / 99.0)).epsilon(1e-9));
    }
    const auto zero = path::LambdaGrid::geometric(0.0, 5, 1e-3);
    for (double v : zero.values) CHECK(v == 0.0);
}

TEST_CASE("path solution is exactly zero at lambda_max and active just below") {
    Rng rng(10);
    int activated = 0;
    for (int rep = 0; rep < 20; ++rep) {
        const Matrix X = oracles::random_matrix(rng, 9, 3);
        const Matrix Y = oracles::random_matrix(rng, 9, 2);
        const auto ann = path::annihilator(X, path::default_rcond(9, 3));
        const double lmax = path::lambda_max(ann, Y);
        path::LambdaGrid grid;
        grid.values = {lmax, 0.99 * lmax};
        const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
        CHECK(p.gammas[0].cwiseAbs().maxCoeff() == 0.0);
        if (p.gammas[1].cwiseAbs().maxCoeff() > 0.0) ++activated;
    }
    CHECK(activated >= 19);
}

TEST_CASE("identity-design group path matches block soft-thresholding") {
    Rng rng(12);
    const Eigen::Index n = 6, c = 3;
    const auto ann = identity_annihilator(n);
    const Matrix Y = oracles::random_matrix(rng, n, c);
    const double lmax = path::lambda_max(ann, Y);
    const auto grid = path::LambdaGrid::geometric(lmax, 40, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);

    for (std::size_t g = 0; g < grid.values.size(); ++g) {
        const double lambda = grid.values[g];
        for (Eigen::Index i = 0; i < n; ++i) {
            const double norm = Y.row(i).norm();
            Eigen::RowVectorXd expect = Eigen::RowVectorXd::Zero(c);
            const double thresh = static_cast<double>(n) * lambda;
            if (norm > thresh) expect = Y.row(i) * (1.0 - thresh / norm);
            CHECK((p.gammas[g].row(i) - expect).cwiseAbs().maxCoeff() <= 1e-8);
        }
    }
}

TEST_CASE("path solve matches the proximal-gradient oracle at fixed lambdas") {
    Rng rng(14);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix X = oracles::random_matrix(rng, 8, 2);
        const Matrix Y = oracles::random_matrix(rng, 8, 3);
        const auto ann = path::annihilator(X, path::default_rcond(8, 2));
        const double lmax = path::lambda_max(ann, Y);
        const Matrix Ytilde = ann.Xtilde * Y;

        for (double frac : {0.5, 0.1, 0.01}) {
            const double lambda = frac * lmax;
            path::LambdaGrid grid;
            grid.values = {lambda};
            for (auto penalty : {Penalty::group_l2, Penalty::l1}) {
                // tighter than the default tol: the projector design has flat
                // directions, and the comparison is about the minimizer
                const auto p = path::solve_path(ann, Y, grid, penalty,
                                                {.tol = 1e-9, .max_iter = 100000});
                const Matrix ref =
                    oracles::prox_gradient_linear(ann.Xtilde, Ytilde, lambda, penalty);
                const double obj_cd =
                    path::objective(ann.Xtilde, Ytilde, p.gammas[0], lambda, penalty);
                const double obj_ref =
                    path::objective(ann.Xtilde, Ytilde, ref, lambda, penalty);
                CHECK(obj_cd <= obj_ref + 1e-5);
                CHECK(std::abs(obj_cd - obj_ref) <= 1e-5);
                CHECK((p.gammas[0] - ref).cwiseAbs().maxCoeff() <= 1e-4);
            }
        }
    }
}

TEST_CASE("every grid point satisfies the stationarity certificate") {
    Rng rng(16);
    for (auto penalty : {Penalty::group_l2, Penalty::l1}) {
        const Matrix X = oracles::random_matrix(rng, 12, 4);
        const Matrix Y = oracles::random_matrix(rng, 12, 3);
        const auto ann = path::annihilator(X, path::default_rcond(12, 4));
        const auto grid =
            path::LambdaGrid::geometric(path::lambda_max(ann, Y), 30, 1e-3);
        const auto p = path::solve_path(ann, Y, grid, penalty);
        const Matrix Ytilde = ann.Xtilde * Y;
        for (std::size_t g = 0; g < grid.values.size(); ++g) {
            const auto kkt = oracles::kkt_check_linear(ann.Xtilde, Ytilde, p.gammas[g],
                                                       grid.values[g], penalty, 1e-5);
            CHECK(kkt.ok);
        }
    }
}

TEST_CASE("objective is non-increasing across coordinate-descent sweeps") {
    Rng rng(18);
    const Matrix X = oracles::random_matrix(rng, 10, 3);
    const Matrix Y = oracles::random_matrix(rng, 10, 2);
    const auto ann = path::annihilator(X, path::default_rcond(10, 3));
    const double lambda = 0.05 * path::lambda_max(ann, Y);
    const Matrix Ytilde = ann.Xtilde * Y;

    Matrix gamma = Matrix::Zero(10, 2);
    std::vector<double> objs;
    path::coordinate_descent(ann.Xtilde, Ytilde, lambda, Penalty::group_l2,
                             {.tol = 1e-10, .max_iter = 500}, gamma, &objs);
    REQUIRE(objs.size() >= 2);
    for (std::size_t s = 1; s < objs.size(); ++s) {
        CHECK(objs[s] <= objs[s - 1] + 1e-12);
    }
}

TEST_CASE("non-convergence is flagged but not fatal") {
    Rng rng(20);
    const Matrix X = oracles::random_matrix(rng, 15, 3);
    const Matrix Y = oracles::random_matrix(rng, 15, 4);
    const auto ann = path::annihilator(X, path::default_rcond(15, 3));
    const auto grid = path::LambdaGrid::geometric(path::lambda_max(ann, Y), 10, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2,
                                    {.tol = 1e-14, .max_iter = 1});
    CHECK(std::find(p.converged.begin(), p.converged.end(), 0) != p.converged.end());
    CHECK(p.gammas.size() == 10);
}

TEST_CASE("vanish lambda uses the stays-zero rule") {
    const Eigen::Index n = 2;
    const auto ann = identity_annihilator(n);
    Matrix Y(n, 2);
    Y << 0.2, 0.0, 0.0, 0.9;  // row norms 0.2 and 0.9
    const double lmax = path::lambda_max(ann, Y);
    CHECK(lmax == doctest::Approx(0.45).epsilon(1e-12));

    const auto grid = path::LambdaGrid::geometric(lmax, 60, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);

    // rows vanish at ||y_i|| / n on the identity design; on the discrete
    // grid that is the smallest grid value at/above the threshold
    auto expected_vanish = [&](double row_norm) {
        const double thresh = row_norm / static_cast<double>(n);
        double best = grid.values[0];
        for (double v : grid.values) {
            if (v >= thresh - 1e-15) best = v;
        }
        return best;
    };
    CHECK(p.vanish[0] == doctest::Approx(expected_vanish(0.2)).epsilon(1e-12));
    CHECK(p.vanish[1] == doctest::Approx(expected_vanish(0.9)).epsilon(1e-12));
    CHECK(p.vanish[0] < p.vanish[1]);

    const auto ranking = path::rank_instances(p, {0.5, 0.5});
    CHECK(ranking.order[0] == 0);
    CHECK(ranking.order[1] == 1);
}

TEST_CASE("all-zero rows vanish at the smallest grid value") {
    Rng rng(22);
    const Matrix X = oracles::random_matrix(rng, 6, 2);
    const Matrix Y = X * oracles::random_matrix(rng, 2, 3);  // Ytilde = 0
    const auto ann = path::annihilator(X, path::default_rcond(6, 2));
    const auto grid = path::LambdaGrid::geometric(1.0, 20, 1e-2);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
    for (double v : p.vanish) CHECK(v == doctest::Approx(grid.values.back()));
}

TEST_CASE("identical rows get identical vanish lambda, ties break by index") {
    const auto ann = identity_annihilator(2);
    Matrix Y(2, 2);
    Y << 0.7, 0.1, 0.7, 0.1;
    const auto grid =
        path::LambdaGrid::geometric(path::lambda_max(ann, Y), 30, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
    CHECK(p.vanish[0] == p.vanish[1]);
    const auto ranking = path::rank_instances(p, {0.5, 0.5});
    CHECK(ranking.order == std::vector<int>{0, 1});
}

TEST_CASE("ranking follows score, then residual, then confidence, then index") {
    path::GammaPath p;
    p.grid.values = {1.0, 0.1};
    p.penalty = Penalty::group_l2;
    p.tol = 1e-6;
    Matrix tail(3, 1);
    tail << 0.0, 0.3, 0.0;
    p.gammas = {Matrix::Zero(3, 1), tail};
    p.vanish = {0.1, 0.5, 0.1};

    const auto r = path::rank_instances(p, {0.5, 0.5, 0.5});
    CHECK(r.order == std::vector<int>{0, 2, 1});

    p.vanish = {0.1, 0.1, 0.1};
    p.gammas = {Matrix::Zero(3, 1), Matrix::Zero(3, 1)};
    const auto r2 = path::rank_instances(p, {0.2, 0.9, 0.1});
    CHECK(r2.order == std::vector<int>{1, 0, 2});
}

TEST_CASE("ranking of a random path is the tuple sort") {
    Rng rng(24);
    const Matrix X = oracles::random_matrix(rng, 10, 3);
    const Matrix Y = oracles::random_matrix(rng, 10, 2);
    const auto ann = path::annihilator(X, path::default_rcond(10, 3));
    const auto grid =
        path::LambdaGrid::geometric(path::lambda_max(ann, Y), 25, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
    std::vector<double> conf(10);
    for (auto& v : conf) v = rng.uniform();

    const auto r = path::rank_instances(p, conf);
    std::vector<int> sorted = r.order;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 10; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    for (std::size_t k = 1; k < r.order.size(); ++k) {
        const auto a = static_cast<std::size_t>(r.order[k - 1]);
        const auto b = static_cast<std::size_t>(r.order[k]);
        const auto ta = std::make_tuple(r.scores[a], r.residual[a], -conf[a], int(a));
        const auto tb = std::make_tuple(r.scores[b], r.residual[b], -conf[b], int(b));
        CHECK(ta <= tb);
    }
}

TEST_CASE("vanish lambda is equivariant under row permutation") {
    Rng rng(26);
    const Matrix X = oracles::random_matrix(rng, 8, 3);
    const Matrix Y = oracles::random_matrix(rng, 8, 2);

    std::vector<int> perm{3, 1, 7, 0, 5, 2, 6, 4};
    Matrix Xp(8, 3), Yp(8, 2);
    for (int i = 0; i < 8; ++i) {
        Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
        Yp.row(i) = Y.row(perm[static_cast<std::size_t>(i)]);
    }

    const auto ann = path::annihilator(X, path::default_rcond(8, 3));
    const auto annp = path::annihilator(Xp, path::default_rcond(8, 3));
    const double lmax = path::lambda_max(ann, Y);
    CHECK(path::lambda_max(annp, Yp) == doctest::Approx(lmax).epsilon(1e-10));
    const auto grid = path::LambdaGrid::geometric(lmax, 30, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
    const auto pp = path::solve_path(annp, Yp, grid, Penalty::group_l2);
    for (int i = 0; i < 8; ++i) {
        CHECK(pp.vanish[static_cast<std::size_t>(i)] ==
              doctest::Approx(p.vanish[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])])
                  .epsilon(1e-8));
    }
}

TEST_CASE("planted errors keep clean rows at the bottom of the path") {
    Rng rng(28);
    const Matrix X = oracles::random_matrix(rng, 12, 3);
    const Matrix B = oracles::random_matrix(rng, 3, 2);
    Matrix Y = X * B;
    Y.row(2) += Eigen::RowVectorXd::Constant(2, 2.0);
    Y(7, 0) -= 3.0;

    const auto ann = path::annihilator(X, path::default_rcond(12, 3));
    const auto grid =
        path::LambdaGrid::geometric(path::lambda_max(ann, Y), 50, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);
    for (int i = 0; i < 12; ++i) {
        if (i == 2 || i == 7) {
            CHECK(p.vanish[static_cast<std::size_t>(i)] > grid.values.back());
        } else {
            CHECK(p.vanish[static_cast<std::size_t>(i)] ==
                  doctest::Approx(grid.values.back()));
        }
    }
}

TEST_CASE("beta_hat closed forms") {
    Rng rng(30);
    const Matrix X = oracles::random_matrix(rng, 7, 3);
    const Matrix Y = oracles::random_matrix(rng, 7, 2);
    const double rc = path::default_rcond(7, 3);

    CHECK(path::beta_hat(X, Y, Y, rc).cwiseAbs().maxCoeff() <= 1e-10);

    Matrix Q = Matrix::Zero(7, 2);
    Q(1, 0) = 1.0;
    Q(4, 1) = 1.0;
    CHECK((path::beta_hat(Q, Y, Matrix::Zero(7, 2), rc) - Q.transpose() * Y)
              .cwiseAbs()
              .maxCoeff() <= 1e-10);

    // against an explicit SVD pseudo-inverse
    Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix pinv = svd.matrixV() *
                        svd.singularValues().cwiseInverse().asDiagonal() *
                        svd.matrixU().transpose();
    const Matrix gamma = oracles::random_matrix(rng, 7, 2);
    CHECK((path::beta_hat(X, Y, gamma, rc) - pinv * (Y - gamma)).cwiseAbs().maxCoeff() <=
          1e-10);
}

TEST_CASE("path dumps carry every instance with descending lambda blocks") {
    Rng rng(32);
    const Matrix X = oracles::random_matrix(rng, 10, 3);
    const Matrix Y = oracles::random_matrix(rng, 10, 2);
    const auto ann = path::annihilator(X, path::default_rcond(10, 3));
    const auto grid =
        path::LambdaGrid::geometric(path::lambda_max(ann, Y), 15, 1e-3);
    const auto p = path::solve_path(ann, Y, grid, Penalty::group_l2);

    const auto file = std::filesystem::temp_directory_path() / "ici_test_path.csv";
    path::dump_path_csv(p, file, "linear");

    std::ifstream in(file);
    std::string line;
    std::getline(in, line);
    CHECK(line == "lambda,instance,class,gamma,variant");
    std::set<int> instances;
    double prev_lambda = 0.0;
    std::pair<int, int> prev_block{-1, -1};
    int rows = 0;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string tok;
        std::getline(ss, tok, ',');
        const double lambda = std::stod(tok);
        std::getline(ss, tok, ',');
        const int inst = std::stoi(tok);
        std::getline(ss, tok, ',');
        const int cls = std::stoi(tok);
        instances.insert(inst);
        if (std::pair{inst, cls} == prev_block) {
            CHECK(lambda < prev_lambda);
        }
        prev_block = {inst, cls};
        prev_lambda = lambda;
        ++rows;
    }
    CHECK(instances.size() == 10);
    CHECK(rows == 10 * 2 * 15);
    std::filesystem::remove(file);
}
