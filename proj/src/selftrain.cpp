#include "ici/selftrain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <mutex>
#include <thread>

#include "ici/rng.hpp"

namespace ici::loop {

namespace {

Matrix vstack(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() + b.rows(), a.cols());
    out.topRows(a.rows()) = a;
    out.bottomRows(b.rows()) = b;
    return out;
}

}  // namespace

Matrix reduce_for_ici(const Matrix& X, const LoopConfig& cfg) {
    const Matrix pre = cfg.normalize ? data::l2_normalize(X) : X;
    switch (cfg.reduce) {
        case dimred::Method::lle: {
            // Episode pools can be smaller than the configured d/k.
            const int d = static_cast<int>(
                std::min<Eigen::Index>(cfg.d, std::min(pre.cols(), pre.rows() - 1)));
            const int k = static_cast<int>(
                std::min<Eigen::Index>(cfg.k_lle, pre.rows() - 1));
            return dimred::lle_fit_transform(pre, d, k, cfg.lle_reg).Z;
        }
        case dimred::Method::pca: {
            const int d = static_cast<int>(
                std::min<Eigen::Index>(cfg.d, std::min(pre.rows(), pre.cols())));
            return dimred::pca_fit_transform(pre, d).Z;
        }
        case dimred::Method::none:
            return pre;
    }
    return pre;
}

namespace {

struct FittedClassifier {
    clf::LinearClassifier lr;
    Matrix train_x;  // knn keeps its training data
    IntVector train_y;
    ClassifierKind kind = ClassifierKind::lr;
    int ways = 0;
    int knn_k = 1;

    std::vector<clf::Prediction> predict(const Matrix& X) const {
        if (kind == ClassifierKind::lr) return clf::predict(lr, X);
        return clf::fit_predict_knn(train_x, train_y,
                                    X, std::min<int>(knn_k, static_cast<int>(train_x.rows())),
                                    clf::KnnMetric::euclidean, ways);
    }
};

FittedClassifier fit_classifier(const Matrix& X, const IntVector& y, int ways,
                                const LoopConfig& cfg) {
    FittedClassifier f;
    f.kind = cfg.classifier;
    f.ways = ways;
    f.knn_k = cfg.knn_k;
    if (cfg.classifier == ClassifierKind::lr) {
        const double reg =
            cfg.logreg_reg >= 0.0 ? cfg.logreg_reg : 1.0 / static_cast<double>(X.rows());
        f.lr = clf::fit_logreg(X, y, ways, reg);
    } else {
        f.train_x = X;
        f.train_y = y;
    }
    return f;
}

double accuracy(const std::vector<clf::Prediction>& preds, const IntVector& truth) {
    if (preds.empty()) return 0.0;
    int correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].label == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

path::GammaPath solve_ici_path(const Matrix& reduced, const Matrix& Y,
                               const LoopConfig& cfg, Variant variant) {
    if (variant == Variant::icir) {
        const auto ann = path::annihilator(
            reduced, path::default_rcond(reduced.rows(), reduced.cols()));
        const auto grid = path::LambdaGrid::geometric(path::lambda_max(ann, Y),
                                                      cfg.grid_count, cfg.grid_ratio);
        return path::solve_path(ann, Y, grid, cfg.penalty,
                                {.tol = cfg.tol, .max_iter = cfg.max_iter});
    }
    logit::LogitPathConfig lcfg;
    lcfg.alpha = cfg.alpha;
    lcfg.grid_count = cfg.grid_count;
    lcfg.grid_ratio = cfg.grid_ratio;
    lcfg.tol = cfg.tol;
    return logit::solve_logit_path(reduced, Y, lcfg, cfg.penalty);
}

}  // namespace

std::vector<int> select_subset(const path::CredibilityRanking& ranking,
                               const IntVector& pseudo_labels,
                               const std::vector<char>& eligible, int per_class, int c,
                               int budget) {
    if (per_class < 1) throw ConfigError("select_subset needs per_class >= 1");
    std::vector<int> quota(static_cast<std::size_t>(c), per_class);
    std::vector<int> picked;
    for (int idx : ranking.order) {
        if (budget >= 0 && static_cast<int>(picked.size()) >= budget) break;
        const auto ui = static_cast<std::size_t>(idx);
        if (!eligible[ui]) continue;
        const int cls = pseudo_labels[ui];
        if (quota[static_cast<std::size_t>(cls)] <= 0) continue;
        --quota[static_cast<std::size_t>(cls)];
        picked.push_back(idx);
        if (std::all_of(quota.begin(), quota.end(), [](int q) { return q <= 0; })) break;
    }
    return picked;
}

path::CredibilityRanking baseline_rank(Selection strategy, const RankContext& ctx) {
    path::CredibilityRanking r;
    switch (strategy) {
        case Selection::ra: {
            const std::size_t n = ctx.labels->size();
            r.order.resize(n);
            std::iota(r.order.begin(), r.order.end(), 0);
            Rng rng(ctx.seed);
            rng.shuffle(r.order);
            r.scores.resize(n);
            for (std::size_t pos = 0; pos < n; ++pos) {
                r.scores[static_cast<std::size_t>(r.order[pos])] = static_cast<double>(pos);
            }
            r.residual.assign(n, 0.0);
            return r;
        }
        case Selection::nn: {
            const Matrix& Z = *ctx.reduced;
            const auto n = static_cast<std::size_t>(Z.rows());
            r.scores.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                if ((*ctx.is_labeled)[i]) {
                    r.scores[i] = 0.0;
                    continue;
                }
                double best = std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < n; ++j) {
                    if (!(*ctx.is_labeled)[j]) continue;
                    if ((*ctx.labels)[j] != (*ctx.labels)[i]) continue;
                    best = std::min(best, (Z.row(static_cast<Eigen::Index>(j)) -
                                           Z.row(static_cast<Eigen::Index>(i)))
                                              .norm());
                }
                r.scores[i] = best;
            }
            break;
        }
        case Selection::co: {
            const auto n = ctx.confidences->size();
            r.scores.resize(n);
            for (std::size_t i = 0; i < n; ++i) r.scores[i] = -(*ctx.confidences)[i];
            break;
        }
        case Selection::cn: {
            if (!ctx.ici_path) throw ConfigError("cn ranking needs a solved path");
            const Matrix& tail = ctx.ici_path->gammas.back();
            const auto n = static_cast<std::size_t>(tail.rows());
            r.scores.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                r.scores[i] = tail.row(static_cast<Eigen::Index>(i)).norm();
            }
            break;
        }
        case Selection::ici:
            throw ConfigError("ici is not a baseline strategy");
    }
    const std::size_t n = r.scores.size();
    r.residual.assign(n, 0.0);
    r.order.resize(n);
    std::iota(r.order.begin(), r.order.end(), 0);
    std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
        return r.scores[static_cast<std::size_t>(a)] < r.scores[static_cast<std::size_t>(b)];
    });
    return r;
}

EpisodeResult run_episode(const data::Episode& ep, const LoopConfig& cfg) {
    const int c = ep.ways;
    const auto n_support = ep.support_x.rows();
    const auto n_unl = ep.unlabeled_x.rows();

    EpisodeResult res;

    FittedClassifier clf = fit_classifier(ep.support_x, ep.support_y, c, cfg);
    if (ep.query_x.rows() > 0) {
        res.base_accuracy = accuracy(clf.predict(ep.query_x), ep.query_y);
    }
    if (n_unl == 0) {
        res.query_accuracy = res.base_accuracy;
        return res;
    }

    const Matrix all_x = vstack(ep.support_x, ep.unlabeled_x);
    Matrix reduced = reduce_for_ici(all_x, cfg);

    std::vector<char> selected(static_cast<std::size_t>(n_unl), 0);
    IntVector assigned(static_cast<std::size_t>(n_unl), -1);

    const auto& truth = ep.hidden_truth_for_diagnostics();
    long total_selected = 0;
    const int max_iterations = static_cast<int>(n_unl) + 1;

    int iter = 0;
    for (; iter < max_iterations; ++iter) {
        if (total_selected == n_unl) break;
        if (cfg.total_cap >= 0 && total_selected >= cfg.total_cap) break;

        if (cfg.recompute_reduction_per_iter && iter > 0) {
            reduced = reduce_for_ici(all_x, cfg);
        }

        // Pseudo-label the pool; already-selected rows keep their labels.
        const auto preds = clf.predict(ep.unlabeled_x);
        IntVector labels_now(static_cast<std::size_t>(n_support + n_unl));
        std::vector<double> conf(static_cast<std::size_t>(n_support + n_unl), 1.0);
        for (Eigen::Index i = 0; i < n_support; ++i) {
            labels_now[static_cast<std::size_t>(i)] = ep.support_y[static_cast<std::size_t>(i)];
        }
        for (Eigen::Index u = 0; u < n_unl; ++u) {
            const auto row = static_cast<std::size_t>(n_support + u);
            const auto ui = static_cast<std::size_t>(u);
            const int l = selected[ui] ? assigned[ui] : preds[ui].label;
            labels_now[row] = l;
            conf[row] = preds[ui].proba(l);
        }

        const Matrix Y = data::one_hot(labels_now, c);

        path::GammaPath ici_path;
        path::CredibilityRanking ranking;
        if (cfg.selection == Selection::ici || cfg.selection == Selection::cn) {
            ici_path = solve_ici_path(reduced, Y, cfg, cfg.variant);
            res.total_grid_points += static_cast<long>(ici_path.converged.size());
            for (char ok : ici_path.converged) {
                if (!ok) ++res.nonconverged_grid_points;
            }
        }
        if (cfg.selection == Selection::ici) {
            ranking = path::rank_instances(ici_path, conf);
        } else {
            // rows in the current support: original labels plus everything
            // already selected
            std::vector<char> is_labeled(static_cast<std::size_t>(n_support + n_unl), 0);
            for (Eigen::Index i = 0; i < n_support; ++i) {
                is_labeled[static_cast<std::size_t>(i)] = 1;
            }
            for (Eigen::Index u = 0; u < n_unl; ++u) {
                is_labeled[static_cast<std::size_t>(n_support + u)] =
                    selected[static_cast<std::size_t>(u)];
            }
            RankContext ctx;
            ctx.reduced = &reduced;
            ctx.labels = &labels_now;
            ctx.is_labeled = &is_labeled;
            ctx.confidences = &conf;
            ctx.ici_path = cfg.selection == Selection::cn ? &ici_path : nullptr;
            ctx.seed = Rng::mix(Rng::mix(cfg.seed, ep.seed), static_cast<std::uint64_t>(iter));
            ranking = baseline_rank(cfg.selection, ctx);
        }

        std::vector<char> eligible(static_cast<std::size_t>(n_support + n_unl), 0);
        for (Eigen::Index u = 0; u < n_unl; ++u) {
            eligible[static_cast<std::size_t>(n_support + u)] = !selected[static_cast<std::size_t>(u)];
        }
        int budget = -1;
        if (cfg.total_cap >= 0) {
            budget = cfg.total_cap - static_cast<int>(total_selected);
        }
        const auto picks =
            select_subset(ranking, labels_now, eligible, cfg.per_class_per_iter, c, budget);
        if (picks.empty()) break;

        IterationRecord rec;
        for (int row : picks) {
            const auto u = static_cast<std::size_t>(row - n_support);
            selected[u] = 1;
            assigned[u] = labels_now[static_cast<std::size_t>(row)];
            rec.selected.push_back(static_cast<int>(u));
            rec.pseudo_labels.push_back(assigned[u]);
            if (!truth.empty() && assigned[u] == truth[u]) ++rec.correct;
            ++total_selected;
        }
        res.records.push_back(std::move(rec));
        ++res.iterations;

        // Retrain on support plus everything selected so far.
        std::vector<int> rows;
        IntVector train_y(ep.support_y);
        for (Eigen::Index u = 0; u < n_unl; ++u) {
            if (selected[static_cast<std::size_t>(u)]) {
                rows.push_back(static_cast<int>(u));
                train_y.push_back(assigned[static_cast<std::size_t>(u)]);
            }
        }
        Matrix train_x(n_support + static_cast<Eigen::Index>(rows.size()), all_x.cols());
        train_x.topRows(n_support) = ep.support_x;
        for (std::size_t rix = 0; rix < rows.size(); ++rix) {
            train_x.row(n_support + static_cast<Eigen::Index>(rix)) =
                ep.unlabeled_x.row(rows[rix]);
        }
        clf = fit_classifier(train_x, train_y, c, cfg);
    }
    res.converged = iter < max_iterations;

    if (ep.query_x.rows() > 0) {
        res.query_accuracy = accuracy(clf.predict(ep.query_x), ep.query_y);
    }
    return res;
}

AccuracyReport evaluate(const std::vector<EpisodeResult>& results) {
    if (results.empty()) throw ConfigError("evaluate needs at least one result");
    AccuracyReport rep;
    rep.episodes = static_cast<int>(results.size());
    rep.per_episode.reserve(results.size());

    double sum = 0.0, base_sum = 0.0;
    std::size_t max_iters = 0;
    for (const auto& r : results) {
        rep.per_episode.push_back(r.query_accuracy);
        sum += r.query_accuracy;
        base_sum += r.base_accuracy;
        max_iters = std::max(max_iters, r.records.size());
        rep.nonconverged_grid_points += r.nonconverged_grid_points;
        rep.total_grid_points += r.total_grid_points;
    }
    rep.mean_accuracy = sum / static_cast<double>(results.size());
    rep.mean_base_accuracy = base_sum / static_cast<double>(results.size());

    if (results.size() > 1) {
        double ss = 0.0;
        for (double a : rep.per_episode) {
            ss += (a - rep.mean_accuracy) * (a - rep.mean_accuracy);
        }
        const double stddev = std::sqrt(ss / static_cast<double>(results.size() - 1));
        rep.ci95 = 1.96 * stddev / std::sqrt(static_cast<double>(results.size()));
    }

    rep.selection_precision_by_iter.assign(max_iters, 0.0);
    rep.selected_by_iter.assign(max_iters, 0);
    std::vector<long> correct(max_iters, 0);
    for (const auto& r : results) {
        for (std::size_t t = 0; t < r.records.size(); ++t) {
            rep.selected_by_iter[t] += static_cast<long>(r.records[t].selected.size());
            correct[t] += r.records[t].correct;
        }
    }
    for (std::size_t t = 0; t < max_iters; ++t) {
        if (rep.selected_by_iter[t] > 0) {
            rep.selection_precision_by_iter[t] =
                static_cast<double>(correct[t]) / static_cast<double>(rep.selected_by_iter[t]);
        }
    }
    return rep;
}

std::vector<EpisodeResult> run_episodes(const data::FeatureStore& store,
                                        const data::EpisodeSpec& spec,
                                        const LoopConfig& cfg, int episodes,
                                        std::uint64_t master_seed, int jobs) {
    if (episodes < 1) throw ConfigError("need episodes >= 1");
    std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));

    const int workers = std::max(1, std::min(jobs, episodes));
    std::atomic<int> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto work = [&] {
        for (;;) {
            const int e = next.fetch_add(1);
            if (e >= episodes) return;
            try {
                const auto ep = data::sample_episode(store, spec,
                                                     master_seed ^ static_cast<std::uint64_t>(e));
                results[static_cast<std::size_t>(e)] = run_episode(ep, cfg);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };

    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);
    return results;
}

}  // namespace ici::loop
