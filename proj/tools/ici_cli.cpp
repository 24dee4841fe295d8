#include <CLI11.hpp>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "ici/classifiers.hpp"
#include "ici/datamodel.hpp"
#include "ici/icilogit.hpp"
#include "ici/icipath.hpp"
#include "ici/report.hpp"
#include "ici/selftrain.hpp"
#include "ici/theory.hpp"

namespace {

using namespace ici;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNonConvergence = 4;
constexpr double kNonConvergenceThreshold = 0.1;  // flagged / solved grid points

data::FeatureFormat format_for(const std::string& path, const std::string& override_fmt) {
    if (override_fmt == "csv") return data::FeatureFormat::csv;
    if (override_fmt == "icif") return data::FeatureFormat::icif;
    return path.size() >= 4 && path.substr(path.size() - 4) == ".csv"
               ? data::FeatureFormat::csv
               : data::FeatureFormat::icif;
}

struct LoopOpts {
    std::string variant = "icir";
    std::string selection = "ici";
    std::string penalty = "group";
    std::string reduce = "lle";
    std::string classifier = "lr";
    int per_class_per_iter = 5;
    int total_cap = -1;
    int d = 5;
    int k_lle = 5;
    double lle_reg = 1e-3;
    int grid_count = 100;
    double grid_ratio = 1e-3;
    double tol = 1e-6;
    double alpha = 0.5;
    double logreg_reg = -1.0;
    int knn_k = 1;
    bool no_normalize = false;
};

void add_loop_options(CLI::App* cmd, LoopOpts& o) {
    cmd->add_option("--variant", o.variant, "ICI variant: icir (linear) or icic (logistic)")
        ->check(CLI::IsMember({"icir", "icic"}));
    cmd->add_option("--selection", o.selection, "Selection strategy")
        ->check(CLI::IsMember({"ici", "ra", "nn", "co", "cn"}));
    cmd->add_option("--penalty", o.penalty, "Sparsity penalty on gamma")
        ->check(CLI::IsMember({"group", "l1"}));
    cmd->add_option("--reduce", o.reduce, "Dimension reduction for the ICI step")
        ->check(CLI::IsMember({"lle", "pca", "none"}));
    cmd->add_option("--classifier", o.classifier, "Downstream classifier")
        ->check(CLI::IsMember({"lr", "knn"}));
    cmd->add_option("--per-class-per-iter", o.per_class_per_iter,
                    "Instances moved into the support per class per iteration")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--total-cap", o.total_cap,
                    "Overall cap on selected instances (-1 = none)");
    cmd->add_option("--d", o.d, "Reduced dimension")->check(CLI::PositiveNumber);
    cmd->add_option("--k-lle", o.k_lle, "LLE neighbor count")->check(CLI::PositiveNumber);
    cmd->add_option("--lle-reg", o.lle_reg, "LLE Gram regularization");
    cmd->add_option("--grid-count", o.grid_count, "Lambda grid size")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--grid-ratio", o.grid_ratio, "lambda_min / lambda_max");
    cmd->add_option("--tol", o.tol, "Solver tolerance")->check(CLI::PositiveNumber);
    cmd->add_option("--alpha", o.alpha, "lambda1 = alpha * lambda2 (icic)");
    cmd->add_option("--logreg-reg", o.logreg_reg,
                    "Classifier l2 strength (-1 = 1/m default)");
    cmd->add_option("--knn-k", o.knn_k, "kNN neighbor count")->check(CLI::PositiveNumber);
    cmd->add_flag("--no-normalize", o.no_normalize,
                  "Skip L2 normalization before reduction");
}

loop::LoopConfig to_config(const LoopOpts& o, std::uint64_t seed) {
    loop::LoopConfig cfg;
    cfg.variant = o.variant == "icic" ? loop::Variant::icic : loop::Variant::icir;
    if (o.selection == "ici") cfg.selection = loop::Selection::ici;
    if (o.selection == "ra") cfg.selection = loop::Selection::ra;
    if (o.selection == "nn") cfg.selection = loop::Selection::nn;
    if (o.selection == "co") cfg.selection = loop::Selection::co;
    if (o.selection == "cn") cfg.selection = loop::Selection::cn;
    cfg.penalty = o.penalty == "l1" ? path::Penalty::l1 : path::Penalty::group_l2;
    if (o.reduce == "lle") cfg.reduce = dimred::Method::lle;
    if (o.reduce == "pca") cfg.reduce = dimred::Method::pca;
    if (o.reduce == "none") cfg.reduce = dimred::Method::none;
    cfg.classifier =
        o.classifier == "knn" ? loop::ClassifierKind::knn : loop::ClassifierKind::lr;
    cfg.per_class_per_iter = o.per_class_per_iter;
    cfg.total_cap = o.total_cap;
    cfg.d = o.d;
    cfg.k_lle = o.k_lle;
    cfg.lle_reg = o.lle_reg;
    cfg.grid_count = o.grid_count;
    cfg.grid_ratio = o.grid_ratio;
    cfg.tol = o.tol;
    cfg.alpha = o.alpha;
    cfg.logreg_reg = o.logreg_reg;
    cfg.knn_k = o.knn_k;
    cfg.normalize = !o.no_normalize;
    cfg.seed = seed;
    return cfg;
}

loop::Selection parse_selection(const std::string& name) {
    if (name == "ici") return loop::Selection::ici;
    if (name == "ra") return loop::Selection::ra;
    if (name == "nn") return loop::Selection::nn;
    if (name == "co") return loop::Selection::co;
    if (name == "cn") return loop::Selection::cn;
    throw ConfigError("unknown selection strategy: " + name);
}

std::map<std::string, std::string> echo_config(const LoopOpts& o,
                                               const data::EpisodeSpec& spec,
                                               int episodes, int jobs) {
    std::map<std::string, std::string> m;
    m["variant"] = o.variant;
    m["selection"] = o.selection;
    m["penalty"] = o.penalty;
    m["reduce"] = o.reduce;
    m["classifier"] = o.classifier;
    m["per_class_per_iter"] = std::to_string(o.per_class_per_iter);
    m["total_cap"] = std::to_string(o.total_cap);
    m["d"] = std::to_string(o.d);
    m["k_lle"] = std::to_string(o.k_lle);
    m["grid_count"] = std::to_string(o.grid_count);
    m["grid_ratio"] = std::to_string(o.grid_ratio);
    m["tol"] = std::to_string(o.tol);
    m["alpha"] = std::to_string(o.alpha);
    m["normalize"] = o.no_normalize ? "0" : "1";
    m["ways"] = std::to_string(spec.ways);
    m["shots"] = std::to_string(spec.shots);
    m["queries"] = std::to_string(spec.queries);
    m["unlabeled"] = std::to_string(spec.unlabeled);
    m["mode"] = spec.mode == data::EpisodeMode::transductive ? "transductive" : "semi";
    m["episodes"] = std::to_string(episodes);
    m["jobs"] = std::to_string(jobs);
    return m;
}

int cmd_synth(int ways, int per_class, int dim, double sep, double sigma,
              std::uint64_t seed, const std::string& out, const std::string& fmt) {
    const auto store = data::synth_gaussian(ways, per_class, dim, sep, sigma, seed);
    data::save_features(store, out, format_for(out, fmt));
    std::printf("n=%lld D=%lld c=%d\n", static_cast<long long>(store.size()),
                static_cast<long long>(store.dim()), store.class_count);
    return kExitOk;
}

int finish_run(const report::RunHeader& header,
               const std::vector<std::pair<std::string, loop::AccuracyReport>>& sections,
               const std::string& out, const std::string& format) {
    const std::string text = format == "csv" ? report::run_report_csv(header, sections)
                                             : report::run_report_json(header, sections);
    if (out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        report::write_text(text, out);
    }
    long flagged = 0, total = 0;
    for (const auto& [name, rep] : sections) {
        flagged += rep.nonconverged_grid_points;
        total += rep.total_grid_points;
    }
    if (total > 0 &&
        static_cast<double>(flagged) / static_cast<double>(total) >
            kNonConvergenceThreshold) {
        std::fprintf(stderr, "non-convergence threshold exceeded: %ld/%ld grid points\n",
                     flagged, total);
        return kExitNonConvergence;
    }
    return kExitOk;
}

}  // namespace

int cli_main(int argc, char** argv) {
    CLI::App app{"Instance-credibility self-taught few-shot learning toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic feature store");
    int s_ways = 5, s_per_class = 100, s_dim = 64;
    double s_sep = 6.0, s_sigma = 1.0;
    std::uint64_t s_seed = 1;
    std::string s_out, s_fmt = "auto";
    synth->add_option("--ways", s_ways)->check(CLI::Range(2, 1 << 20));
    synth->add_option("--per-class", s_per_class)->check(CLI::PositiveNumber);
    synth->add_option("--dim", s_dim)->check(CLI::PositiveNumber);
    synth->add_option("--sep", s_sep)->check(CLI::NonNegativeNumber);
    synth->add_option("--sigma", s_sigma)->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", s_seed);
    synth->add_option("--out", s_out)->required();
    synth->add_option("--format", s_fmt)->check(CLI::IsMember({"auto", "csv", "icif"}));

    // run
    auto* run = app.add_subcommand("run", "Run self-taught episodes and report accuracy");
    std::string r_config;
    run->add_option("--config", r_config,
                    "Key-value configuration file; command-line flags override it");
    std::string r_features, r_features_fmt = "auto", r_out, r_format = "json",
                r_mode = "transductive", r_compare;
    int r_episodes = 2000, r_ways = 5, r_shots = 1, r_queries = 15, r_unlabeled = 0,
        r_jobs = 1;
    std::uint64_t r_seed = 1;
    LoopOpts r_opts;
    run->add_option("--features", r_features)->required();
    run->add_option("--features-format", r_features_fmt)
        ->check(CLI::IsMember({"auto", "csv", "icif"}));
    run->add_option("--episodes", r_episodes)->check(CLI::PositiveNumber);
    run->add_option("--ways", r_ways)->check(CLI::Range(2, 1 << 20));
    run->add_option("--shots", r_shots)->check(CLI::PositiveNumber);
    run->add_option("--queries", r_queries)->check(CLI::NonNegativeNumber);
    run->add_option("--unlabeled", r_unlabeled)->check(CLI::NonNegativeNumber);
    run->add_option("--mode", r_mode)->check(CLI::IsMember({"transductive", "semi"}));
    run->add_option("--seed", r_seed, "Master seed; per-episode seed = master ^ index");
    run->add_option("--jobs", r_jobs)->check(CLI::PositiveNumber);
    run->add_option("--out", r_out);
    run->add_option("--format", r_format)->check(CLI::IsMember({"json", "csv"}));
    run->add_option("--compare", r_compare,
                    "Also run this selection strategy on the same episodes")
        ->check(CLI::IsMember({"ici", "ra", "nn", "co", "cn"}));
    add_loop_options(run, r_opts);

    // theory
    auto* theory_cmd = app.add_subcommand("theory", "Identifiability studies");
    theory_cmd->require_subcommand(1);

    auto* recover = theory_cmd->add_subcommand("recover", "Planted support-recovery trials");
    int t_trials = 200, t_n = 30, t_d = 3, t_c = 3, t_flips = 2;
    double t_sigma = 0.05;
    std::uint64_t t_seed = 1;
    std::string t_out;
    recover->add_option("--trials", t_trials)->check(CLI::PositiveNumber);
    recover->add_option("--n", t_n)->check(CLI::PositiveNumber);
    recover->add_option("--d", t_d)->check(CLI::PositiveNumber);
    recover->add_option("--c", t_c)->check(CLI::Range(2, 1 << 20));
    recover->add_option("--flips", t_flips)->check(CLI::NonNegativeNumber);
    recover->add_option("--sigma", t_sigma)->check(CLI::NonNegativeNumber);
    recover->add_option("--seed", t_seed);
    recover->add_option("--out", t_out);

    auto* freq = theory_cmd->add_subcommand("freq", "Condition-frequency study");
    std::string f_features, f_features_fmt = "auto", f_out;
    int f_episodes = 100, f_ways = 5, f_shots = 1, f_queries = 15, f_unlabeled = 0;
    std::string f_mode = "transductive";
    std::uint64_t f_seed = 1;
    LoopOpts f_opts;
    freq->add_option("--features", f_features)->required();
    freq->add_option("--features-format", f_features_fmt)
        ->check(CLI::IsMember({"auto", "csv", "icif"}));
    freq->add_option("--episodes", f_episodes)->check(CLI::NonNegativeNumber);
    freq->add_option("--ways", f_ways)->check(CLI::Range(2, 1 << 20));
    freq->add_option("--shots", f_shots)->check(CLI::PositiveNumber);
    freq->add_option("--queries", f_queries)->check(CLI::NonNegativeNumber);
    freq->add_option("--unlabeled", f_unlabeled)->check(CLI::NonNegativeNumber);
    freq->add_option("--mode", f_mode)->check(CLI::IsMember({"transductive", "semi"}));
    freq->add_option("--seed", f_seed);
    freq->add_option("--out", f_out);
    add_loop_options(freq, f_opts);

    auto* lambda_cmd = theory_cmd->add_subcommand("lambda", "Evaluate the theorem lambda");
    double l_sigma = 1.0, l_mu = 1.0, l_eta = 1.0;
    int l_c = 5, l_n = 20;
    lambda_cmd->add_option("--sigma", l_sigma)->check(CLI::NonNegativeNumber);
    lambda_cmd->add_option("--mu", l_mu);
    lambda_cmd->add_option("--eta", l_eta);
    lambda_cmd->add_option("--c", l_c)->check(CLI::PositiveNumber);
    lambda_cmd->add_option("--n", l_n)->check(CLI::PositiveNumber);

    auto* hist = theory_cmd->add_subcommand(
        "hist", "Pooled residual histogram of the episode regressions");
    std::string h_features, h_features_fmt = "auto", h_out;
    int h_episodes = 100, h_ways = 5, h_shots = 1, h_queries = 15, h_bins = 101;
    std::uint64_t h_seed = 1;
    LoopOpts h_opts;
    hist->add_option("--features", h_features)->required();
    hist->add_option("--features-format", h_features_fmt)
        ->check(CLI::IsMember({"auto", "csv", "icif"}));
    hist->add_option("--episodes", h_episodes)->check(CLI::PositiveNumber);
    hist->add_option("--ways", h_ways)->check(CLI::Range(2, 1 << 20));
    hist->add_option("--shots", h_shots)->check(CLI::PositiveNumber);
    hist->add_option("--queries", h_queries)->check(CLI::PositiveNumber);
    hist->add_option("--bins", h_bins)->check(CLI::PositiveNumber);
    hist->add_option("--seed", h_seed);
    hist->add_option("--out", h_out)->required();
    add_loop_options(hist, h_opts);

    // path
    auto* path_cmd = app.add_subcommand("path", "Dump the regularization path of one episode");
    std::string p_features, p_features_fmt = "auto", p_out, p_vanish_out,
                p_mode = "transductive";
    int p_ways = 5, p_shots = 1, p_queries = 15, p_unlabeled = 0;
    std::uint64_t p_seed = 1;
    LoopOpts p_opts;
    path_cmd->add_option("--features", p_features)->required();
    path_cmd->add_option("--features-format", p_features_fmt)
        ->check(CLI::IsMember({"auto", "csv", "icif"}));
    path_cmd->add_option("--ways", p_ways)->check(CLI::Range(2, 1 << 20));
    path_cmd->add_option("--shots", p_shots)->check(CLI::PositiveNumber);
    path_cmd->add_option("--queries", p_queries)->check(CLI::NonNegativeNumber);
    path_cmd->add_option("--unlabeled", p_unlabeled)->check(CLI::NonNegativeNumber);
    path_cmd->add_option("--mode", p_mode)->check(CLI::IsMember({"transductive", "semi"}));
    path_cmd->add_option("--seed", p_seed);
    path_cmd->add_option("--out", p_out)->required();
    path_cmd->add_option("--vanish-out", p_vanish_out);
    add_loop_options(path_cmd, p_opts);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitConfig;
    }

    try {
        if (*synth) {
            return cmd_synth(s_ways, s_per_class, s_dim, s_sep, s_sigma, s_seed, s_out,
                             s_fmt);
        }

        if (*run) {
            const auto store =
                data::load_features(r_features, format_for(r_features, r_features_fmt));
            data::EpisodeSpec spec;
            spec.ways = r_ways;
            spec.shots = r_shots;
            spec.queries = r_queries;
            spec.unlabeled = r_unlabeled;
            spec.mode = r_mode == "semi" ? data::EpisodeMode::semi_supervised
                                         : data::EpisodeMode::transductive;

            report::RunHeader header;
            header.config = echo_config(r_opts, spec, r_episodes, r_jobs);
            header.master_seed = r_seed;
            header.input_file = r_features;
            header.input_hash = report::fnv1a_file(r_features);

            std::vector<std::pair<std::string, loop::AccuracyReport>> sections;
            auto run_one = [&](const std::string& name, loop::Selection sel) {
                auto cfg = to_config(r_opts, r_seed);
                cfg.selection = sel;
                const auto results =
                    loop::run_episodes(store, spec, cfg, r_episodes, r_seed, r_jobs);
                sections.emplace_back(name, loop::evaluate(results));
            };
            run_one(r_opts.selection, parse_selection(r_opts.selection));
            if (!r_compare.empty() && r_compare != r_opts.selection) {
                run_one(r_compare, parse_selection(r_compare));
            }
            return finish_run(header, sections, r_out, r_format);
        }

        if (*recover) {
            std::vector<std::pair<std::uint64_t, theory::ConditionReport>> trials;
            theory::TrialParams params;
            params.n = t_n;
            params.d = t_d;
            params.c = t_c;
            params.flips = t_flips;
            params.sigma = t_sigma;
            long verified = 0, recovered = 0, subset_ok = 0, c12 = 0;
            for (int t = 0; t < t_trials; ++t) {
                const auto rep = theory::support_recovery_trial(
                    params, t_seed ^ static_cast<std::uint64_t>(t));
                if (rep.c1 && rep.c2) {
                    ++c12;
                    if (rep.s_hat_subset_of_s) ++subset_ok;
                }
                if (rep.c1 && rep.c2 && rep.c3) {
                    ++verified;
                    if (rep.support_exact && rep.sign_consistent) ++recovered;
                }
                trials.emplace_back(t_seed ^ static_cast<std::uint64_t>(t), rep);
            }
            if (!t_out.empty()) theory::write_trial_log_csv(trials, t_out);
            std::printf("trials=%d verified=%ld recovery_rate=%.17g subset_rate=%.17g\n",
                        t_trials, verified,
                        verified > 0 ? static_cast<double>(recovered) /
                                           static_cast<double>(verified)
                                     : 0.0,
                        c12 > 0 ? static_cast<double>(subset_ok) / static_cast<double>(c12)
                                : 0.0);
            return kExitOk;
        }

        if (*freq) {
            const auto store =
                data::load_features(f_features, format_for(f_features, f_features_fmt));
            data::EpisodeSpec spec;
            spec.ways = f_ways;
            spec.shots = f_shots;
            spec.queries = f_queries;
            spec.unlabeled = f_unlabeled;
            spec.mode = f_mode == "semi" ? data::EpisodeMode::semi_supervised
                                         : data::EpisodeMode::transductive;
            const auto cfg = to_config(f_opts, f_seed);
            const auto table =
                theory::condition_frequency_study(store, spec, cfg, f_episodes, f_seed);
            if (!f_out.empty()) theory::write_frequency_csv(table, f_out);
            static const char* kBuckets[4] = {"none", "c1", "c1_c2", "all"};
            for (int b = 0; b < 4; ++b) {
                const auto bi = static_cast<std::size_t>(b);
                std::printf("%s improved=%ld total=%ld\n", kBuckets[b], table.improved[bi],
                            table.total[bi]);
            }
            return kExitOk;
        }

        if (*lambda_cmd) {
            std::printf("%.17g\n", theory::theorem_lambda(l_sigma, l_mu, l_eta, l_c, l_n));
            return kExitOk;
        }

        if (*hist) {
            const auto store =
                data::load_features(h_features, format_for(h_features, h_features_fmt));
            data::EpisodeSpec spec;
            spec.ways = h_ways;
            spec.shots = h_shots;
            spec.queries = h_queries;
            spec.mode = data::EpisodeMode::transductive;
            const auto cfg = to_config(h_opts, h_seed);

            // Pool residuals of the pooled least-squares fit (gamma = 0):
            // what is left for the incidental parameters and noise to explain.
            std::vector<double> pooled;
            for (int e = 0; e < h_episodes; ++e) {
                const auto ep = data::sample_episode(
                    store, spec, h_seed ^ static_cast<std::uint64_t>(e));
                const double reg = cfg.logreg_reg >= 0.0
                                       ? cfg.logreg_reg
                                       : 1.0 / static_cast<double>(ep.support_x.rows());
                const auto model =
                    clf::fit_logreg(ep.support_x, ep.support_y, ep.ways, reg);
                const auto preds = clf::predict(model, ep.unlabeled_x);

                const Eigen::Index ns = ep.support_x.rows();
                const Eigen::Index nu = ep.unlabeled_x.rows();
                Matrix all_x(ns + nu, ep.support_x.cols());
                all_x.topRows(ns) = ep.support_x;
                all_x.bottomRows(nu) = ep.unlabeled_x;
                const Matrix reduced = loop::reduce_for_ici(all_x, cfg);

                IntVector labels(static_cast<std::size_t>(ns + nu));
                for (Eigen::Index i = 0; i < ns; ++i) {
                    labels[static_cast<std::size_t>(i)] =
                        ep.support_y[static_cast<std::size_t>(i)];
                }
                for (Eigen::Index u = 0; u < nu; ++u) {
                    labels[static_cast<std::size_t>(ns + u)] =
                        preds[static_cast<std::size_t>(u)].label;
                }
                const Matrix Y = data::one_hot(labels, ep.ways);
                const Matrix beta = path::beta_hat(
                    reduced, Y, Matrix::Zero(Y.rows(), Y.cols()),
                    path::default_rcond(reduced.rows(), reduced.cols()));
                const Matrix R = Y - reduced * beta;
                for (Eigen::Index i = 0; i < R.rows(); ++i) {
                    for (Eigen::Index j = 0; j < R.cols(); ++j) {
                        pooled.push_back(R(i, j));
                    }
                }
            }
            Matrix residuals(static_cast<Eigen::Index>(pooled.size()), 1);
            for (std::size_t i = 0; i < pooled.size(); ++i) {
                residuals(static_cast<Eigen::Index>(i), 0) = pooled[i];
            }
            const auto hgram = theory::bin_residuals(residuals, h_bins);
            theory::write_histogram_csv(hgram, h_out);
            std::printf("residuals=%ld mean=%.17g variance=%.17g out=%s\n", hgram.total,
                        hgram.mean, hgram.variance, h_out.c_str());
            return kExitOk;
        }

        if (*path_cmd) {
            const auto store =
                data::load_features(p_features, format_for(p_features, p_features_fmt));
            data::EpisodeSpec spec;
            spec.ways = p_ways;
            spec.shots = p_shots;
            spec.queries = p_queries;
            spec.unlabeled = p_unlabeled;
            spec.mode = p_mode == "semi" ? data::EpisodeMode::semi_supervised
                                         : data::EpisodeMode::transductive;
            const auto ep = data::sample_episode(store, spec, p_seed);
            const auto cfg = to_config(p_opts, p_seed);

            // one ranking pass: classifier, pseudo-labels, path, selection
            const double reg = cfg.logreg_reg >= 0.0
                                   ? cfg.logreg_reg
                                   : 1.0 / static_cast<double>(ep.support_x.rows());
            const auto model = clf::fit_logreg(ep.support_x, ep.support_y, ep.ways, reg);
            const auto preds = clf::predict(model, ep.unlabeled_x);

            const Eigen::Index ns = ep.support_x.rows();
            const Eigen::Index nu = ep.unlabeled_x.rows();
            Matrix all_x(ns + nu, ep.support_x.cols());
            all_x.topRows(ns) = ep.support_x;
            all_x.bottomRows(nu) = ep.unlabeled_x;
            const Matrix reduced = loop::reduce_for_ici(all_x, cfg);

            IntVector labels(static_cast<std::size_t>(ns + nu));
            std::vector<double> conf(static_cast<std::size_t>(ns + nu), 1.0);
            for (Eigen::Index i = 0; i < ns; ++i) {
                labels[static_cast<std::size_t>(i)] =
                    ep.support_y[static_cast<std::size_t>(i)];
            }
            for (Eigen::Index u = 0; u < nu; ++u) {
                const auto& pr = preds[static_cast<std::size_t>(u)];
                labels[static_cast<std::size_t>(ns + u)] = pr.label;
                conf[static_cast<std::size_t>(ns + u)] = pr.proba(pr.label);
            }
            const Matrix Y = data::one_hot(labels, ep.ways);

            path::GammaPath gp;
            std::string variant_name;
            if (cfg.variant == loop::Variant::icir) {
                const auto ann = path::annihilator(
                    reduced, path::default_rcond(reduced.rows(), reduced.cols()));
                const auto grid = path::LambdaGrid::geometric(
                    path::lambda_max(ann, Y), cfg.grid_count, cfg.grid_ratio);
                gp = path::solve_path(ann, Y, grid, cfg.penalty,
                                      {.tol = cfg.tol, .max_iter = cfg.max_iter});
                variant_name = "linear";
            } else {
                logit::LogitPathConfig lcfg;
                lcfg.alpha = cfg.alpha;
                lcfg.grid_count = cfg.grid_count;
                lcfg.grid_ratio = cfg.grid_ratio;
                lcfg.tol = cfg.tol;
                gp = logit::solve_logit_path(reduced, Y, lcfg, cfg.penalty);
                variant_name = "logit";
            }

            const auto ranking = path::rank_instances(gp, conf);
            std::vector<char> eligible(static_cast<std::size_t>(ns + nu), 0);
            for (Eigen::Index u = 0; u < nu; ++u) {
                eligible[static_cast<std::size_t>(ns + u)] = 1;
            }
            const auto picks = loop::select_subset(ranking, labels, eligible,
                                                   cfg.per_class_per_iter, ep.ways);

            std::vector<int> selected(static_cast<std::size_t>(ns + nu), 0);
            for (Eigen::Index i = 0; i < ns; ++i) {
                selected[static_cast<std::size_t>(i)] = 1;
            }
            for (int row : picks) selected[static_cast<std::size_t>(row)] = 1;
            std::vector<int> correct(static_cast<std::size_t>(ns + nu), 1);
            const auto& truth = ep.hidden_truth_for_diagnostics();
            for (Eigen::Index u = 0; u < nu; ++u) {
                correct[static_cast<std::size_t>(ns + u)] =
                    labels[static_cast<std::size_t>(ns + u)] ==
                            truth[static_cast<std::size_t>(u)]
                        ? 1
                        : 0;
            }

            path::dump_path_csv(gp, p_out, variant_name);
            const std::string vanish_file =
                p_vanish_out.empty() ? p_out + ".vanish.csv" : p_vanish_out;
            path::dump_vanish_csv(gp, vanish_file, &selected, &correct);
            std::printf("instances=%lld grid=%zu out=%s vanish=%s\n",
                        static_cast<long long>(ns + nu), gp.grid.values.size(),
                        p_out.c_str(), vanish_file.c_str());
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return kExitOk;
}

namespace {

// Expands `run --config FILE` into explicit --key=value tokens so the parser
// sees one flat command line. Flags given on the command line win; unknown
// config keys surface as ordinary parse errors.
std::vector<std::string> merge_config_tokens(const std::vector<std::string>& args) {
    if (args.size() < 2 || args[1] != "run") return args;
    std::string config_path;
    for (std::size_t i = 2; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
        }
    }
    if (config_path.empty()) return args;

    std::ifstream in(config_path);
    if (!in) throw ici::ConfigError("cannot read config file " + config_path);
    std::vector<std::string> merged = args;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const auto last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ici::ConfigError(config_path + ": line " + std::to_string(lineno) +
                                   ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        auto trim = [](std::string& t) {
            const auto a = t.find_first_not_of(" \t");
            const auto b = t.find_last_not_of(" \t");
            t = a == std::string::npos ? std::string() : t.substr(a, b - a + 1);
            if (t.size() >= 2 && ((t.front() == '"' && t.back() == '"') ||
                                  (t.front() == '\'' && t.back() == '\''))) {
                t = t.substr(1, t.size() - 2);
            }
        };
        trim(key);
        trim(value);
        const std::string flag = "--" + key;
        bool overridden = false;
        for (std::size_t i = 2; i < args.size(); ++i) {
            if (args[i] == flag || args[i].rfind(flag + "=", 0) == 0) {
                overridden = true;
                break;
            }
        }
        if (!overridden) merged.push_back(flag + "=" + value);
    }
    return merged;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    try {
        args = merge_config_tokens(args);
    } catch (const ici::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    }
    std::vector<char*> cargv;
    cargv.reserve(args.size());
    for (auto& a : args) cargv.push_back(a.data());
    return cli_main(static_cast<int>(cargv.size()), cargv.data());
}
