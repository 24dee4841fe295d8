#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "ici/classifiers.hpp"
#include "ici/common.hpp"
#include "ici/datamodel.hpp"
#include "ici/dimreduce.hpp"
#include "ici/icilogit.hpp"
#include "ici/icipath.hpp"

namespace ici::loop {

enum class Variant { icir, icic };
enum class Selection { ici, ra, nn, co, cn };
enum class ClassifierKind { lr, knn };

struct LoopConfig {
    Variant variant = Variant::icir;
    Selection selection = Selection::ici;
    int per_class_per_iter = 5;
    int total_cap = -1;  // overall selected-instance cap; < 0 means none

    dimred::Method reduce = dimred::Method::lle;
    int d = 5;
    int k_lle = 5;
    double lle_reg = 1e-3;
    bool normalize = true;                      // l2-normalize before reduction
    bool recompute_reduction_per_iter = false;  // geometry is label-free; off by default

    path::Penalty penalty = path::Penalty::group_l2;
    int grid_count = 100;
    double grid_ratio = 1e-3;
    double tol = 1e-6;
    int max_iter = 10000;
    double alpha = 0.5;  // icic only

    ClassifierKind classifier = ClassifierKind::lr;
    double logreg_reg = -1.0;  // < 0 means 1/m
    int knn_k = 1;

    std::uint64_t seed = 0;  // master seed (random-selection baseline etc.)
};

struct IterationRecord {
    std::vector<int> selected;  // unlabeled-pool indices picked this iteration
    IntVector pseudo_labels;    // labels they were assigned
    int correct = 0;            // matches vs hidden truth (diagnostics only)
};

struct EpisodeResult {
    double query_accuracy = 0.0;
    double base_accuracy = 0.0;  // support-only classifier on the query set
    int iterations = 0;
    bool converged = true;
    std::vector<IterationRecord> records;
    long nonconverged_grid_points = 0;
    long total_grid_points = 0;
};

/// Algorithm: train classifier on support (original features), pseudo-label
/// the unlabeled pool, rank by the configured strategy on reduced features
/// over [support; unlabeled] with Y = [Y_s; Y_u], move the most credible
/// per-class picks into the support with their pseudo-labels, repeat until
/// everything is selected, the cap is hit, or an iteration selects nothing.
EpisodeResult run_episode(const data::Episode& ep, const LoopConfig& cfg);

/// The ICI pre-processing pipeline (normalize then reduce), clamped to what
/// the pool size allows. Classifiers keep the original features.
Matrix reduce_for_ici(const Matrix& X, const LoopConfig& cfg);

/// Greedy quota walk over the ranking. `eligible` flags rankable rows that
/// may still be picked; rows are counted against their pseudo-class quota.
/// `budget` < 0 means unlimited.
std::vector<int> select_subset(const path::CredibilityRanking& ranking,
                               const IntVector& pseudo_labels,
                               const std::vector<char>& eligible, int per_class, int c,
                               int budget = -1);

struct RankContext {
    const Matrix* reduced = nullptr;            // all rows, reduced features
    const IntVector* labels = nullptr;          // support labels + pseudo-labels
    const std::vector<char>* is_labeled = nullptr;  // support rows flag
    const std::vector<double>* confidences = nullptr;
    const path::GammaPath* ici_path = nullptr;  // needed by cn
    std::uint64_t seed = 0;                     // needed by ra
};

/// ra: seeded shuffle; nn: distance to the nearest labeled instance of the
/// same (pseudo-)class; co: descending classifier confidence; cn: ascending
/// ||gamma_i|| at the smallest grid lambda.
path::CredibilityRanking baseline_rank(Selection strategy, const RankContext& ctx);

struct AccuracyReport {
    int episodes = 0;
    double mean_accuracy = 0.0;
    double ci95 = 0.0;  // 1.96 * stddev / sqrt(E)
    std::vector<double> per_episode;
    std::vector<double> selection_precision_by_iter;
    std::vector<long> selected_by_iter;
    double mean_base_accuracy = 0.0;
    long nonconverged_grid_points = 0;
    long total_grid_points = 0;
};

AccuracyReport evaluate(const std::vector<EpisodeResult>& results);

/// Runs `episodes` episodes with per-episode seed = master_seed ^ index,
/// fanned out over `jobs` workers; results are aggregated by index so the
/// outcome is independent of completion order.
std::vector<EpisodeResult> run_episodes(const data::FeatureStore& store,
                                        const data::EpisodeSpec& spec,
                                        const LoopConfig& cfg, int episodes,
                                        std::uint64_t master_seed, int jobs = 1);

}  // namespace ici::loop
