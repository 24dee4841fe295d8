#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ici/common.hpp"

namespace ici::data {

/// All instance features plus class labels for one dataset split.
/// Immutable after construction; safe to share across episode workers.
struct FeatureStore {
    Matrix features;          // N x D
    IntVector labels;         // N entries, each in [0, class_count)
    int class_count = 0;
    std::string meta;

    Eigen::Index size() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }

    /// Row indices of each class, in store order.
    std::vector<std::vector<int>> indices_by_class() const;
};

enum class EpisodeMode { transductive, semi_supervised };

/// One c-way-s-shot task description. Counts are per class.
struct EpisodeSpec {
    int ways = 5;
    int shots = 1;
    int queries = 15;
    int unlabeled = 0;  // ignored in transductive mode (query pool is reused)
    EpisodeMode mode = EpisodeMode::transductive;
};

/// Sampled episode. Hidden true labels of the unlabeled pool are carried for
/// diagnostics only; solver/classifier paths receive plain matrices and can
/// never reach them.
struct Episode {
    Matrix support_x;             // (c*s) x D
    IntVector support_y;          // episode-local class ids 0..c-1
    Matrix query_x;               // (c*q) x D
    IntVector query_y;            // held out for scoring
    Matrix unlabeled_x;           // U x D
    std::uint64_t seed = 0;
    int ways = 0;

    IntVector support_rows;       // indices into the originating store
    IntVector query_rows;
    IntVector unlabeled_rows;

    const IntVector& hidden_truth_for_diagnostics() const { return unlabeled_truth_; }
    void set_hidden_truth(IntVector t) { unlabeled_truth_ = std::move(t); }

private:
    IntVector unlabeled_truth_;   // episode-local ids, diagnostics only
};

enum class FeatureFormat { csv, icif };

FeatureStore load_features(const std::filesystem::path& path, FeatureFormat format);

/// Writes the store in the declared format. ICIF is the bit-exact format:
/// magic "ICIF", version u32=1, n u32, D u32, c u32, n little-endian u32
/// labels, then n*D little-endian f32 features row-major.
void save_features(const FeatureStore& store, const std::filesystem::path& path,
                   FeatureFormat format);

/// Deterministic in (store, spec, seed). Per-class index pools are shuffled
/// and split into support / query / unlabeled without overlap (transductive
/// mode aliases the unlabeled pool to the query pool).
Episode sample_episode(const FeatureStore& store, const EpisodeSpec& spec,
                       std::uint64_t seed);

/// Spherical-Gaussian synthetic stand-in for backbone features: class means
/// rejection-sampled on the unit sphere scaled by `separation` until all
/// pairwise distances reach `separation`; instances are mean + isotropic
/// noise of scale `noise_sigma`. Output is quantized to f32 so ICIF
/// round-trips are bit-exact.
FeatureStore synth_gaussian(int c, int per_class, int D, double separation,
                            double noise_sigma, std::uint64_t seed);

/// One-hot rows; ids must be < c.
Matrix one_hot(const IntVector& labels, int c);

/// Row-wise L2 normalization; all-zero rows pass through unchanged.
Matrix l2_normalize(const Matrix& X);

}  // namespace ici::data
